//! Communication graphs, gossip matrices and averaging protocols.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Graph::new(n);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Adds `{u, v}`; returns whether it was new.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<bool> {
        if u >= self.n || v >= self.n {
            return Err(Error::InvalidParameter(format!(
                "edge ({u}, {v}) outside a graph on {} nodes",
                self.n
            )));
        }
        if u == v {
            return Err(Error::InvalidParameter(format!("self-loop at node {u}")));
        }
        Ok(self.edges.insert((u.min(v), u.max(v))))
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "a ring needs n >= 3, got {n}"
            )));
        }
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn path(n: usize) -> Result<Self> {
        Graph::from_edges(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Graph::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Erdos-Renyi graph; each pair is an edge with probability `p`.
    pub fn random<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        let mut g = Graph::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    g.add_edge(i, j)?;
                }
            }
        }
        Ok(g)
    }

    /// Adds `count` distinct edges chosen uniformly among the current
    /// non-edges (fewer if the graph fills up).
    pub fn add_random_edges<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) -> Result<()> {
        let mut candidates: Vec<(usize, usize)> = (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|e| !self.edges.contains(e))
            .collect();
        candidates.shuffle(rng);
        for (u, v) in candidates.into_iter().take(count) {
            self.add_edge(u, v)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

/// Parses `u v` pairs, one per line, 0-indexed. Blank lines and text after
/// `#` are ignored. The node count is one more than the largest id.
pub fn parse_edge_list(text: &str, origin: &str) -> Result<Graph> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            origin: origin.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(format!(
                "expected two node ids, got {}",
                fields.len()
            )));
        }
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(format!("bad node id {s:?}: {e}")))
        };
        let (u, v) = (id(fields[0])?, id(fields[1])?);
        if u == v {
            return Err(parse_err(format!("self-loop at node {u}")));
        }
        pairs.push((u, v));
    }
    let n = pairs.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    Graph::from_edges(n, pairs)
}

pub fn read_edge_list(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, &path.display().to_string())
}

/// Symmetric doubly stochastic weights with their absolute spectral gap.
#[derive(Debug, Clone)]
pub struct GossipMatrix {
    w: DMatrix<f64>,
    gamma: f64,
}

impl GossipMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let gamma = spectral_gap(&w)?;
        Ok(GossipMatrix { w, gamma })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Heavy-ball coefficient `(1 - sqrt(g(2-g))) / (1 + sqrt(g(2-g)))`.
    pub fn momentum(&self) -> f64 {
        let s = (self.gamma * (2.0 - self.gamma)).sqrt();
        (1.0 - s) / (1.0 + s)
    }
}

fn validate_weights(w: &DMatrix<f64>) -> Result<()> {
    if !w.is_square() || w.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "gossip matrix must be square and nonempty, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let asym = (w - w.transpose()).norm();
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    if let Some(v) = w.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::NotDoublyStochastic(format!("negative entry {v}")));
    }
    for (i, row) in w.row_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::NotDoublyStochastic(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// `1 - max(|lambda_2|, |lambda_n|)`; 1 for a single node.
pub fn spectral_gap(w: &DMatrix<f64>) -> Result<f64> {
    validate_weights(w)?;
    let n = w.nrows();
    if n == 1 {
        return Ok(1.0);
    }
    let (values, _) = sorted_symmetric_eigen(w.clone());
    Ok(1.0 - values[1].abs().max(values[n - 1].abs()))
}

/// Ring with self-weight 1/2 and neighbour weights 1/4.
pub fn ring_matrix(n: usize) -> Result<GossipMatrix> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "a ring needs n >= 3, got {n}"
        )));
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = 0.5;
        w[(i, (i + 1) % n)] = 0.25;
        w[(i, (i + n - 1) % n)] = 0.25;
    }
    GossipMatrix::new(w)
}

/// `w_ij = 1 / (1 + max(d_i, d_j))` on edges, remainder on the diagonal.
pub fn metropolis_matrix(g: &Graph) -> Result<GossipMatrix> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = g.n();
    let deg = g.degrees();
    let mut w = DMatrix::zeros(n, n);
    for (u, v) in g.edges() {
        let weight = 1.0 / (1.0 + deg[u].max(deg[v]) as f64);
        w[(u, v)] = weight;
        w[(v, u)] = weight;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    GossipMatrix::new(w)
}

/// `J / n`.
pub fn uniform_matrix(n: usize) -> Result<GossipMatrix> {
    GossipMatrix::new(DMatrix::from_element(n, n, 1.0 / n as f64))
}

fn mix(w: &DMatrix<f64>, values: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let mut acc = DMatrix::zeros(values[i].nrows(), values[i].ncols());
            for j in 0..n {
                let wij = w[(i, j)];
                if wij != 0.0 {
                    acc += &values[j] * wij;
                }
            }
            acc
        })
        .collect()
}

fn check_blocks(values: &[DMatrix<f64>], w: &GossipMatrix) -> Result<()> {
    if values.len() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} blocks for a network of {} agents",
            values.len(),
            w.n()
        )));
    }
    if let Some(first) = values.first() {
        if let Some(b) = values.iter().find(|b| b.shape() != first.shape()) {
            return Err(Error::DimensionMismatch(format!(
                "blocks of shapes {:?} and {:?}",
                first.shape(),
                b.shape()
            )));
        }
    }
    Ok(())
}

/// Heavy-ball gossip: `Y_{l+1} = (1 + w) W Y_l - w Y_{l-1}` with
/// `Y_{-1} = Y_0`, for `rounds` rounds.
pub fn acc_gossip(
    values: &[DMatrix<f64>],
    w: &GossipMatrix,
    rounds: usize,
) -> Result<Vec<DMatrix<f64>>> {
    if rounds == 0 {
        return Err(Error::InvalidParameter(
            "accelerated gossip needs L >= 1".into(),
        ));
    }
    check_blocks(values, w)?;
    let omega = w.momentum();
    let mut prev = values.to_vec();
    let mut cur = values.to_vec();
    for _ in 0..rounds {
        let mixed = mix(w.matrix(), &cur);
        let next: Vec<DMatrix<f64>> = mixed
            .into_iter()
            .zip(&prev)
            .map(|(m, p)| {
                if omega == 0.0 {
                    m
                } else {
                    m * (1.0 + omega) - p * omega
                }
            })
            .collect();
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(cur)
}

/// `rounds` applications of `Y <- W Y`.
pub fn plain_gossip(
    values: &[DMatrix<f64>],
    w: &GossipMatrix,
    rounds: usize,
) -> Result<Vec<DMatrix<f64>>> {
    check_blocks(values, w)?;
    let mut cur = values.to_vec();
    for _ in 0..rounds {
        cur = mix(w.matrix(), &cur);
    }
    Ok(cur)
}

pub fn block_mean(values: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(values[0].nrows(), values[0].ncols());
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

/// `max_i ||Y_i - mean||_F`.
pub fn max_deviation(values: &[DMatrix<f64>]) -> f64 {
    let mean = block_mean(values);
    values
        .iter()
        .map(|v| (v - &mean).norm())
        .fold(0.0, f64::max)
}
