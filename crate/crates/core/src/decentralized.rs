//! Decentralized power iteration over a simulated synchronous network.
//!
//! Agent `i` holds `A_i` and the target is the top-`k` subspace of
//! `A = n^{-1} sum_i A_i`. Each iteration every agent forms its local
//! half-step, the network gossips those blocks, and each agent
//! orthonormalizes what it received.

use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gossip::{acc_gossip, block_mean, plain_gossip, GossipMatrix, Graph};
use crate::linalg::{qr_unique, sorted_symmetric_eigen, spectral_norm, Frame, UpperTriangular};
use crate::power::{
    adaptive_beta, noise_norms, BetaMode, NoiseNorms, SpectralInstance, NOISE_CONSTANT,
};
use crate::rng::{gaussian_matrix, seeded};

/// Local matrices `A_1..A_n` with their mean and `M = max_i ||A_i||_2`.
#[derive(Debug, Clone)]
pub struct LocalMatrices {
    blocks: Vec<DMatrix<f64>>,
    mean: DMatrix<f64>,
    max_norm: f64,
}

impl LocalMatrices {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidParameter("no local matrices".into()));
        };
        let d = first.nrows();
        if let Some((i, b)) = blocks.iter().enumerate().find(|(_, b)| b.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!(
                "local matrix {i} is {}x{}, expected {d}x{d}",
                b.nrows(),
                b.ncols()
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            let asym = (b - b.transpose()).norm();
            if asym > 1e-10 * b.norm().max(1.0) {
                return Err(Error::NotSymmetric(asym).in_stage(format!("local matrix {i}")));
            }
        }
        let mean = block_mean(&blocks);
        let (values, _) = sorted_symmetric_eigen(mean.clone());
        if let Some(&low) = values.last() {
            if low < -1e-10 {
                return Err(Error::SpectrumOrderViolation(format!(
                    "mean matrix has negative eigenvalue {low}"
                )));
            }
        }
        let max_norm = blocks.iter().map(spectral_norm).fold(0.0, f64::max);
        Ok(LocalMatrices {
            blocks,
            mean,
            max_norm,
        })
    }

    /// One matrix per file, files taken in lexicographic order. Each file
    /// holds one whitespace-separated row per line.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let blocks = paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_dense(&text, &p.display().to_string())
            })
            .collect::<Result<Vec<_>>>()?;
        LocalMatrices::new(blocks)
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn d(&self) -> usize {
        self.mean.nrows()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// `max_i ||A_i||_2`.
    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    /// Eigendecomposition of the mean as a [`SpectralInstance`].
    pub fn mean_instance(&self, k: usize) -> Result<SpectralInstance> {
        let (values, vectors) = sorted_symmetric_eigen(self.mean.clone());
        let values = values.into_iter().map(|v| v.max(0.0)).collect();
        SpectralInstance::new(values, vectors, k)
    }
}

/// Parses a dense matrix with one whitespace-separated row per line.
pub fn parse_dense(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    origin: origin.to_string(),
                    line: i + 1,
                    message: format!("bad number {s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    origin: origin.to_string(),
                    line: i + 1,
                    message: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// `A_i = (n / m) Phi_i^T Phi_i` for the row blocks `Phi_i`.
pub fn split_covariance(phi: &DMatrix<f64>, partition: &[Range<usize>]) -> Result<LocalMatrices> {
    let m = phi.nrows();
    let n = partition.len();
    let mut covered = vec![false; m];
    for (i, range) in partition.iter().enumerate() {
        if range.is_empty() {
            return Err(Error::EmptyBlock(i));
        }
        if range.end > m {
            return Err(Error::InvalidParameter(format!(
                "block {i} ends at row {} but the data has {m} rows",
                range.end
            )));
        }
        for r in range.clone() {
            if std::mem::replace(&mut covered[r], true) {
                return Err(Error::InvalidParameter(format!("row {r} assigned twice")));
            }
        }
    }
    if let Some(r) = covered.iter().position(|c| !c) {
        return Err(Error::InvalidParameter(format!(
            "row {r} assigned to no agent"
        )));
    }
    let scale = n as f64 / m as f64;
    let blocks = partition
        .iter()
        .map(|range| {
            let rows = phi.rows(range.start, range.len());
            rows.transpose() * rows * scale
        })
        .collect();
    LocalMatrices::new(blocks)
}

/// Contiguous row ranges of (almost) equal sizes.
pub fn even_partition(m: usize, n: usize) -> Vec<Range<usize>> {
    (0..n).map(|i| (i * m / n)..((i + 1) * m / n)).collect()
}

/// Local pieces of `I + D^{-1/2} S D^{-1/2}`: agent `i` holds its own row and
/// column, scaled by `n` so that the mean is exactly the target.
pub fn laplacian_instance(g: &Graph) -> Result<LocalMatrices> {
    if !g.is_connected() || g.n() < 2 {
        return Err(Error::Disconnected);
    }
    let n = g.n();
    let deg = g.degrees();
    let adj = g.neighbors();
    let scale = n as f64;
    let blocks = (0..n)
        .map(|i| {
            let mut a = DMatrix::zeros(n, n);
            a[(i, i)] = scale;
            for &j in &adj[i] {
                let v = scale / (2.0 * ((deg[i] * deg[j]) as f64).sqrt());
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            a
        })
        .collect();
    LocalMatrices::new(blocks)
}

/// `I + D^{-1/2} S D^{-1/2}` assembled directly.
pub fn normalized_adjacency_shift(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let deg = g.degrees();
    let mut a = DMatrix::identity(n, n);
    for (u, v) in g.edges() {
        let w = 1.0 / ((deg[u] * deg[v]) as f64).sqrt();
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    a
}

/// Communication graph: the data graph plus `ceil(n ln n)` random extra edges.
pub fn communication_graph<R: Rng + ?Sized>(data: &Graph, rng: &mut R) -> Result<Graph> {
    let n = data.n();
    let extra = (n as f64 * (n as f64).ln()).ceil() as usize;
    let mut g = data.clone();
    g.add_random_edges(extra, rng)?;
    Ok(g)
}

/// `A_i = A + E_i` with symmetric Gaussian `E_i` summing to zero and
/// `||E_i||_F` about `spread * ||A||_2`.
pub fn perturbed_locals(
    inst: &SpectralInstance,
    n: usize,
    spread: f64,
    seed: u64,
) -> Result<LocalMatrices> {
    let d = inst.d();
    let a = inst.matrix();
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    let mut rng = seeded(seed);
    let raw: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let g = gaussian_matrix(d, d, &mut rng);
            (&g + g.transpose()) * 0.5
        })
        .collect();
    let centre = block_mean(&raw);
    let scale = spread * inst.lambda(1) / d as f64;
    let mut blocks: Vec<DMatrix<f64>> =
        raw.into_iter().map(|e| a + (e - &centre) * scale).collect();
    // the last block absorbs rounding so the mean is A up to one ulp-level sum
    if n > 1 {
        let others = blocks[..n - 1]
            .iter()
            .fold(DMatrix::zeros(d, d), |acc, b| acc + b);
        blocks[n - 1] = a * n as f64 - others;
    }
    LocalMatrices::new(blocks)
}

/// Rounds of accelerated gossip sufficient for the decentralized guarantee:
/// `ceil((6 / sqrt(gamma)) ln(11 sqrt(n k) (M / lambda_k)
/// (lambda_k / (lambda_k - 2 sqrt(beta))) / (alpha_0 eps)))`, at least 1.
#[allow(clippy::too_many_arguments)]
pub fn required_l(
    m: f64,
    lambda_k: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
    tan_theta0: f64,
    n: usize,
    k: usize,
) -> Result<usize> {
    let margin = lambda_k - 2.0 * beta.sqrt();
    if !(margin > 0.0) {
        return Err(Error::InvalidGap {
            lambda_k,
            threshold: 2.0 * beta.sqrt(),
        });
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need gamma in (0, 1] and eps in (0, 1), got {gamma}, {eps}"
        )));
    }
    let alpha0 = 1.0 / (1.0 + (eps / 2.0 + tan_theta0).powi(2)).sqrt();
    let argument =
        11.0 * ((n * k) as f64).sqrt() * (m / lambda_k) * (lambda_k / margin) / (alpha0 * eps);
    let rounds = (6.0 / gamma.sqrt() * argument.ln()).ceil();
    Ok(if rounds >= 1.0 { rounds as usize } else { 1 })
}

/// Local momentum estimate
/// `min_j [X_{t-1}^T (Y_t + beta_{t-1} X_{t-2} R_{t-1}^{-1})]_{jj}^2 / 4`.
///
/// The bracket undoes the local momentum term, leaving the gossiped
/// estimate of `A X_{t-1}`; no extra communication is needed.
pub fn decentralized_adaptive_beta(
    x_prev: &Frame,
    y: &DMatrix<f64>,
    x_prev2: &Frame,
    r_prev: &UpperTriangular,
    beta_prev: f64,
) -> Result<f64> {
    let product = if beta_prev == 0.0 {
        y.clone()
    } else {
        y + r_prev.solve_right(x_prev2.as_matrix())? * beta_prev
    };
    adaptive_beta(x_prev, &product)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecentralizedConfig {
    pub beta: BetaMode,
    /// Gossip rounds per iteration.
    pub rounds: usize,
    pub iterations: usize,
    pub eps: f64,
    pub c: f64,
    pub extra_column_seed: u64,
    pub keep_iterates: bool,
}

impl DecentralizedConfig {
    pub fn new(beta: BetaMode, rounds: usize, iterations: usize) -> Self {
        DecentralizedConfig {
            beta,
            rounds,
            iterations,
            eps: 1e-3,
            c: NOISE_CONSTANT,
            extra_column_seed: 0,
            keep_iterates: false,
        }
    }

    pub fn eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn keep_iterates(mut self, keep: bool) -> Self {
        self.keep_iterates = keep;
        self
    }

    pub fn extra_column_seed(mut self, seed: u64) -> Self {
        self.extra_column_seed = seed;
        self
    }
}

/// Per-agent iterate.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub x: Frame,
    pub x_prev: Frame,
    pub r: UpperTriangular,
    pub beta: f64,
}

/// One iteration of a network run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecentralizedRecord {
    pub t: usize,
    pub agent_sin: Vec<f64>,
    pub agent_cos: Vec<f64>,
    pub agent_tan: Vec<f64>,
    pub agent_beta: Vec<f64>,
    /// `max_i ||X_{i,t} - Xbar_t||_F`.
    pub consensus_err: f64,
    /// `sin theta_k` of the exact-average iterate.
    pub mean_sin: f64,
    /// Effective perturbation seen by the averaged iteration.
    pub noise: NoiseNorms,
    pub cond_a: bool,
    pub cond_b: bool,
}

impl DecentralizedRecord {
    /// Agent with the largest `sin theta_k` (lowest index on ties).
    pub fn worst_agent(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.agent_sin.iter().enumerate() {
            if s > self.agent_sin[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_sin(&self) -> f64 {
        self.agent_sin[self.worst_agent()]
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecentralizedTrace {
    pub records: Vec<DecentralizedRecord>,
    /// Per iteration, every agent's frame (when requested).
    pub iterates: Vec<Vec<Frame>>,
}

impl DecentralizedTrace {
    /// First `t` at which every agent has `sin theta_k <= tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.max_sin() <= tol)
            .map(|r| r.t)
    }

    pub fn max_consensus(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.consensus_err)
            .fold(0.0, f64::max)
    }

    pub fn violations(&self) -> (usize, usize) {
        self.records.iter().fold((0, 0), |(a, b), r| {
            (a + usize::from(!r.cond_a), b + usize::from(!r.cond_b))
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Scheme {
    Accelerated,
    Plain,
}

/// Accelerated decentralized power method.
pub fn adepm_run(
    locals: &LocalMatrices,
    reference: &SpectralInstance,
    w: &GossipMatrix,
    x0: &Frame,
    config: &DecentralizedConfig,
) -> Result<DecentralizedTrace> {
    run_network(locals, reference, w, x0, config, Scheme::Accelerated)
}

/// Gossip-based power method without momentum, using plain gossip.
pub fn depm_run(
    locals: &LocalMatrices,
    reference: &SpectralInstance,
    w: &GossipMatrix,
    x0: &Frame,
    rounds: usize,
    iterations: usize,
) -> Result<DecentralizedTrace> {
    let config = DecentralizedConfig::new(BetaMode::Fixed(0.0), rounds, iterations);
    run_network(locals, reference, w, x0, &config, Scheme::Plain)
}

fn run_network(
    locals: &LocalMatrices,
    reference: &SpectralInstance,
    w: &GossipMatrix,
    x0: &Frame,
    config: &DecentralizedConfig,
    scheme: Scheme,
) -> Result<DecentralizedTrace> {
    let n = locals.n();
    let d = locals.d();
    if w.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} local matrices but a gossip matrix on {} agents",
            w.n()
        )));
    }
    if reference.d() != d || x0.d() != d || x0.k() != reference.k() {
        return Err(Error::DimensionMismatch(format!(
            "local matrices are {d}x{d}, reference is {}x{} with k = {}, initial frame is {}x{}",
            reference.d(),
            reference.d(),
            reference.k(),
            x0.d(),
            x0.k()
        )));
    }
    if config.iterations == 0 {
        return Err(Error::InvalidParameter(
            "iteration budget must be >= 1".into(),
        ));
    }
    if matches!(scheme, Scheme::Accelerated) && config.rounds == 0 {
        return Err(Error::InvalidParameter(
            "accelerated gossip needs L >= 1".into(),
        ));
    }
    let adaptive = config.beta == BetaMode::Adaptive;
    let fixed_beta = match config.beta {
        BetaMode::Fixed(b) => b,
        BetaMode::Adaptive => 0.0,
    };
    let start = if adaptive {
        x0.extend_with_gaussian(&mut seeded(config.extra_column_seed))?
    } else {
        x0.clone()
    };
    let a = locals.mean();
    let gossip = |values: &[DMatrix<f64>]| match scheme {
        Scheme::Accelerated => acc_gossip(values, w, config.rounds),
        Scheme::Plain => plain_gossip(values, w, config.rounds),
    };
    let init_scale = match scheme {
        Scheme::Accelerated => 0.5,
        Scheme::Plain => 1.0,
    };

    // t = 0 -> 1
    let half: Vec<DMatrix<f64>> = locals
        .blocks()
        .par_iter()
        .map(|ai| ai * start.as_matrix() * init_scale)
        .collect();
    let mut y_bar = block_mean(&half);
    let received = gossip(&half)?;
    let factored = factor_all(&received, 1)?;
    let mut agents: Vec<AgentState> = factored
        .into_iter()
        .zip(&received)
        .map(|((x, r), y)| {
            let beta = if adaptive {
                adaptive_beta(&start, &(y * (1.0 / init_scale)))?
            } else {
                fixed_beta
            };
            Ok(AgentState {
                x,
                x_prev: start.clone(),
                r,
                beta,
            })
        })
        .collect::<Result<_>>()?;
    let (mut bar_x, mut bar_r) =
        qr_unique(&y_bar).map_err(|e| e.in_stage("network average").at_step(1))?;
    let mut bar_prev = start.clone();
    // the averaged first step has no perturbation beyond rounding
    let expected = a * start.as_matrix() * init_scale;
    let mut trace = DecentralizedTrace::default();
    let mut bar_cos_prev = reference.angles(&start)?.cos_k;
    let record = |trace: &mut DecentralizedTrace,
                  t: usize,
                  agents: &[AgentState],
                  bar_x: &Frame,
                  xi: &DMatrix<f64>,
                  beta_eff: f64,
                  bar_cos_prev: f64|
     -> Result<f64> {
        let mut rec = DecentralizedRecord {
            t,
            agent_sin: Vec::with_capacity(n),
            agent_cos: Vec::with_capacity(n),
            agent_tan: Vec::with_capacity(n),
            agent_beta: Vec::with_capacity(n),
            consensus_err: 0.0,
            mean_sin: 0.0,
            noise: noise_norms(xi, reference),
            cond_a: true,
            cond_b: true,
        };
        for agent in agents {
            let angles = reference.angles(&agent.x)?;
            rec.agent_sin.push(angles.sin_k);
            rec.agent_cos.push(angles.cos_k);
            rec.agent_tan.push(angles.tan_k);
            rec.agent_beta.push(agent.beta);
            rec.consensus_err = rec
                .consensus_err
                .max((agent.x.as_matrix() - bar_x.as_matrix()).norm());
        }
        let bar_angles = reference.angles(bar_x)?;
        rec.mean_sin = bar_angles.sin_k;
        let margin = reference.lambda_k() - 2.0 * beta_eff.max(0.0).sqrt();
        rec.cond_a = rec.noise.across <= config.c * margin * config.eps;
        rec.cond_b = rec.noise.along <= config.c * margin * bar_cos_prev;
        trace.records.push(rec);
        if config.keep_iterates {
            trace
                .iterates
                .push(agents.iter().map(|s| s.x.clone()).collect());
        }
        Ok(bar_angles.cos_k)
    };
    let mean_beta = |agents: &[AgentState]| agents.iter().map(|s| s.beta).sum::<f64>() / n as f64;
    bar_cos_prev = record(
        &mut trace,
        1,
        &agents,
        &bar_x,
        &(&y_bar - expected),
        fixed_beta,
        bar_cos_prev,
    )?;

    for t in 1..config.iterations {
        let beta_used: Vec<f64> = agents.iter().map(|s| s.beta).collect();
        let beta_eff = mean_beta(&agents);
        let half: Vec<DMatrix<f64>> = agents
            .par_iter()
            .zip(locals.blocks().par_iter())
            .enumerate()
            .map(|(i, (s, ai))| {
                let p = ai * s.x.as_matrix();
                if s.beta == 0.0 {
                    Ok(p)
                } else {
                    s.r.solve_right(s.x_prev.as_matrix())
                        .map(|m| p - m * s.beta)
                        .map_err(|e| e.at_agent(i, t + 1))
                }
            })
            .collect::<Result<_>>()?;
        y_bar = block_mean(&half);
        let received = gossip(&half)?;
        let factored = factor_all(&received, t + 1)?;
        let next: Vec<AgentState> = factored
            .into_iter()
            .zip(agents)
            .zip(&received)
            .enumerate()
            .map(|(i, (((x, r), old), y))| {
                let beta = if adaptive {
                    decentralized_adaptive_beta(&old.x, y, &old.x_prev, &old.r, old.beta)
                        .map_err(|e| e.at_agent(i, t + 1))?
                } else {
                    beta_used[i]
                };
                Ok(AgentState {
                    x,
                    x_prev: old.x,
                    r,
                    beta,
                })
            })
            .collect::<Result<_>>()?;
        agents = next;

        // effective perturbation of the averaged iteration
        let mut expected = a * bar_x.as_matrix();
        if beta_eff != 0.0 {
            expected -= bar_r.solve_right(bar_prev.as_matrix())? * beta_eff;
        }
        let xi = &y_bar - expected;
        let (nx, nr) =
            qr_unique(&y_bar).map_err(|e| e.in_stage("network average").at_step(t + 1))?;
        bar_prev = std::mem::replace(&mut bar_x, nx);
        bar_r = nr;
        bar_cos_prev = record(
            &mut trace,
            t + 1,
            &agents,
            &bar_x,
            &xi,
            beta_eff,
            bar_cos_prev,
        )?;
    }
    Ok(trace)
}

fn factor_all(values: &[DMatrix<f64>], t: usize) -> Result<Vec<(Frame, UpperTriangular)>> {
    values
        .par_iter()
        .enumerate()
        .map(|(i, y)| qr_unique(y).map_err(|e| e.at_agent(i, t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::{ring_matrix, uniform_matrix};
    use crate::power::{random_init, run_solver, Noiseless, SolverConfig};
    use nalgebra::dmatrix;

    #[test]
    fn split_covariance_identities() {
        let phi = gaussian_matrix(12, 4, &mut seeded(1));
        let cov = phi.transpose() * &phi / 12.0;
        let one = split_covariance(&phi, std::slice::from_ref(&(0..12))).unwrap();
        assert!((&one.blocks()[0] - &cov).norm() < 1e-12);
        let halves = split_covariance(&phi, &even_partition(12, 2)).unwrap();
        assert!((halves.mean() - &cov).norm() < 1e-12);
        let skewed = split_covariance(&phi, &[0..1, 1..12]).unwrap();
        assert!(skewed.max_norm() > spectral_norm(skewed.mean()));
        assert!(matches!(
            split_covariance(&phi, &[0..0, 0..12]),
            Err(Error::EmptyBlock(0))
        ));
        assert!(split_covariance(&phi, &[0..5, 4..12]).is_err());
    }

    #[test]
    fn laplacian_triangle() {
        let locals = laplacian_instance(&Graph::complete(3).unwrap()).unwrap();
        let expected = dmatrix![1.0, 0.5, 0.5; 0.5, 1.0, 0.5; 0.5, 0.5, 1.0];
        assert!((locals.mean() - expected).norm() < 1e-12);
        let inst = locals.mean_instance(1).unwrap();
        let ev = inst.eigenvalues();
        assert!(
            (ev[0] - 2.0).abs() < 1e-12
                && (ev[1] - 0.5).abs() < 1e-12
                && (ev[2] - 0.5).abs() < 1e-12
        );
    }

    #[test]
    fn laplacian_mean_and_top_vector() {
        let mut rng = seeded(7);
        let mut g = Graph::random(15, 0.25, &mut rng).unwrap();
        for i in 1..15 {
            g.add_edge(i - 1, i).unwrap();
        }
        let locals = laplacian_instance(&g).unwrap();
        assert!((locals.mean() - normalized_adjacency_shift(&g)).norm() < 1e-12);
        let inst = locals.mean_instance(1).unwrap();
        let deg = g.degrees();
        let v = nalgebra::DVector::from_iterator(15, deg.iter().map(|&d| (d as f64).sqrt()))
            .normalize();
        let top = inst.u_k().as_matrix().column(0).into_owned();
        assert!((top.dot(&v).abs() - 1.0).abs() < 1e-10);
        let split = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            laplacian_instance(&split),
            Err(Error::Disconnected)
        ));
    }

    #[test]
    fn required_l_examples() {
        // argument equal to 1 gives zero rounds, floored to 1
        let (n, k, eps, tan0) = (1usize, 1usize, 0.5f64, 0.0f64);
        let alpha0 = 1.0 / (1.0f64 + (eps / 2.0 + tan0).powi(2)).sqrt();
        let lambda_k = 1.0;
        let m = alpha0 * eps / 11.0;
        assert_eq!(
            required_l(m, lambda_k, 0.0, 1.0, eps, tan0, n, k).unwrap(),
            1
        );

        // M/lambda_k = 2, lambda_k/(lambda_k - 2 sqrt(beta)) = 10
        let beta = (0.9f64 / 2.0).powi(2);
        let l = required_l(2.0, 1.0, beta, 0.25, 0.01, 1.0, 4, 2).unwrap();
        assert_eq!(l, 137);
        let l2 = required_l(2.0, 1.0, beta, 0.25, 0.02, 1.0, 4, 2).unwrap();
        assert!(l2 < l);
    }

    #[test]
    fn single_agent_matches_centralized() {
        let inst = SpectralInstance::synthetic(30, 3, 5.0, 1.0, 0.8, 0.5, 2).unwrap();
        let locals = LocalMatrices::new(vec![inst.matrix().clone()]).unwrap();
        let w = GossipMatrix::new(DMatrix::identity(1, 1)).unwrap();
        let x0 = random_init(30, 3, 1).unwrap();
        let beta = inst.beta_star();
        let dec = adepm_run(
            &locals,
            &inst,
            &w,
            &x0,
            &DecentralizedConfig::new(BetaMode::Fixed(beta), 1, 60).keep_iterates(true),
        )
        .unwrap();
        let cen = run_solver(
            &inst,
            &x0,
            &Noiseless,
            &SolverConfig::new(BetaMode::Fixed(beta), 60).keep_iterates(true),
        )
        .unwrap();
        for (d, c) in dec.iterates.iter().zip(&cen.iterates) {
            assert!((d[0].as_matrix() - c.as_matrix()).norm() <= 1e-12);
        }
        for (d, c) in dec.records.iter().zip(&cen.records) {
            assert!((d.agent_sin[0] - c.sin_theta).abs() <= 1e-12);
            assert!(d.consensus_err <= 1e-12);
        }
    }

    #[test]
    fn ring_run_converges_with_consensus() {
        let inst = SpectralInstance::synthetic(20, 2, 5.0, 1.0, 0.7, 0.5, 4).unwrap();
        let locals = perturbed_locals(&inst, 4, 0.5, 9).unwrap();
        assert!((locals.mean() - inst.matrix()).norm() < 1e-12);
        let w = ring_matrix(4).unwrap();
        let x0 = random_init(20, 2, 3).unwrap();
        let trace = adepm_run(
            &locals,
            &inst,
            &w,
            &x0,
            &DecentralizedConfig::new(BetaMode::Fixed(inst.beta_star()), 40, 80),
        )
        .unwrap();
        let last = trace.records.last().unwrap();
        assert!(last.max_sin() < 1e-6, "final sin {}", last.max_sin());
        assert!(last.consensus_err < 1e-6);
    }

    #[test]
    fn plain_scheme_on_exact_averaging_is_power_method() {
        let inst = SpectralInstance::synthetic(15, 2, 3.0, 1.0, 0.6, 0.2, 8).unwrap();
        let locals = perturbed_locals(&inst, 3, 0.3, 1).unwrap();
        let w = uniform_matrix(3).unwrap();
        let x0 = random_init(15, 2, 5).unwrap();
        let dec = depm_run(&locals, &inst, &w, &x0, 1, 30).unwrap();
        let cen = run_solver(
            &inst,
            &x0,
            &Noiseless,
            &SolverConfig::new(BetaMode::Fixed(0.0), 30),
        )
        .unwrap();
        for (d, c) in dec.records.iter().zip(&cen.records) {
            assert!((d.max_sin() - c.sin_theta).abs() < 1e-10);
        }
    }

    #[test]
    fn adaptive_beta_settles_near_optimum() {
        let inst = SpectralInstance::synthetic(20, 2, 5.0, 1.0, 0.8, 0.4, 6).unwrap();
        let locals = perturbed_locals(&inst, 4, 0.3, 2).unwrap();
        let w = ring_matrix(4).unwrap();
        let x0 = random_init(20, 2, 7).unwrap();
        let trace = adepm_run(
            &locals,
            &inst,
            &w,
            &x0,
            &DecentralizedConfig::new(BetaMode::Adaptive, 40, 150),
        )
        .unwrap();
        let last = trace.records.last().unwrap();
        for &b in &last.agent_beta {
            assert!(
                (b - inst.beta_star()).abs() <= 0.1 * inst.beta_star(),
                "beta {b}"
            );
        }
        assert!(last.max_sin() < 1e-4);
    }

    #[test]
    fn adaptive_formula_collapses_without_momentum() {
        let x = Frame::identity_columns(3, 2).unwrap();
        let y = dmatrix![2.0, 0.0; 0.0, 1.0; 0.0, 0.0];
        let r = UpperTriangular::new(DMatrix::identity(2, 2)).unwrap();
        let b = decentralized_adaptive_beta(&x, &y, &x, &r, 0.0).unwrap();
        assert_eq!(b, adaptive_beta(&x, &y).unwrap());
    }

    #[test]
    fn dense_text_parsing() {
        let m = parse_dense("1 2\n# note\n3 4\n", "inline").unwrap();
        assert_eq!(m, dmatrix![1.0, 2.0; 3.0, 4.0]);
        assert!(matches!(
            parse_dense("1 2\n3\n", "inline"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
