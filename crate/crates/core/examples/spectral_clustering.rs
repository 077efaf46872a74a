//! Decentralized spectral clustering: each node of a planted-partition graph
//! is an agent holding its own row of the normalized adjacency.

use nalgebra::DMatrix;
use rand::Rng;

use anpm_lab::decentralized::{
    adepm_run, communication_graph, laplacian_instance, DecentralizedConfig,
};
use anpm_lab::gossip::{metropolis_matrix, Graph};
use anpm_lab::power::{random_init, BetaMode};
use anpm_lab::rng::seeded;

const NODES: usize = 60;
const CLUSTERS: usize = 3;

fn planted(rng: &mut impl Rng) -> anpm_lab::Result<Graph> {
    loop {
        let mut g = Graph::new(NODES);
        for i in 0..NODES {
            for j in i + 1..NODES {
                let p = if i % CLUSTERS == j % CLUSTERS {
                    0.3
                } else {
                    0.02
                };
                if rng.random::<f64>() < p {
                    g.add_edge(i, j)?;
                }
            }
        }
        if g.is_connected() {
            return Ok(g);
        }
    }
}

/// Farthest-point seeding followed by a few Lloyd steps on the rows.
fn kmeans(rows: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let row = |i: usize| rows.row(i).clone_owned();
    let mut centres = vec![row(0)];
    while centres.len() < k {
        let far = (0..rows.nrows())
            .max_by(|&a, &b| {
                let da = centres
                    .iter()
                    .map(|c| (row(a) - c).norm())
                    .fold(f64::INFINITY, f64::min);
                let db = centres
                    .iter()
                    .map(|c| (row(b) - c).norm())
                    .fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centres.push(row(far));
    }
    let mut labels = vec![0; rows.nrows()];
    for _ in 0..20 {
        for (i, label) in labels.iter_mut().enumerate() {
            *label = (0..k)
                .min_by(|&a, &b| {
                    (row(i) - &centres[a])
                        .norm()
                        .total_cmp(&(row(i) - &centres[b]).norm())
                })
                .unwrap();
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<usize> = (0..rows.nrows()).filter(|&i| labels[i] == c).collect();
            if !members.is_empty() {
                let total = members
                    .iter()
                    .fold(centre.clone() * 0.0, |acc, &i| acc + row(i));
                *centre = total / members.len() as f64;
            }
        }
    }
    labels
}

fn main() -> anpm_lab::Result<()> {
    let mut rng = seeded(4);
    let data = planted(&mut rng)?;
    let locals = laplacian_instance(&data)?;
    let reference = locals.mean_instance(CLUSTERS)?;
    let w = metropolis_matrix(&communication_graph(&data, &mut rng)?)?;
    let x0 = random_init(NODES, CLUSTERS, 5)?;
    println!(
        "{} data edges, gap {:.3}, gossip gamma {:.3}",
        data.edge_count(),
        reference.gap(),
        w.gamma()
    );

    let config = DecentralizedConfig::new(BetaMode::Fixed(reference.beta_star()), 40, 200)
        .keep_iterates(true);
    let trace = adepm_run(&locals, &reference, &w, &x0, &config)?;
    let last = trace.records.last().expect("at least one iteration");
    println!(
        "worst agent sin theta {:.2e}, consensus {:.2e}",
        last.max_sin(),
        last.consensus_err
    );

    // node i reads its own row from its own estimate
    let frames = trace.iterates.last().expect("iterates kept");
    let rows = DMatrix::from_fn(NODES, CLUSTERS, |i, j| frames[i].as_matrix()[(i, j)]);
    let labels = kmeans(&rows, CLUSTERS);
    let agree = (0..NODES)
        .flat_map(|i| (i + 1..NODES).map(move |j| (i, j)))
        .filter(|&(i, j)| (labels[i] == labels[j]) == (i % CLUSTERS == j % CLUSTERS))
        .count();
    let pairs = NODES * (NODES - 1) / 2;
    println!("pairwise agreement with the planted partition: {agree}/{pairs}");
    Ok(())
}
