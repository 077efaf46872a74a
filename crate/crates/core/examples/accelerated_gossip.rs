//! Plain versus heavy-ball gossip on rings and a random graph.

use nalgebra::DMatrix;

use anpm_lab::gossip::{
    acc_gossip, block_mean, metropolis_matrix, plain_gossip, ring_matrix, GossipMatrix, Graph,
};
use anpm_lab::rng::{gaussian_matrix, seeded};

fn deviation(values: &[DMatrix<f64>], mean: &DMatrix<f64>) -> f64 {
    values.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max)
}

fn main() -> anpm_lab::Result<()> {
    let mut rng = seeded(5);
    let mut networks: Vec<(String, GossipMatrix)> = Vec::new();
    for n in [4, 8, 16] {
        networks.push((format!("ring-{n}"), ring_matrix(n)?));
    }
    let graph = loop {
        let g = Graph::random(24, 0.2, &mut rng)?;
        if g.is_connected() {
            break g;
        }
    };
    networks.push(("metropolis-24".into(), metropolis_matrix(&graph)?));

    for (name, w) in &networks {
        let values: Vec<DMatrix<f64>> = (0..w.n())
            .map(|_| gaussian_matrix(5, 2, &mut rng))
            .collect();
        let mean = block_mean(&values);
        let dev0 = deviation(&values, &mean);
        println!(
            "{name}: gamma {:.4}, momentum {:.4}",
            w.gamma(),
            w.momentum()
        );
        for rounds in [1, 5, 25] {
            let acc = deviation(&acc_gossip(&values, w, rounds)?, &mean);
            let plain = deviation(&plain_gossip(&values, w, rounds)?, &mean);
            let bound = (1.0 - w.gamma().sqrt()).powi(rounds as i32) * (w.n() as f64).sqrt() * dev0;
            println!("  L = {rounds:>2}: accelerated {acc:.3e}, plain {plain:.3e}, sqrt(n)(1-sqrt(gamma))^L dev0 {bound:.3e}");
        }
    }
    Ok(())
}
