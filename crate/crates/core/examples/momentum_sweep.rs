//! Iterations to reach sin theta_k <= 1e-3 for several momentum values on a
//! small-gap instance.

use anpm_lab::power::{
    random_init, run_solver, BetaMode, Noiseless, SolverConfig, SpectralInstance,
};

fn main() -> anpm_lab::Result<()> {
    let (d, k) = (300, 5);
    let x0 = random_init(d, k, 11)?;
    for lambda_k1 in [0.9, 0.99] {
        let inst = SpectralInstance::synthetic(d, k, 5.0, 1.0, lambda_k1, 0.5, 10)?;
        let star = inst.beta_star();
        println!("gap {:.2}:", inst.gap());
        let modes = [
            ("beta = 0", BetaMode::Fixed(0.0)),
            ("beta = beta*/4", BetaMode::Fixed(star / 4.0)),
            ("beta = beta*", BetaMode::Fixed(star)),
            ("adaptive", BetaMode::Adaptive),
        ];
        for (name, mode) in modes {
            let trace = run_solver(
                &inst,
                &x0,
                &Noiseless,
                &SolverConfig::new(mode, 3000).extra_column_seed(12),
            )?;
            let hit = trace
                .first_below(1e-3)
                .map_or("-".to_string(), |t| t.to_string());
            let last_beta = trace.records.last().map_or(0.0, |r| r.beta);
            println!("  {name:<16} t = {hit:>5}   final beta {last_beta:.5} (beta* = {star:.5})");
        }
    }
    Ok(())
}
