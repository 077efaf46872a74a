//! Worst-case constructions: noiseless decay along the closed form, a drift
//! that keeps the iterate away from the target, and a rotation that freezes it.

use anpm_lab::adversarial::{
    closed_form_tan, diag_instance, tilted_frame, tilted_init, NoiseModel,
};
use anpm_lab::power::{run_solver, BetaMode, Noiseless, SolverConfig};

fn main() -> anpm_lab::Result<()> {
    let beta = 0.495f64.powi(2);
    let inst = diag_instance(1.0, beta, 6, 2)?;
    let x0 = tilted_frame(std::f64::consts::FRAC_PI_4, 6, 2)?;
    let trace = run_solver(
        &inst,
        &x0,
        &Noiseless,
        &SolverConfig::new(BetaMode::Fixed(beta), 200),
    )?;
    for r in trace.records.iter().filter(|r| r.t % 40 == 0) {
        println!(
            "t = {:>3}  tan {:.6e}  closed form {:.6e}",
            r.t,
            r.tan_theta,
            closed_form_tan(r.t, 1.0, 1.0, beta)
        );
    }

    let (eps, beta) = (0.05, 0.0625);
    let inst = diag_instance(1.0, beta, 4, 2)?;
    let x0 = tilted_init(eps, 4, 2)?;
    let config = SolverConfig::new(BetaMode::Fixed(beta), 10_000).eps(eps);
    for (name, noise) in [
        ("drift", NoiseModel::Drift { eps, beta }),
        ("rotation", NoiseModel::Rotation { beta }),
    ] {
        let trace = run_solver(&inst, &x0, &noise, &config)?;
        let tans = trace.tan_series();
        let lo = tans.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tans.iter().cloned().fold(0.0, f64::max);
        let (a, b) = trace.violations();
        println!("{name:<8} tan in [{lo:.6}, {hi:.6}] (eps = {eps}), condition misses {a}/{b}");
    }
    Ok(())
}
