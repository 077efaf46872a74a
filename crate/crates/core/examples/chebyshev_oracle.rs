//! Noiseless momentum iterates span the range of `p_t(A) X_0`, and `p_t` is
//! the smallest monic-like polynomial on `[-2 sqrt(beta), 2 sqrt(beta)]`.

use anpm_lab::chebyshev::{block_cheb_apply, cheb_p, cheb_p_closed, minimax_witness, ChebParams};
use anpm_lab::linalg::{principal_angles, qr_unique};
use anpm_lab::power::{
    random_init, run_solver, BetaMode, Noiseless, SolverConfig, SpectralInstance,
};

fn main() -> anpm_lab::Result<()> {
    let beta = 0.2;
    let params = ChebParams::new(beta)?;
    println!(" t   p_t(1.2) recurrence   closed form");
    for t in [1, 5, 10, 20] {
        println!(
            "{t:>2}   {:>18.10e}   {:.10e}",
            cheb_p(t, 1.2, params),
            cheb_p_closed(t, 1.2, params)
        );
    }

    let inst = SpectralInstance::synthetic(40, 3, 1.0, 0.9, 0.8, 0.2, 1)?;
    let x0 = random_init(40, 3, 2)?;
    let params = ChebParams::new(inst.beta_star())?;
    let config = SolverConfig::new(BetaMode::Fixed(inst.beta_star()), 25).keep_iterates(true);
    let trace = run_solver(&inst, &x0, &Noiseless, &config)?;
    let mut worst = 0.0f64;
    for (t, x) in (1..).zip(&trace.iterates) {
        let (q, _) = qr_unique(&block_cheb_apply(&inst, &x0, t, params)?)?;
        worst = worst.max(principal_angles(&q, x)?.theta_k());
    }
    println!("largest angle between X_t and range p_t(A) X_0 over 25 steps: {worst:.2e}");

    for t in 1..=6 {
        let ok = minimax_witness(t, ChebParams::new(1.0)?, 500, t as u64)?;
        println!("t = {t}: 500 random competitors, p_t still minimal: {ok}");
    }
    Ok(())
}
