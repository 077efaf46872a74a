//! Four agents on a ring estimate the top eigenspace of the mean of their
//! local matrices, with and without momentum.

use anpm_lab::decentralized::{
    adepm_run, depm_run, perturbed_locals, required_l, DecentralizedConfig,
};
use anpm_lab::gossip::ring_matrix;
use anpm_lab::power::{random_init, theory_iterations, BetaMode, SpectralInstance, TheoryParams};

fn main() -> anpm_lab::Result<()> {
    let eps = 1e-2;
    let inst = SpectralInstance::synthetic(50, 3, 5.0, 1.0, 0.9, 0.5, 41)?;
    let locals = perturbed_locals(&inst, 4, 0.5, 42)?;
    let w = ring_matrix(4)?;
    let x0 = random_init(50, 3, 43)?;
    let beta = inst.beta_star();
    let tan0 = inst.angles(&x0)?.tan_k;

    let rounds = required_l(
        locals.max_norm(),
        inst.lambda_k(),
        beta,
        w.gamma(),
        eps,
        tan0,
        4,
        3,
    )?;
    let horizon = theory_iterations(tan0, &TheoryParams::new(eps, inst.lambda_k(), beta)?);
    println!("tan theta_0 = {tan0:.2}, required L = {rounds}, guaranteed horizon {horizon}");

    for l in [2, 5, 20, rounds] {
        let acc = adepm_run(
            &locals,
            &inst,
            &w,
            &x0,
            &DecentralizedConfig::new(BetaMode::Fixed(beta), l, 150),
        )?;
        let adaptive = adepm_run(
            &locals,
            &inst,
            &w,
            &x0,
            &DecentralizedConfig::new(BetaMode::Adaptive, l, 150),
        )?;
        let plain = depm_run(&locals, &inst, &w, &x0, l, 150)?;
        let show = |t: Option<usize>| t.map_or("-".to_string(), |t| t.to_string());
        println!(
            "L = {l:>3}: t to 2 eps  momentum {:>4}  adaptive {:>4}  plain {:>4};  final worst sin {:.2e}, consensus {:.2e}",
            show(acc.first_below(2.0 * eps)),
            show(adaptive.first_below(2.0 * eps)),
            show(plain.first_below(2.0 * eps)),
            acc.records.last().map_or(f64::NAN, |r| r.max_sin()),
            acc.max_consensus(),
        );
    }
    Ok(())
}
