use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use anpm_lab::chebyshev::{block_cheb_apply, spectral_cheb_apply, ChebParams};
use anpm_lab::decentralized::{adepm_run, perturbed_locals, DecentralizedConfig};
use anpm_lab::gossip::{
    acc_gossip, block_mean, max_deviation, metropolis_matrix, plain_gossip, ring_matrix, Graph,
};
use anpm_lab::linalg::{
    gaussian_frame, principal_angles, qr_perturbation_bounds, qr_unique, spectral_norm, Frame,
    QrPerturbation,
};
use anpm_lab::power::{
    anpm_init, anpm_step, random_init, run_solver, BetaMode, Noiseless, SolverConfig,
    SpectralInstance,
};
use anpm_lab::rng::{gaussian_matrix, seeded};

#[test]
fn qr_perturbation_bounds_hold_on_1000_cases() {
    let mut rng = seeded(17);
    let mut checked = 0;
    for _ in 0..1000 {
        let d = rng.random_range(3..=12);
        let p = rng.random_range(1..=d.min(5));
        let x = gaussian_matrix(d, p, &mut rng);
        let (smin, _) = anpm_lab::linalg::extreme_singular_values(&x);
        let dx = gaussian_matrix(d, p, &mut rng);
        let target = rng.random_range(0.001..0.9);
        let dx = &dx * (target * smin / spectral_norm(&dx));
        let QrPerturbation::Bounds { q, r } = qr_perturbation_bounds(&x, &dx).unwrap() else {
            panic!("product {target} should be inside the hypothesis");
        };
        let (q0, r0) = qr_unique(&x).unwrap();
        let (q1, r1) = qr_unique(&(&x + &dx)).unwrap();
        assert!((q1.as_matrix() - q0.as_matrix()).norm() <= q * (1.0 + 1e-12));
        assert!((r1.as_matrix() - r0.as_matrix()).norm() <= r * (1.0 + 1e-12));
        checked += 1;
    }
    assert_eq!(checked, 1000);
}

fn orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
    gaussian_frame(k, k, &mut seeded(seed))
        .unwrap()
        .into_matrix()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qr_reconstructs(seed in any::<u64>(), d in 2usize..20, p in 1usize..6) {
        let p = p.min(d);
        let y = gaussian_matrix(d, p, &mut seeded(seed));
        let (q, r) = qr_unique(&y).unwrap();
        prop_assert!((q.as_matrix() * r.as_matrix() - &y).norm() <= 1e-12 * y.norm());
        prop_assert!(r.diagonal().iter().all(|&v| v > 0.0));
        prop_assert!(q.orthonormality_error() <= 1e-12);
    }

    #[test]
    fn angles_symmetric_and_rotation_invariant(seed in any::<u64>(), d in 3usize..30, k in 1usize..5) {
        let k = k.min(d - 1);
        let mut rng = seeded(seed);
        let u = gaussian_frame(d, k, &mut rng).unwrap();
        let x = gaussian_frame(d, k, &mut rng).unwrap();
        let a = principal_angles(&u, &x).unwrap();
        let b = principal_angles(&x, &u).unwrap();
        for (s, t) in a.angles.iter().zip(&b.angles) {
            prop_assert!((s - t).abs() <= 1e-10);
        }
        let rotated = Frame::new(x.as_matrix() * orthogonal(k, seed ^ 1)).unwrap();
        let c = principal_angles(&u, &rotated).unwrap();
        for (s, t) in a.angles.iter().zip(&c.angles) {
            prop_assert!((s - t).abs() <= 1e-10);
        }
        if a.cos_k > 0.0 {
            prop_assert!(a.sin_k <= a.tan_k);
            prop_assert!((a.cos_k.powi(2) + a.sin_k.powi(2) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn cheb_block_matches_eigen_evaluation(seed in any::<u64>(), t in 0usize..25, beta in 0.0f64..0.2) {
        let mut rng = seeded(seed);
        let inst = SpectralInstance::random_psd(15, 3, &mut rng).unwrap();
        let x0 = gaussian_frame(15, 3, &mut rng).unwrap();
        let params = ChebParams::new(beta).unwrap();
        let a = block_cheb_apply(&inst, &x0, t, params).unwrap();
        let b = spectral_cheb_apply(&inst, &x0, t, params).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-10 * b.norm().max(1.0));
    }
}

#[test]
fn random_init_tangent_bound() {
    let (d, k) = (1000, 10);
    let u = Frame::identity_columns(d, k).unwrap();
    let bound = 10.0 * (d as f64).sqrt() / ((k as f64).sqrt() - ((k - 1) as f64).sqrt());
    let below = (0..100u64)
        .filter(|&seed| {
            principal_angles(&u, &random_init(d, k, seed).unwrap())
                .unwrap()
                .tan_k
                <= bound
        })
        .count();
    assert!(below >= 95, "{below} of 100 below the bound");
}

#[test]
fn iterates_stay_orthonormal() {
    let inst = SpectralInstance::synthetic(80, 4, 5.0, 1.0, 0.95, 0.5, 3).unwrap();
    let x0 = random_init(80, 4, 4).unwrap();
    for mode in [BetaMode::Fixed(inst.beta_star()), BetaMode::Adaptive] {
        let config = SolverConfig::new(mode, 200).keep_iterates(true);
        let trace = run_solver(&inst, &x0, &Noiseless, &config).unwrap();
        assert!(trace
            .iterates
            .iter()
            .all(|x| x.orthonormality_error() <= 1e-9));
    }
}

#[test]
fn zero_momentum_is_the_power_method() {
    let inst = SpectralInstance::synthetic(40, 3, 5.0, 1.0, 0.8, 0.5, 8).unwrap();
    let x0 = random_init(40, 3, 9).unwrap();
    let zero = DMatrix::zeros(40, 3);
    let a = inst.matrix();
    let mut state = anpm_init(&inst, &x0, 0.0, &zero).unwrap();
    // the init step scales A X_0 by 1/2, which QR removes
    let mut plain = qr_unique(&(a * x0.as_matrix())).unwrap().0;
    assert!((state.x.as_matrix() - plain.as_matrix()).norm() <= 1e-12);
    for _ in 0..50 {
        state = anpm_step(state, &inst, &zero).unwrap();
        plain = qr_unique(&(a * plain.as_matrix())).unwrap().0;
        assert!((state.x.as_matrix() - plain.as_matrix()).norm() <= 1e-12);
    }
}

#[test]
fn gossip_preserves_the_mean() {
    let mut rng = seeded(23);
    let w = ring_matrix(9).unwrap();
    let values: Vec<DMatrix<f64>> = (0..9).map(|_| gaussian_matrix(5, 2, &mut rng)).collect();
    let mean = block_mean(&values);
    for rounds in 1..30 {
        let acc = acc_gossip(&values, &w, rounds).unwrap();
        let plain = plain_gossip(&values, &w, rounds).unwrap();
        assert!((block_mean(&acc) - &mean).norm() <= 1e-10);
        assert!((block_mean(&plain) - &mean).norm() <= 1e-10);
    }
}

#[test]
fn accelerated_gossip_needs_fewer_rounds() {
    let mut rng = seeded(29);
    let w = ring_matrix(16).unwrap();
    let values: Vec<DMatrix<f64>> = (0..16).map(|_| gaussian_matrix(4, 2, &mut rng)).collect();
    let rounds_to = |f: &dyn Fn(usize) -> Vec<DMatrix<f64>>| {
        (1..5000).find(|&l| max_deviation(&f(l)) <= 1e-8).unwrap()
    };
    let acc = rounds_to(&|l| acc_gossip(&values, &w, l).unwrap());
    let plain = rounds_to(&|l| plain_gossip(&values, &w, l).unwrap());
    assert!(acc < plain, "accelerated {acc}, plain {plain}");
}

#[test]
fn metropolis_gap_positive_on_connected_graphs() {
    let mut rng = seeded(31);
    let mut seen = 0;
    while seen < 20 {
        let n = rng.random_range(2..25);
        let g = Graph::random(n, 0.3, &mut rng).unwrap();
        if g.is_connected() {
            assert!(metropolis_matrix(&g).unwrap().gamma() > 0.0);
            seen += 1;
        }
    }
}

#[test]
fn fewer_rounds_raise_the_plateau() {
    let inst = SpectralInstance::synthetic(50, 3, 5.0, 1.0, 0.9, 0.5, 41).unwrap();
    let locals = perturbed_locals(&inst, 4, 0.5, 42).unwrap();
    let w = ring_matrix(4).unwrap();
    let x0 = random_init(50, 3, 43).unwrap();
    let plateau = |rounds: usize| {
        let config = DecentralizedConfig::new(BetaMode::Fixed(inst.beta_star()), rounds, 300);
        let trace = adepm_run(&locals, &inst, &w, &x0, &config).unwrap();
        trace.records[250..]
            .iter()
            .map(|r| r.max_sin())
            .sum::<f64>()
            / 50.0
    };
    let levels: Vec<f64> = [2, 4, 8].into_iter().map(plateau).collect();
    assert!(levels[0] > levels[1] && levels[1] > levels[2], "{levels:?}");
}
