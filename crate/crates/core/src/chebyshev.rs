//! Scaled Chebyshev polynomials generated by the momentum recursion
//! `p_{t+1}(x) = x p_t(x) - beta p_{t-1}(x)`, their closed forms through the
//! roots of `z^2 - x z + beta`, and a block oracle for noiseless iterates.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Frame;
use crate::power::SpectralInstance;
use crate::rng::seeded;

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebParams {
    beta: f64,
}

impl ChebParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "momentum must be finite and >= 0, got {beta}"
            )));
        }
        Ok(ChebParams { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Roots of `z^2 - x z + beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    pub plus: Complex64,
    pub minus: Complex64,
}

pub fn x_pm(x: f64, beta: f64) -> RootPair {
    let disc = x * x - 4.0 * beta;
    if disc >= 0.0 {
        let s = disc.sqrt();
        RootPair {
            plus: Complex64::new((x + s) / 2.0, 0.0),
            minus: Complex64::new((x - s) / 2.0, 0.0),
        }
    } else {
        let s = (-disc).sqrt();
        RootPair {
            plus: Complex64::new(x / 2.0, s / 2.0),
            minus: Complex64::new(x / 2.0, -s / 2.0),
        }
    }
}

/// `p_t(x)` by the three-term recurrence with `p_0 = 1`, `p_1 = x/2`.
pub fn cheb_p(t: usize, x: f64, params: ChebParams) -> f64 {
    recurrence(t, x, params.beta, x / 2.0)
}

/// `q_t(x)` by the three-term recurrence with `q_0 = 1`, `q_1 = x`.
pub fn cheb_q(t: usize, x: f64, params: ChebParams) -> f64 {
    recurrence(t, x, params.beta, x)
}

fn recurrence(t: usize, x: f64, beta: f64, first: f64) -> f64 {
    if t == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, first);
    for _ in 1..t {
        let next = x * cur - beta * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `p_t(x) = ((x+)^t + (x-)^t) / 2`.
pub fn cheb_p_closed(t: usize, x: f64, params: ChebParams) -> f64 {
    let r = x_pm(x, params.beta);
    let n = t as i32;
    ((r.plus.powi(n) + r.minus.powi(n)) * 0.5).re
}

/// `q_t(x) = sum_{s=0..t} (x+)^s (x-)^{t-s}`.
pub fn cheb_q_closed(t: usize, x: f64, params: ChebParams) -> f64 {
    let r = x_pm(x, params.beta);
    (0..=t as i32)
        .map(|s| r.plus.powi(s) * r.minus.powi(t as i32 - s))
        .sum::<Complex64>()
        .re
}

/// `Z_t = p_t(A) X_0` through the block recurrence
/// `Z_{t+1} = A Z_t - beta Z_{t-1}`, `Z_1 = A Z_0 / 2`.
pub fn block_cheb_apply(
    inst: &SpectralInstance,
    x0: &Frame,
    t: usize,
    params: ChebParams,
) -> Result<DMatrix<f64>> {
    check_dims(inst, x0)?;
    let a = inst.matrix();
    let mut prev = x0.as_matrix().clone();
    if t == 0 {
        return Ok(prev);
    }
    let mut cur = a * &prev * 0.5;
    for _ in 1..t {
        let next = a * &cur - &prev * params.beta;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `p_t(A) X_0` evaluated as `U p_t(Lambda) U^T X_0`.
pub fn spectral_cheb_apply(
    inst: &SpectralInstance,
    x0: &Frame,
    t: usize,
    params: ChebParams,
) -> Result<DMatrix<f64>> {
    check_dims(inst, x0)?;
    let u = inst.basis();
    let mut coords = u.transpose() * x0.as_matrix();
    for (i, &lambda) in inst.eigenvalues().iter().enumerate() {
        let scale = cheb_p(t, lambda, params);
        coords.row_mut(i).scale_mut(scale);
    }
    Ok(u * coords)
}

fn check_dims(inst: &SpectralInstance, x0: &Frame) -> Result<()> {
    if inst.d() != x0.d() {
        return Err(Error::DimensionMismatch(format!(
            "instance has d = {} but the frame has {} rows",
            inst.d(),
            x0.d()
        )));
    }
    Ok(())
}

/// Number of uniform grid points used by [`minimax_witness`].
pub const MINIMAX_GRID: usize = 10_000;

/// Sampled check that `p_t` has the smallest sup-norm on `[-2 sqrt(beta),
/// 2 sqrt(beta)]` among degree-`t` polynomials with leading coefficient 1/2.
///
/// Competitors are `p_t + r` with `r` a random polynomial of degree `< t`
/// at a log-uniform scale. The grid is the uniform grid plus the `t + 1`
/// alternation points of `p_t`, so a competitor can never slip between
/// grid nodes.
pub fn minimax_witness(t: usize, params: ChebParams, trials: usize, seed: u64) -> Result<bool> {
    let beta = params.beta;
    if !(beta > 0.0) || t == 0 {
        return Err(Error::InvalidParameter(format!(
            "minimax check needs beta > 0 and t >= 1, got beta = {beta}, t = {t}"
        )));
    }
    let half_width = 2.0 * beta.sqrt();
    let level = beta.sqrt().powi(t as i32);

    let mut grid: Vec<f64> = (0..MINIMAX_GRID)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (MINIMAX_GRID - 1) as f64)
        .collect();
    grid.extend(alternation_points(t, beta));
    let base: Vec<f64> = grid.iter().map(|&x| cheb_p(t, x, params)).collect();

    let own = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if (own - level).abs() > 1e-9 {
        return Ok(false);
    }

    let mut rng = seeded(seed);
    for _ in 0..trials {
        let scale = level * 10f64.powf(rng.random_range(-6.0..1.0));
        let coeffs: Vec<f64> = (0..t)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let sup = grid.iter().zip(&base).fold(0.0f64, |m, (&x, &p)| {
            // Horner in the rescaled variable x / (2 sqrt(beta))
            let u = x / half_width;
            let r = coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c);
            m.max((p + scale * r).abs())
        });
        if sup < level - 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `2 sqrt(beta) cos(j pi / t)` for `j = 0..=t`, where `p_t = +-sqrt(beta)^t`.
pub fn alternation_points(t: usize, beta: f64) -> Vec<f64> {
    let half_width = 2.0 * beta.sqrt();
    (0..=t)
        .map(|j| half_width * (j as f64 * std::f64::consts::PI / t as f64).cos())
        .collect()
}
