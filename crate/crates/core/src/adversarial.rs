//! Worst-case instances and perturbation generators.
//!
//! The diagonal instance `diag(lambda_k, .., lambda_k, 2 sqrt(beta), ..)`
//! together with drift or rotation noise shows that the perturbation
//! conditions cannot be relaxed by more than a constant. The sampled models
//! produce random perturbations of a prescribed spectral norm.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Frame};
use crate::power::{NoiseContext, Perturbation, SpectralInstance, NOISE_CONSTANT};
use crate::rng::{gaussian_matrix, substream};

/// `lambda_k` repeated `k` times, then `2 sqrt(beta)` repeated `d - k` times.
pub fn diag_instance(lambda_k: f64, beta: f64, d: usize, k: usize) -> Result<SpectralInstance> {
    let threshold = 2.0 * beta.sqrt();
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "worst-case instance needs beta > 0, got {beta}"
        )));
    }
    if !(lambda_k > threshold) {
        return Err(Error::InvalidGap {
            lambda_k,
            threshold,
        });
    }
    if k == 0 || d <= k {
        return Err(Error::DimensionMismatch(format!(
            "worst-case instance needs 1 <= k < d, got d = {d}, k = {k}"
        )));
    }
    let mut eigenvalues = vec![lambda_k; k];
    eigenvalues.resize(d, threshold);
    SpectralInstance::diagonal(eigenvalues, k)
}

/// `e_1..e_{k-1}` followed by `cos(theta0) e_k + sin(theta0) e_{k+1}`.
pub fn tilted_frame(theta0: f64, d: usize, k: usize) -> Result<Frame> {
    if k == 0 || d <= k {
        return Err(Error::DimensionMismatch(format!(
            "tilted frame needs 1 <= k < d, got d = {d}, k = {k}"
        )));
    }
    let mut m = DMatrix::identity(d, k);
    m[(k - 1, k - 1)] = theta0.cos();
    m[(k, k - 1)] = theta0.sin();
    Frame::new(m)
}

/// Tilted frame with `tan theta_k(U_k, X_0) = 2 eps`.
pub fn tilted_init(eps: f64, d: usize, k: usize) -> Result<Frame> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie in [0, 1), got {eps}"
        )));
    }
    tilted_frame((2.0 * eps).atan(), d, k)
}

/// Constant drift `8 (lambda_k - 2 sqrt(beta)) eps e_{k+1}` in column `k`.
pub fn drift_noise(eps: f64, lambda_k: f64, beta: f64, d: usize, k: usize) -> DMatrix<f64> {
    let mut xi = DMatrix::zeros(d, k);
    xi[(k, k - 1)] = 8.0 * (lambda_k - 2.0 * beta.sqrt()) * eps;
    xi
}

/// `-(lambda_k - 2 sqrt(beta)) cos(theta_t) e_k` in column `k`, halved at
/// `t = 0`.
pub fn rotation_noise(
    t: usize,
    lambda_k: f64,
    beta: f64,
    cos_theta: f64,
    d: usize,
    k: usize,
) -> DMatrix<f64> {
    let mut xi = DMatrix::zeros(d, k);
    let scale = if t == 0 { 0.5 } else { 1.0 };
    xi[(k - 1, k - 1)] = -scale * (lambda_k - 2.0 * beta.sqrt()) * cos_theta;
    xi
}

/// `-xi U V / ||V||_2` with `V` the entrywise absolute value of a Gaussian
/// `d x k` matrix. Every column has a nonpositive inner product with every
/// column of `U`.
pub fn sampled_adversarial_noise(
    xi: f64,
    basis: &DMatrix<f64>,
    k: usize,
    seed: u64,
    t: u64,
) -> DMatrix<f64> {
    let d = basis.nrows();
    if xi == 0.0 {
        return DMatrix::zeros(d, k);
    }
    let v = gaussian_matrix(basis.ncols(), k, &mut substream(seed, t)).abs();
    let norm = spectral_norm(&v);
    basis * v * (-xi / norm)
}

/// Gaussian `d x k` matrix rescaled to spectral norm `xi`.
pub fn spherical_noise(xi: f64, d: usize, k: usize, seed: u64, t: u64) -> DMatrix<f64> {
    if xi == 0.0 {
        return DMatrix::zeros(d, k);
    }
    let v = gaussian_matrix(d, k, &mut substream(seed, t));
    let norm = spectral_norm(&v);
    v * (xi / norm)
}

/// Exact noiseless `tan theta_k(U_k, X_t)` on [`diag_instance`].
///
/// Evaluated as `2 / ((l+/sqrt(beta))^t + (l-/sqrt(beta))^t) tan theta_0`
/// where `l+-` are the roots of `z^2 - lambda_k z + beta`.
pub fn closed_form_tan(t: usize, tan_theta0: f64, lambda_k: f64, beta: f64) -> f64 {
    let s = beta.sqrt();
    let disc = (lambda_k * lambda_k - 4.0 * beta).max(0.0).sqrt();
    let plus = (lambda_k + disc) / (2.0 * s);
    let minus = (lambda_k - disc) / (2.0 * s);
    let n = t as i32;
    2.0 / (plus.powi(n) + minus.powi(n)) * tan_theta0
}

/// Perturbation policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// Constant drift out of the top subspace.
    Drift {
        eps: f64,
        beta: f64,
    },
    /// Shrinks the `k`-th direction in proportion to the current cosine.
    Rotation {
        beta: f64,
    },
    /// Fresh `-xi U |V| / ||V||` draw at every iteration.
    SampledAdversarial {
        xi: f64,
        seed: u64,
    },
    /// Fresh uniform draw on the spectral-norm sphere of radius `xi`.
    Spherical {
        xi: f64,
        seed: u64,
    },
    /// Sampled adversarial direction at norm
    /// `(1 - 1e-9) c (lambda_k - 2 sqrt(beta)) min(cos theta_t, eps)`, which
    /// satisfies both perturbation conditions.
    Bounded {
        eps: f64,
        seed: u64,
    },
}

impl Perturbation for NoiseModel {
    fn sample(&self, ctx: &NoiseContext<'_>) -> Result<DMatrix<f64>> {
        let inst = ctx.instance;
        let (d, cols) = (ctx.x.d(), ctx.x.k());
        let k = inst.k();
        let lambda_k = inst.lambda_k();
        let t = ctx.t as u64;
        let needs_k = |name: &str| -> Result<()> {
            if cols != k || d <= k {
                return Err(Error::DimensionMismatch(format!(
                    "{name} noise needs a {d}x{k} frame with k < d, got {cols} columns"
                )));
            }
            Ok(())
        };
        Ok(match *self {
            NoiseModel::None => DMatrix::zeros(d, cols),
            NoiseModel::Drift { eps, beta } => {
                needs_k("drift")?;
                inst.basis() * drift_noise(eps, lambda_k, beta, d, k)
            }
            NoiseModel::Rotation { beta } => {
                needs_k("rotation")?;
                inst.basis() * rotation_noise(ctx.t, lambda_k, beta, ctx.cos_theta, d, k)
            }
            NoiseModel::SampledAdversarial { xi, seed } => {
                sampled_adversarial_noise(xi, inst.basis(), cols, seed, t)
            }
            NoiseModel::Spherical { xi, seed } => spherical_noise(xi, d, cols, seed, t),
            NoiseModel::Bounded { eps, seed } => {
                let margin = (lambda_k - 2.0 * ctx.beta.sqrt()).max(0.0);
                let xi = (1.0 - 1e-9) * NOISE_CONSTANT * margin * ctx.cos_theta.min(eps);
                sampled_adversarial_noise(xi, inst.basis(), cols, seed, t)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::principal_angles;
    use crate::power::{check_noise_conditions, TheoryParams};

    #[test]
    fn diag_instance_layout() {
        let inst = diag_instance(1.0, 1.0 / 16.0, 4, 2).unwrap();
        assert_eq!(inst.eigenvalues(), &[1.0, 1.0, 0.5, 0.5]);
        let p = TheoryParams::new(0.1, 1.0, 1.0 / 16.0).unwrap();
        assert!((p.delta - 0.5).abs() < 1e-15);
        assert!(matches!(
            diag_instance(1.0, 0.25, 4, 2),
            Err(Error::InvalidGap { .. })
        ));
    }

    #[test]
    fn tilted_init_tangent() {
        let u = Frame::identity_columns(6, 3).unwrap();
        let x = tilted_init(0.1, 6, 3).unwrap();
        let theta0 = 0.2f64.atan();
        assert!((x.as_matrix()[(2, 2)] - theta0.cos()).abs() < 1e-15);
        assert!((x.as_matrix()[(3, 2)] - theta0.sin()).abs() < 1e-15);
        assert!((principal_angles(&u, &x).unwrap().tan_k - 0.2).abs() < 1e-14);
        assert_eq!(tilted_init(0.0, 6, 3).unwrap(), u);
    }

    #[test]
    fn drift_noise_entries_and_conditions() {
        let xi = drift_noise(0.1, 1.0, 1.0 / 16.0, 4, 2);
        assert!((xi[(2, 1)] - 0.4).abs() < 1e-15);
        assert_eq!(xi.iter().filter(|v| **v != 0.0).count(), 1);
        assert!((spectral_norm(&xi) - 0.4).abs() < 1e-15);
        let inst = diag_instance(1.0, 1.0 / 16.0, 4, 2).unwrap();
        let x = Frame::identity_columns(4, 2).unwrap();
        let p = TheoryParams::new(0.1, 1.0, 1.0 / 16.0).unwrap();
        assert_eq!(
            check_noise_conditions(&xi, &inst, &x, &p).unwrap(),
            (false, true)
        );
    }

    #[test]
    fn rotation_noise_entries() {
        assert_eq!(
            rotation_noise(3, 1.0, 1.0 / 16.0, 0.0, 4, 2),
            DMatrix::zeros(4, 2)
        );
        let xi = rotation_noise(3, 1.0, 1.0 / 16.0, 0.8, 4, 2);
        assert!((xi[(1, 1)] + 0.4).abs() < 1e-15);
        let xi0 = rotation_noise(0, 1.0, 1.0 / 16.0, 0.8, 4, 2);
        assert!((xi0[(1, 1)] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn rotation_noise_breaks_only_the_small_constant() {
        let inst = diag_instance(1.0, 1.0 / 16.0, 4, 2).unwrap();
        let x = tilted_init(0.1, 4, 2).unwrap();
        let cos = inst.angles(&x).unwrap().cos_k;
        let xi = rotation_noise(1, 1.0, 1.0 / 16.0, cos, 4, 2);
        let mut p = TheoryParams::new(0.1, 1.0, 1.0 / 16.0).unwrap();
        assert!(!check_noise_conditions(&xi, &inst, &x, &p).unwrap().1);
        p.c = 1.0;
        assert!(check_noise_conditions(&xi, &inst, &x, &p).unwrap().1);
    }

    #[test]
    fn sampled_norms_and_signs() {
        let basis = crate::linalg::gaussian_frame(12, 12, &mut crate::rng::seeded(1))
            .unwrap()
            .into_matrix();
        assert_eq!(
            sampled_adversarial_noise(0.0, &basis, 3, 1, 0),
            DMatrix::zeros(12, 3)
        );
        assert_eq!(spherical_noise(0.0, 12, 3, 1, 0), DMatrix::zeros(12, 3));
        for seed in 0..20 {
            let xi = sampled_adversarial_noise(0.3, &basis, 3, seed, 5);
            assert!((spectral_norm(&xi) - 0.3).abs() < 1e-12);
            let inner = basis.transpose() * &xi;
            assert!(inner.max() <= 0.0);
            let s = spherical_noise(0.3, 12, 3, seed, 5);
            assert!((spectral_norm(&s) - 0.3).abs() < 1e-12);
        }
        assert_ne!(
            sampled_adversarial_noise(0.3, &basis, 3, 1, 0),
            sampled_adversarial_noise(0.3, &basis, 3, 1, 1)
        );
    }

    #[test]
    fn spherical_mean_is_near_zero() {
        let (d, k, xi, n) = (6usize, 2usize, 1.0, 1000u64);
        let mut sum = DMatrix::zeros(d, k);
        for seed in 0..n {
            sum += spherical_noise(xi, d, k, seed, 0);
        }
        let mean = sum / n as f64;
        let tol = 5.0 * xi / ((n as usize * d * k) as f64).sqrt();
        assert!(mean.amax() <= tol);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_tan(0, 0.7, 1.0, 0.1), 0.7);
        for t in [1, 10, 100] {
            assert!((closed_form_tan(t, 0.7, 1.0, 0.25) - 0.7).abs() < 1e-12);
        }
        assert!((closed_form_tan(1, 0.7, 2.0, 0.25) - 0.35).abs() < 1e-15);
    }
}
