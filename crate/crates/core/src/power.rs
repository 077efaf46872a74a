//! Centralized noisy power iteration with momentum.
//!
//! The iteration is `Y_{t+1} = A X_t - beta X_{t-1} R_t^{-1} + Xi_t` followed
//! by `X_{t+1}, R_{t+1} = QR(Y_{t+1})`, started from
//! `X_1, R_1 = QR(A X_0 / 2 + Xi_0)`. With `beta = 0` it is the plain noisy
//! power method.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    gaussian_frame, orthonormality_error, principal_angles, qr_unique, spectral_norm, AngleSet,
    Frame, UpperTriangular,
};
use crate::rng::seeded;

/// Noise constant in the perturbation conditions.
pub const NOISE_CONSTANT: f64 = 1.0 / 32.0;

/// PSD matrix `A = U diag(lambda) U^T` with a target rank `k`.
#[derive(Debug, Clone)]
pub struct SpectralInstance {
    eigenvalues: Vec<f64>,
    basis: DMatrix<f64>,
    k: usize,
    dense: DMatrix<f64>,
    top: Frame,
}

impl SpectralInstance {
    pub fn new(eigenvalues: Vec<f64>, basis: DMatrix<f64>, k: usize) -> Result<Self> {
        let d = eigenvalues.len();
        if basis.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "{d} eigenvalues but a {}x{} basis",
                basis.nrows(),
                basis.ncols()
            )));
        }
        if k == 0 || k > d {
            return Err(Error::DimensionMismatch(format!(
                "target rank {k} outside 1..={d}"
            )));
        }
        if let Some(i) = eigenvalues.windows(2).position(|w| !(w[0] >= w[1])) {
            return Err(Error::SpectrumOrderViolation(format!(
                "lambda_{} = {} < lambda_{} = {}",
                i + 1,
                eigenvalues[i],
                i + 2,
                eigenvalues[i + 1]
            )));
        }
        if !(eigenvalues[d - 1] >= 0.0) {
            return Err(Error::SpectrumOrderViolation(format!(
                "smallest eigenvalue {} is negative",
                eigenvalues[d - 1]
            )));
        }
        let err = orthonormality_error(&basis);
        if !(err <= 1e-10) {
            return Err(Error::NotOrthonormal(err));
        }
        let scaled = DMatrix::from_fn(d, d, |i, j| basis[(i, j)] * eigenvalues[j]);
        let a = &scaled * basis.transpose();
        let dense = (&a + a.transpose()) * 0.5;
        let top = Frame::from_orthonormal(basis.columns(0, k).into_owned());
        Ok(SpectralInstance {
            eigenvalues,
            basis,
            k,
            dense,
            top,
        })
    }

    /// `diag(eigenvalues)` in the canonical basis.
    pub fn diagonal(eigenvalues: Vec<f64>, k: usize) -> Result<Self> {
        let d = eigenvalues.len();
        SpectralInstance::new(eigenvalues, DMatrix::identity(d, d), k)
    }

    /// Spectrum `lambda_1` (k-1 times), `lambda_k`, `lambda_{k+1}`, `lambda_d`
    /// (d-k-1 times) in a seeded random orthogonal basis.
    pub fn synthetic(
        d: usize,
        k: usize,
        lambda_1: f64,
        lambda_k: f64,
        lambda_k1: f64,
        lambda_d: f64,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || d < k + 1 {
            return Err(Error::DimensionMismatch(format!(
                "synthetic spectrum needs 1 <= k < d, got d = {d}, k = {k}"
            )));
        }
        if !(lambda_1 >= lambda_k
            && lambda_k > lambda_k1
            && lambda_k1 >= lambda_d
            && lambda_d >= 0.0)
        {
            return Err(Error::SpectrumOrderViolation(format!(
                "need lambda_1 >= lambda_k > lambda_k+1 >= lambda_d >= 0, got \
                 {lambda_1}, {lambda_k}, {lambda_k1}, {lambda_d}"
            )));
        }
        let mut eigenvalues = vec![lambda_1; k - 1];
        eigenvalues.push(lambda_k);
        eigenvalues.push(lambda_k1);
        eigenvalues.resize(d, lambda_d);
        let basis = gaussian_frame(d, d, &mut seeded(seed))?.into_matrix();
        SpectralInstance::new(eigenvalues, basis, k)
    }

    /// Random spectrum in `[0.05, 1]` with a random basis.
    pub fn random_psd<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Self> {
        let mut eigenvalues: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let basis = gaussian_frame(d, d, rng)?.into_matrix();
        SpectralInstance::new(eigenvalues, basis, k)
    }

    /// Same matrix with a different target rank.
    pub fn with_rank(&self, k: usize) -> Result<Self> {
        SpectralInstance::new(self.eigenvalues.clone(), self.basis.clone(), k)
    }

    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `lambda_i`, 1-based.
    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i - 1]
    }

    pub fn lambda_k(&self) -> f64 {
        self.lambda(self.k)
    }

    /// `lambda_{k+1}`, or 0 when `k = d`.
    pub fn lambda_k1(&self) -> f64 {
        self.eigenvalues.get(self.k).copied().unwrap_or(0.0)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn u_k(&self) -> &Frame {
        &self.top
    }

    pub fn u_minus_k(&self) -> Option<Frame> {
        let (d, k) = (self.d(), self.k);
        (k < d).then(|| Frame::from_orthonormal(self.basis.columns(k, d - k).into_owned()))
    }

    /// `lambda_{k+1}^2 / 4`.
    pub fn beta_star(&self) -> f64 {
        self.lambda_k1().powi(2) / 4.0
    }

    /// `1 - lambda_{k+1} / lambda_k`.
    pub fn gap(&self) -> f64 {
        1.0 - self.lambda_k1() / self.lambda_k()
    }

    /// Principal angles between `U_k` and the first `k` columns of `x`.
    pub fn angles(&self, x: &Frame) -> Result<AngleSet> {
        if x.k() == self.k {
            principal_angles(&self.top, x)
        } else {
            principal_angles(&self.top, &x.leading(self.k)?)
        }
    }
}

/// Constants of the convergence guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub eps: f64,
    pub c: f64,
    pub lambda_k: f64,
    pub beta: f64,
    /// `(lambda_k - 2 sqrt(beta)) / lambda_k`.
    pub delta: f64,
}

impl TheoryParams {
    pub fn new(eps: f64, lambda_k: f64, beta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "precision must lie in (0, 1), got {eps}"
            )));
        }
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "momentum must be >= 0, got {beta}"
            )));
        }
        let threshold = 2.0 * beta.sqrt();
        if !(lambda_k > threshold) {
            return Err(Error::InvalidGap {
                lambda_k,
                threshold,
            });
        }
        Ok(TheoryParams {
            eps,
            c: NOISE_CONSTANT,
            lambda_k,
            beta,
            delta: (lambda_k - threshold) / lambda_k,
        })
    }

    /// `lambda_k - 2 sqrt(beta)`.
    pub fn margin(&self) -> f64 {
        self.lambda_k - 2.0 * self.beta.sqrt()
    }

    /// `1 / sqrt(1 + (eps/2 + tan theta_0)^2)`.
    pub fn alpha0(&self, tan_theta0: f64) -> f64 {
        1.0 / (1.0 + (self.eps / 2.0 + tan_theta0).powi(2)).sqrt()
    }
}

/// Iteration count after which `sin theta_k <= eps` is guaranteed.
pub fn theory_iterations(tan_theta0: f64, params: &TheoryParams) -> usize {
    let numerator = (2.0 * tan_theta0 / params.eps).ln();
    if !(numerator > 0.0) {
        return 0;
    }
    let rate = -(1.0 - params.delta.sqrt() / 2.0).ln();
    (numerator / rate).ceil() as usize
}

/// Seeded Q-factor of a Gaussian `d x k` matrix.
pub fn random_init(d: usize, k: usize, seed: u64) -> Result<Frame> {
    if k == 0 || k > d {
        return Err(Error::DimensionMismatch(format!(
            "initial frame needs 1 <= k <= d, got d = {d}, k = {k}"
        )));
    }
    gaussian_frame(d, k, &mut seeded(seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMode {
    Fixed(f64),
    Adaptive,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Frame,
    pub x_prev: Frame,
    pub r: UpperTriangular,
    pub beta: f64,
    pub t: usize,
    pub mode: BetaMode,
}

fn check_shapes(inst: &SpectralInstance, x: &Frame, xi: &DMatrix<f64>) -> Result<()> {
    if x.d() != inst.d() || xi.shape() != (x.d(), x.k()) {
        return Err(Error::DimensionMismatch(format!(
            "instance d = {}, frame {}x{}, noise {}x{}",
            inst.d(),
            x.d(),
            x.k(),
            xi.nrows(),
            xi.ncols()
        )));
    }
    Ok(())
}

/// `X_1, R_1 = QR(A X_0 / 2 + Xi_0)` with a fixed momentum.
pub fn anpm_init(
    inst: &SpectralInstance,
    x0: &Frame,
    beta: f64,
    xi0: &DMatrix<f64>,
) -> Result<SolverState> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "momentum must be >= 0, got {beta}"
        )));
    }
    check_shapes(inst, x0, xi0)?;
    let y = inst.matrix() * x0.as_matrix() * 0.5 + xi0;
    let (x, r) = qr_unique(&y)?;
    Ok(SolverState {
        x,
        x_prev: x0.clone(),
        r,
        beta,
        t: 1,
        mode: BetaMode::Fixed(beta),
    })
}

/// One momentum step with the state's current `beta`.
pub fn anpm_step(
    state: SolverState,
    inst: &SpectralInstance,
    xi: &DMatrix<f64>,
) -> Result<SolverState> {
    check_shapes(inst, &state.x, xi)?;
    let product = inst.matrix() * state.x.as_matrix() + xi;
    let beta = state.beta;
    advance(state, &product, beta)
}

/// `Y = product - beta X_{t-1} R_t^{-1}`, then QR. `product` is the noisy
/// `A X_t + Xi_t`.
pub(crate) fn advance(
    state: SolverState,
    product: &DMatrix<f64>,
    beta: f64,
) -> Result<SolverState> {
    let y = if beta == 0.0 {
        product.clone()
    } else {
        product - state.r.solve_right(state.x_prev.as_matrix())? * beta
    };
    let (x, r) = qr_unique(&y)?;
    Ok(SolverState {
        x_prev: state.x,
        x,
        r,
        beta,
        t: state.t + 1,
        mode: state.mode,
    })
}

/// `min_j [X^T P]_{jj}^2 / 4` over the `k + 1` columns.
pub fn adaptive_beta(x: &Frame, product: &DMatrix<f64>) -> Result<f64> {
    if product.shape() != (x.d(), x.k()) {
        return Err(Error::DimensionMismatch(format!(
            "frame is {}x{} but the product is {}x{}",
            x.d(),
            x.k(),
            product.nrows(),
            product.ncols()
        )));
    }
    let m = x.as_matrix();
    let min_sq = (0..x.k())
        .map(|j| m.column(j).dot(&product.column(j)).powi(2))
        .fold(f64::INFINITY, f64::min);
    Ok(min_sq / 4.0)
}

/// Norms of the noise split along `U_k` and its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseNorms {
    pub total: f64,
    pub along: f64,
    pub across: f64,
}

pub fn noise_norms(xi: &DMatrix<f64>, inst: &SpectralInstance) -> NoiseNorms {
    let u = inst.u_k().as_matrix();
    let coords = u.transpose() * xi;
    // U_{-k} U_{-k}^T = I - U_k U_k^T, and U_{-k} has orthonormal columns
    let residual = xi - u * &coords;
    NoiseNorms {
        total: spectral_norm(xi),
        along: spectral_norm(&coords),
        across: spectral_norm(&residual),
    }
}

fn condition_flags(
    norms: NoiseNorms,
    margin: f64,
    c: f64,
    eps: f64,
    cos_theta: f64,
) -> (bool, bool) {
    (
        norms.across <= c * margin * eps,
        norms.along <= c * margin * cos_theta,
    )
}

/// The two perturbation conditions, the second against `cos theta_k(U_k, X_t)`.
pub fn check_noise_conditions(
    xi: &DMatrix<f64>,
    inst: &SpectralInstance,
    x: &Frame,
    params: &TheoryParams,
) -> Result<(bool, bool)> {
    if xi.nrows() != inst.d() {
        return Err(Error::DimensionMismatch(format!(
            "noise has {} rows, instance d = {}",
            xi.nrows(),
            inst.d()
        )));
    }
    let cos = inst.angles(x)?.cos_k;
    Ok(condition_flags(
        noise_norms(xi, inst),
        params.margin(),
        params.c,
        params.eps,
        cos,
    ))
}

/// What a noise source sees when asked for `Xi_t`.
pub struct NoiseContext<'a> {
    pub t: usize,
    pub instance: &'a SpectralInstance,
    /// Full current frame (k or k+1 columns).
    pub x: &'a Frame,
    /// `cos theta_k(U_k, X_t)` on the first k columns.
    pub cos_theta: f64,
    /// Momentum currently in effect.
    pub beta: f64,
}

/// Source of the perturbations `Xi_t`.
pub trait Perturbation {
    /// Returns a `d x cols` matrix where `cols = ctx.x.k()`.
    fn sample(&self, ctx: &NoiseContext<'_>) -> Result<DMatrix<f64>>;
}

/// No perturbation at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct Noiseless;

impl Perturbation for Noiseless {
    fn sample(&self, ctx: &NoiseContext<'_>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(ctx.x.d(), ctx.x.k()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub beta: BetaMode,
    pub iterations: usize,
    /// Precision used for the first perturbation condition.
    pub eps: f64,
    pub c: f64,
    /// Seed for the extra column appended in adaptive mode.
    pub extra_column_seed: u64,
    pub keep_iterates: bool,
}

impl SolverConfig {
    pub fn new(beta: BetaMode, iterations: usize) -> Self {
        SolverConfig {
            beta,
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

/// One row of a run: state of `X_t` and the perturbation `Xi_{t-1}` that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub sin_theta: f64,
    pub cos_theta: f64,
    pub tan_theta: f64,
    pub beta: f64,
    pub noise_norm: f64,
    pub noise_uk_norm: f64,
    pub noise_uminusk_norm: f64,
    pub cond_a: bool,
    pub cond_b: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    /// `X_1..X_T` when requested.
    pub iterates: Vec<Frame>,
}

impl RunTrace {
    pub fn final_sin(&self) -> Option<f64> {
        self.records.last().map(|r| r.sin_theta)
    }

    /// First `t` with `sin theta_k <= tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.sin_theta <= tol)
            .map(|r| r.t)
    }

    pub fn violations(&self) -> (usize, usize) {
        self.records.iter().fold((0, 0), |(a, b), r| {
            (a + usize::from(!r.cond_a), b + usize::from(!r.cond_b))
        })
    }

    pub fn tan_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tan_theta).collect()
    }

    pub fn sin_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sin_theta).collect()
    }
}

/// Runs `T` iterations from `X_0` and records `t = 1..=T`.
///
/// In adaptive mode the solver carries `k + 1` columns and reports angles of
/// the first `k`.
pub fn run_solver<P: Perturbation + ?Sized>(
    inst: &SpectralInstance,
    x0: &Frame,
    noise: &P,
    config: &SolverConfig,
) -> Result<RunTrace> {
    if config.iterations == 0 {
        return Err(Error::InvalidParameter(
            "iteration budget must be >= 1".into(),
        ));
    }
    if x0.d() != inst.d() || x0.k() != inst.k() {
        return Err(Error::DimensionMismatch(format!(
            "initial frame is {}x{}, expected {}x{}",
            x0.d(),
            x0.k(),
            inst.d(),
            inst.k()
        )));
    }
    let adaptive = config.beta == BetaMode::Adaptive;
    let start = if adaptive {
        x0.extend_with_gaussian(&mut seeded(config.extra_column_seed))?
    } else {
        x0.clone()
    };
    let fixed_beta = match config.beta {
        BetaMode::Fixed(b) => b,
        BetaMode::Adaptive => 0.0,
    };
    let a = inst.matrix();
    let lambda_k = inst.lambda_k();

    let mut trace = RunTrace::default();
    let record = |trace: &mut RunTrace,
                  t: usize,
                  x: &Frame,
                  xi: &DMatrix<f64>,
                  beta: f64,
                  cos_prev: f64|
     -> Result<f64> {
        let angles = inst.angles(x)?;
        let norms = noise_norms(xi, inst);
        let margin = lambda_k - 2.0 * beta.sqrt();
        let (cond_a, cond_b) = condition_flags(norms, margin, config.c, config.eps, cos_prev);
        trace.records.push(TraceRecord {
            t,
            sin_theta: angles.sin_k,
            cos_theta: angles.cos_k,
            tan_theta: angles.tan_k,
            beta,
            noise_norm: norms.total,
            noise_uk_norm: norms.along,
            noise_uminusk_norm: norms.across,
            cond_a,
            cond_b,
        });
        if config.keep_iterates {
            trace.iterates.push(x.clone());
        }
        Ok(angles.cos_k)
    };

    // t = 0 -> 1
    let cos0 = inst.angles(x0)?.cos_k;
    let xi0 = noise.sample(&NoiseContext {
        t: 0,
        instance: inst,
        x: &start,
        cos_theta: cos0,
        beta: fixed_beta,
    })?;
    check_shapes(inst, &start, &xi0)?;
    let ax0 = a * start.as_matrix();
    let y1 = &ax0 * 0.5 + &xi0;
    let (x1, r1) = qr_unique(&y1).map_err(|e| e.at_step(1))?;
    let beta1 = if adaptive {
        adaptive_beta(&start, &(ax0 + &xi0 * 2.0))?
    } else {
        fixed_beta
    };
    let mut state = SolverState {
        x: x1,
        x_prev: start,
        r: r1,
        beta: beta1,
        t: 1,
        mode: config.beta,
    };
    let mut cos = record(&mut trace, 1, &state.x, &xi0, beta1, cos0)?;

    for t in 1..config.iterations {
        let xi = noise
            .sample(&NoiseContext {
                t,
                instance: inst,
                x: &state.x,
                cos_theta: cos,
                beta: state.beta,
            })
            .map_err(|e| e.at_step(t + 1))?;
        check_shapes(inst, &state.x, &xi)?;
        let product = a * state.x.as_matrix() + &xi;
        let beta = if adaptive {
            adaptive_beta(&state.x, &product)?
        } else {
            fixed_beta
        };
        state = advance(state, &product, beta).map_err(|e| e.at_step(t + 1))?;
        cos = record(&mut trace, t + 1, &state.x, &xi, beta, cos)?;
    }
    Ok(trace)
}
