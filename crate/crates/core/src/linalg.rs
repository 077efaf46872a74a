//! Dense linear-algebra kernels: sign-canonical QR, principal angles between
//! subspaces, and QR perturbation diagnostics.
//!
//! All routines work in `f64` on [`nalgebra::DMatrix`] and are pure.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::gaussian_matrix;

/// Tolerance on `||X^T X - I||_F` for a matrix to count as a [`Frame`].
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Relative singular-value floor below which a matrix is rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// A `d x k` matrix with orthonormal columns, `1 <= k <= d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame(DMatrix<f64>);

impl Frame {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (d, k) = data.shape();
        if k == 0 || k > d {
            return Err(Error::DimensionMismatch(format!(
                "a frame needs 1 <= k <= d, got {d}x{k}"
            )));
        }
        let err = orthonormality_error(&data);
        if !(err <= ORTHONORMALITY_TOL) {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Frame(data))
    }

    /// Wraps a matrix whose columns are orthonormal by construction.
    pub(crate) fn from_orthonormal(data: DMatrix<f64>) -> Self {
        debug_assert!(orthonormality_error(&data) <= 1e-8);
        Frame(data)
    }

    /// The first `k` columns of `I_d`.
    pub fn identity_columns(d: usize, k: usize) -> Result<Self> {
        Frame::new(DMatrix::identity(d, k))
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Frame made of the first `k` columns.
    pub fn leading(&self, k: usize) -> Result<Frame> {
        if k == 0 || k > self.k() {
            return Err(Error::DimensionMismatch(format!(
                "cannot take {k} leading columns of a frame with {}",
                self.k()
            )));
        }
        Ok(Frame(self.0.columns(0, k).into_owned()))
    }

    /// Orthonormal basis of the orthogonal complement of the range.
    ///
    /// Returns `None` when the frame already spans the whole space.
    pub fn complement(&self) -> Option<Frame> {
        let (d, k) = self.0.shape();
        if k == d {
            return None;
        }
        let projector = DMatrix::identity(d, d) - &self.0 * self.0.transpose();
        let (values, vectors) = sorted_symmetric_eigen(projector);
        debug_assert!(values[d - k - 1] > 0.5);
        Some(Frame(vectors.columns(0, d - k).into_owned()))
    }

    /// Appends one column drawn as a Gaussian vector orthogonalized against
    /// the existing columns. The original columns are kept bit for bit.
    pub fn extend_with_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Frame> {
        let (d, k) = self.0.shape();
        if k >= d {
            return Err(Error::DimensionMismatch(format!(
                "cannot extend a {d}x{k} frame"
            )));
        }
        let mut g = gaussian_matrix(d, 1, rng);
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            let proj = &self.0 * (self.0.transpose() * &g);
            g -= proj;
        }
        let norm = g.norm();
        if !(norm > RANK_TOL) {
            return Err(Error::RankDeficient {
                sigma_min: norm,
                sigma_max: 1.0,
            });
        }
        g /= norm;
        let mut data = DMatrix::zeros(d, k + 1);
        data.columns_mut(0, k).copy_from(&self.0);
        data.column_mut(k).copy_from(&g.column(0));
        Ok(Frame(data))
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }
}

impl AsRef<DMatrix<f64>> for Frame {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A `k x k` upper-triangular matrix with non-negative diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTriangular(DMatrix<f64>);

impl UpperTriangular {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "triangular factor must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let n = data.nrows();
        for j in 0..n {
            if data[(j, j)] < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "diagonal entry {j} is negative"
                )));
            }
            for i in j + 1..n {
                if data[(i, j)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i}, {j}) below the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(UpperTriangular(data))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    /// `m * R^{-1}` by a triangular solve.
    pub fn solve_right(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot right-divide a {}x{} matrix by a {}x{} factor",
                m.nrows(),
                m.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        // Z R = M  <=>  R^T Z^T = M^T
        self.0
            .tr_solve_upper_triangular(&m.transpose())
            .map(|zt| zt.transpose())
            .ok_or(Error::RankDeficient {
                sigma_min: 0.0,
                sigma_max: self.0.norm(),
            })
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.solve_right(&DMatrix::identity(self.dim(), self.dim()))
    }
}

/// Principal angles between two `k`-dimensional subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    /// Angles in radians, nondecreasing, each in `[0, pi/2]`.
    pub angles: Vec<f64>,
    pub cos_k: f64,
    pub sin_k: f64,
    /// `+inf` when `cos_k == 0`.
    pub tan_k: f64,
}

impl AngleSet {
    pub fn theta_k(&self) -> f64 {
        *self.angles.last().expect("angle set is never empty")
    }
}

/// QR factorization `Y = Q R` with `R` having a non-negative diagonal.
///
/// For full-rank `Y` this is the unique factorization with positive
/// diagonal. Column signs of the Householder factors are flipped where the
/// diagonal of `R` comes out negative.
pub fn qr_unique(y: &DMatrix<f64>) -> Result<(Frame, UpperTriangular)> {
    let (d, k) = y.shape();
    if k == 0 || d < k {
        return Err(Error::DimensionMismatch(format!(
            "QR needs d >= k >= 1, got {d}x{k}"
        )));
    }
    let qr = y.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    // Q is orthonormal, so R carries the singular values of Y.
    let (sigma_min, sigma_max) = extreme_singular_values(&r);
    if !(sigma_max > 0.0) || !(sigma_min >= RANK_TOL * sigma_max) {
        return Err(Error::RankDeficient {
            sigma_min,
            sigma_max,
        });
    }
    Ok((Frame(q), UpperTriangular(r)))
}

/// Principal angles between `range(U)` and `range(X)`.
///
/// Cosines come from the singular values of `U^T X` and sines from those of
/// the residual `X - U U^T X`; pairing both keeps small and large angles
/// accurate to roundoff.
pub fn principal_angles(u: &Frame, x: &Frame) -> Result<AngleSet> {
    if u.d() != x.d() || u.k() != x.k() {
        return Err(Error::DimensionMismatch(format!(
            "principal angles need equal shapes, got {}x{} and {}x{}",
            u.d(),
            u.k(),
            x.d(),
            x.k()
        )));
    }
    let gram = u.as_matrix().transpose() * x.as_matrix();
    let residual = x.as_matrix() - u.as_matrix() * &gram;

    let mut cosines: Vec<f64> = gram
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    cosines.sort_by(|a, b| b.total_cmp(a));
    let mut sines: Vec<f64> = residual
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    sines.sort_by(|a, b| a.total_cmp(b));

    let angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(c, s)| s.atan2(*c))
        .collect();
    let cos_k = *cosines.last().unwrap();
    let sin_k = *sines.last().unwrap();
    let tan_k = if cos_k == 0.0 {
        f64::INFINITY
    } else {
        sin_k / cos_k
    };
    Ok(AngleSet {
        angles,
        cos_k,
        sin_k,
        tan_k,
    })
}

/// `||(V^T X)(U^T X)^{-1}||_2` where `V = ucomp` spans the complement of `U`.
pub fn tan_theta_via_ratio(u: &Frame, ucomp: &Frame, x: &Frame) -> Result<f64> {
    let d = u.d();
    if x.d() != d || ucomp.d() != d || x.k() != u.k() || ucomp.k() + u.k() != d {
        return Err(Error::DimensionMismatch(format!(
            "expected U: {d}x{k}, Ucomp: {d}x{}, X: {d}x{k}",
            d - u.k(),
            k = u.k()
        )));
    }
    let gram = u.as_matrix().transpose() * x.as_matrix();
    let (sigma_min, _) = extreme_singular_values(&gram);
    if !(sigma_min >= RANK_TOL) {
        return Err(Error::SingularProjection);
    }
    let inv = gram.try_inverse().ok_or(Error::SingularProjection)?;
    let h = ucomp.as_matrix().transpose() * x.as_matrix() * inv;
    Ok(spectral_norm(&h))
}

/// Outcome of [`qr_perturbation_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QrPerturbation {
    /// Upper bounds on `||dQ||_F` and `||dR||_F`.
    Bounds { q: f64, r: f64 },
    /// `||X^+||_2 ||dX||_2 >= 1`; the value of that product is kept.
    NotApplicable { product: f64 },
}

/// First-order-free bounds on how far the QR factors of `X + dX` move from
/// those of `X`.
pub fn qr_perturbation_bounds(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Result<QrPerturbation> {
    if x.shape() != dx.shape() {
        return Err(Error::DimensionMismatch(format!(
            "X is {:?} but dX is {:?}",
            x.shape(),
            dx.shape()
        )));
    }
    let (d, p) = x.shape();
    if p == 0 || d < p {
        return Err(Error::DimensionMismatch(format!(
            "perturbation bounds need d >= p >= 1, got {d}x{p}"
        )));
    }
    let (sigma_min, sigma_max) = extreme_singular_values(x);
    if !(sigma_max > 0.0) || !(sigma_min >= RANK_TOL * sigma_max) {
        return Err(Error::RankDeficient {
            sigma_min,
            sigma_max,
        });
    }
    let pinv_norm = 1.0 / sigma_min;
    let product = pinv_norm * spectral_norm(dx);
    if product >= 1.0 {
        return Ok(QrPerturbation::NotApplicable { product });
    }
    let q = std::f64::consts::SQRT_2 * pinv_norm * dx.norm() / (1.0 - product);
    Ok(QrPerturbation::Bounds {
        q,
        r: q * sigma_max,
    })
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// `(sigma_min, sigma_max)` over the `min(rows, cols)` singular values.
pub fn extreme_singular_values(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.singular_values();
    (sv.min(), sv.max())
}

pub fn orthonormality_error(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    (m.transpose() * m - DMatrix::<f64>::identity(k, k)).norm()
}

/// Symmetric eigendecomposition with eigenvalues sorted in non-increasing
/// order and eigenvectors permuted to match.
pub fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors
            .column_mut(dst)
            .copy_from(&eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Q-factor of a Gaussian `d x k` matrix.
pub fn gaussian_frame<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Frame> {
    let g = gaussian_matrix(d, k, rng);
    Ok(qr_unique(&g)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use nalgebra::dmatrix;

    #[test]
    fn qr_of_identity_columns_is_trivial() {
        let y = DMatrix::<f64>::identity(5, 3);
        let (q, r) = qr_unique(&y).unwrap();
        assert!((q.as_matrix() - &y).norm() < 1e-14);
        assert!((r.as_matrix() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn qr_flips_signs_to_keep_r_positive() {
        let y = dmatrix![-1.0; 0.0];
        let (q, r) = qr_unique(&y).unwrap();
        assert!((q.as_matrix() - dmatrix![-1.0; 0.0]).norm() < 1e-15);
        assert!((r.as_matrix()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn qr_of_permuted_columns() {
        let y = dmatrix![0.0, 1.0; 1.0, 0.0; 0.0, 0.0];
        let (q, r) = qr_unique(&y).unwrap();
        assert!((q.as_matrix() - &y).norm() < 1e-14);
        assert!((r.as_matrix() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn qr_rejects_collapsed_input() {
        let y = dmatrix![1.0, 2.0; 2.0, 4.0; 3.0, 6.0];
        assert!(matches!(qr_unique(&y), Err(Error::RankDeficient { .. })));
        let zero = DMatrix::<f64>::zeros(4, 2);
        assert!(matches!(qr_unique(&zero), Err(Error::RankDeficient { .. })));
        let wide = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(qr_unique(&wide), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn qr_reconstructs_random_input() {
        let mut rng = seeded(3);
        let y = gaussian_matrix(20, 6, &mut rng);
        let (q, r) = qr_unique(&y).unwrap();
        let rel = (q.as_matrix() * r.as_matrix() - &y).norm() / y.norm();
        assert!(rel < 1e-12);
        assert!(r.diagonal().iter().all(|&v| v > 0.0));
        assert!(q.orthonormality_error() < 1e-12);
    }

    #[test]
    fn angles_of_identical_subspaces_are_zero() {
        let x = gaussian_frame(8, 3, &mut seeded(1)).unwrap();
        let a = principal_angles(&x, &x).unwrap();
        assert!(a.angles.iter().all(|&t| t.abs() < 1e-7));
        assert!(a.tan_k < 1e-14);
    }

    #[test]
    fn planar_rotation_angle() {
        let theta: f64 = 0.3;
        let u = Frame::new(dmatrix![1.0; 0.0]).unwrap();
        let x = Frame::new(dmatrix![theta.cos(); theta.sin()]).unwrap();
        let a = principal_angles(&u, &x).unwrap();
        assert!((a.theta_k() - 0.3).abs() < 1e-14);
        assert!((a.tan_k - theta.tan()).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_subspaces_have_infinite_tangent() {
        let d = 6;
        let k = 3;
        let u = Frame::identity_columns(d, k).unwrap();
        let mut m = DMatrix::zeros(d, k);
        for j in 0..k {
            m[(k + j, j)] = 1.0;
        }
        let x = Frame::new(m).unwrap();
        let a = principal_angles(&u, &x).unwrap();
        assert!(a
            .angles
            .iter()
            .all(|&t| (t - std::f64::consts::FRAC_PI_2).abs() < 1e-15));
        assert_eq!(a.cos_k, 0.0);
        assert_eq!(a.tan_k, f64::INFINITY);
    }

    #[test]
    fn angle_shapes_must_match() {
        let u = Frame::identity_columns(4, 2).unwrap();
        let x = Frame::identity_columns(4, 1).unwrap();
        assert!(matches!(
            principal_angles(&u, &x),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ratio_tangent_planar_and_identity() {
        let theta: f64 = 0.3;
        let u = Frame::new(dmatrix![1.0; 0.0]).unwrap();
        let v = Frame::new(dmatrix![0.0; 1.0]).unwrap();
        let x = Frame::new(dmatrix![theta.cos(); theta.sin()]).unwrap();
        assert!((tan_theta_via_ratio(&u, &v, &x).unwrap() - theta.tan()).abs() < 1e-14);
        assert!(tan_theta_via_ratio(&u, &v, &u).unwrap().abs() < 1e-15);
        assert!(matches!(
            tan_theta_via_ratio(&u, &v, &v),
            Err(Error::SingularProjection)
        ));
    }

    #[test]
    fn complement_spans_the_rest() {
        let x = gaussian_frame(7, 3, &mut seeded(9)).unwrap();
        let c = x.complement().unwrap();
        assert_eq!(c.k(), 4);
        assert!((x.as_matrix().transpose() * c.as_matrix()).norm() < 1e-12);
        assert!(c.orthonormality_error() < 1e-12);
        assert!(Frame::identity_columns(3, 3)
            .unwrap()
            .complement()
            .is_none());
    }

    #[test]
    fn extension_keeps_original_columns() {
        let x = gaussian_frame(10, 3, &mut seeded(2)).unwrap();
        let e = x.extend_with_gaussian(&mut seeded(4)).unwrap();
        assert_eq!(e.k(), 4);
        assert_eq!(e.as_matrix().columns(0, 3), x.as_matrix().columns(0, 3));
        assert!(e.orthonormality_error() < 1e-13);
    }

    #[test]
    fn perturbation_bounds_trivial_cases() {
        let mut rng = seeded(11);
        let x = gaussian_matrix(10, 3, &mut rng);
        let zero = DMatrix::zeros(10, 3);
        assert_eq!(
            qr_perturbation_bounds(&x, &zero).unwrap(),
            QrPerturbation::Bounds { q: 0.0, r: 0.0 }
        );
        // scale a perturbation so that ||X^+|| ||dX|| = 1.5
        let dx = gaussian_matrix(10, 3, &mut rng);
        let (smin, _) = extreme_singular_values(&x);
        let scale = 1.5 * smin / spectral_norm(&dx);
        let dx = dx * scale;
        match qr_perturbation_bounds(&x, &dx).unwrap() {
            QrPerturbation::NotApplicable { product } => assert!((product - 1.5).abs() < 1e-12),
            other => panic!("expected NotApplicable, got {other:?}"),
        }
        let flat = DMatrix::from_element(4, 2, 1.0);
        assert!(matches!(
            qr_perturbation_bounds(&flat, &DMatrix::zeros(4, 2)),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn upper_triangular_solve_right() {
        let r = UpperTriangular::new(dmatrix![2.0, 1.0; 0.0, 4.0]).unwrap();
        let m = dmatrix![2.0, 5.0; 4.0, 6.0; 0.0, 4.0];
        let z = r.solve_right(&m).unwrap();
        assert!((&z * r.as_matrix() - m).norm() < 1e-14);
        assert!(UpperTriangular::new(dmatrix![1.0, 0.0; 1.0, 1.0]).is_err());
    }
}
