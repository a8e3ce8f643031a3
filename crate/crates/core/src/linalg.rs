//! Dense complex linear algebra helpers shared by the link-level modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_identity(n: usize, value: f64) -> CMat {
    CMat::from_diagonal_element(n, n, C64::new(value, 0.0))
}

pub fn diag_real(values: &[f64]) -> CMat {
    let mut m = CMat::zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = C64::new(*v, 0.0);
    }
    m
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// `(m + mᴴ) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    (m - m.adjoint()).iter().all(|z| z.norm() <= tol * scale)
}

/// Circularly-symmetric standard complex Gaussian matrix, entries CN(0, 1).
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Thin SVD with singular values sorted in descending order.
pub struct SortedSvd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd_sorted(m: &CMat) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").adjoint();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = CMat::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = CMat::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
    SortedSvd { u, s, v }
}

/// Number of singular values above `rel_tol * s_max`.
pub fn numerical_rank(m: &CMat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = svd_sorted(m).s;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 || !smax.is_finite() {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * smax).count()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Inverse of a Hermitian positive-definite matrix.
///
/// Falls back to `m + ε·I` with `ε = 1e-12·tr(m)` when the Cholesky factorization fails.
pub fn hpd_inverse(m: &CMat) -> Result<CMat> {
    if let Some(ch) = hermitize(m).cholesky() {
        return Ok(ch.inverse());
    }
    let eps = 1e-12 * trace_re(m).abs();
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Numerical("singular covariance with zero trace".into()));
    }
    let reg = hermitize(m) + scaled_identity(m.nrows(), eps);
    reg.cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::Numerical("covariance not positive definite after regularization".into()))
}

/// `log2 det(m)` for Hermitian positive-definite `m`.
pub fn log2_det_hpd(m: &CMat) -> Result<f64> {
    let ch = hermitize(m)
        .cholesky()
        .ok_or_else(|| Error::Numerical("log-det of non positive-definite matrix".into()))?;
    let l = ch.l();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.log2()).sum())
}

/// Hermitian square root `V diag(√λ) Vᴴ`, negative eigenvalues clamped to zero.
pub fn sqrt_psd(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    &vecs * diag_real(&d) * vecs.adjoint()
}

/// Hermitian inverse square root `V diag(1/√λ) Vᴴ`.
pub fn inv_sqrt_hpd(m: &CMat) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(m);
    let lmax = vals.first().copied().unwrap_or(0.0);
    if !(lmax > 0.0) {
        return Err(Error::Numerical("inverse square root of a zero matrix".into()));
    }
    let floor = 1e-12 * lmax;
    let d: Vec<f64> = vals.iter().map(|&l| 1.0 / l.max(floor).sqrt()).collect();
    Ok(&vecs * diag_real(&d) * vecs.adjoint())
}

pub fn vstack(top: &CMat, bottom: &CMat) -> Result<CMat> {
    if top.ncols() != bottom.ncols() {
        return Err(Error::Dimension(format!(
            "vstack column mismatch {} vs {}",
            top.ncols(),
            bottom.ncols()
        )));
    }
    let mut out = CMat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    Ok(out)
}

pub fn hstack(left: &CMat, right: &CMat) -> Result<CMat> {
    if left.nrows() != right.nrows() {
        return Err(Error::Dimension(format!(
            "hstack row mismatch {} vs {}",
            left.nrows(),
            right.nrows()
        )));
    }
    let mut out = CMat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    Ok(out)
}

pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Orthonormalize columns with modified Gram-Schmidt. Columns that collapse
/// to (numerically) zero are replaced by the next unused canonical basis vector.
pub fn orthonormalize_columns(m: &CMat) -> CMat {
    let (rows, cols) = m.shape();
    let mut q = m.clone();
    let mut basis_idx = 0;
    for j in 0..cols {
        let mut attempt = 0;
        loop {
            for k in 0..j {
                let proj = q.column(k).dotc(&q.column(j));
                let qk = q.column(k).into_owned();
                let mut cj = q.column_mut(j);
                cj -= qk * proj;
            }
            let n = q.column(j).norm();
            if n > 1e-12 || attempt > rows {
                let mut cj = q.column_mut(j);
                cj /= C64::new(n.max(f64::MIN_POSITIVE), 0.0);
                break;
            }
            let mut cj = q.column_mut(j);
            cj.fill(ZERO);
            cj[basis_idx % rows] = ONE;
            basis_idx += 1;
            attempt += 1;
        }
    }
    q
}

/// Chordal distance between the column spaces of two matrices with orthonormal columns.
///
/// Evaluated as `‖A − B Bᴴ A‖_F` (equal-width subspaces) to avoid the
/// cancellation of `√(k − ‖AᴴB‖²)` near zero.
pub fn chordal_distance(a: &CMat, b: &CMat) -> f64 {
    let (a, b) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    let resid = a - b * (b.adjoint() * a);
    frobenius_sq(&resid).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = complex_gaussian(4, 7, &mut rng);
        let svd = svd_sorted(&m);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let rec = &svd.u * diag_real(&svd.s) * svd.v.adjoint();
        assert!((rec - m).norm() < 1e-10);
    }

    #[test]
    fn inverse_and_logdet_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = complex_gaussian(3, 3, &mut rng);
        let m = &g * g.adjoint() + identity(3);
        let inv = hpd_inverse(&m).unwrap();
        assert!((&inv * &m - identity(3)).norm() < 1e-10);
        let ld = log2_det_hpd(&m).unwrap();
        let det = m.determinant().re;
        assert!((ld - det.log2()).abs() < 1e-9);
    }

    #[test]
    fn inverse_sqrt_whitens() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = complex_gaussian(4, 4, &mut rng);
        let m = &g * g.adjoint() + scaled_identity(4, 0.1);
        let w = inv_sqrt_hpd(&m).unwrap();
        assert!((&w * &m * w.adjoint() - identity(4)).norm() < 1e-9);
        let s = sqrt_psd(&m);
        assert!((&s * &s - &m).norm() < 1e-9);
    }

    #[test]
    fn gram_schmidt_handles_dependent_columns() {
        let mut m = CMat::zeros(3, 2);
        m[(0, 0)] = ONE;
        m[(0, 1)] = C64::new(2.0, 0.0);
        let q = orthonormalize_columns(&m);
        assert!((q.adjoint() * &q - identity(2)).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_regularized() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = ONE;
        assert!(hpd_inverse(&m).is_ok());
        assert!(hpd_inverse(&CMat::zeros(2, 2)).is_err());
    }
}
