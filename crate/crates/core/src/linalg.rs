//! Small complex linear-algebra toolkit shared by all modules.
//!
//! Thin wrappers around LAPACK (via `ndarray-linalg`) plus the handful of
//! subspace utilities the precoder construction needs: numerical rank,
//! null-space bases, orthonormal complements, principal angles and stable
//! `log2 det(I + A)` evaluation. Everything operates on `Array2<Complex64>`
//! in standard (row-major) layout.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Cholesky, Eig, Eigh, SolveTriangular, UPLO};
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};

pub type CMat = Array2<c64>;
pub type CVec = Array1<c64>;

/// Relative singular-value threshold used for every numerical-rank decision
/// in this crate: singular values below `RANK_REL_TOL * sigma_max` count as
/// zero. Well above double-precision noise at the matrix sizes in play,
/// far below genuine spectral content of Rayleigh-fading taps.
pub const RANK_REL_TOL: f64 = 1e-10;

pub fn identity(n: usize) -> CMat {
    Array2::eye(n)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Array2::zeros((rows, cols))
}

/// Conjugate transpose.
pub fn adjoint(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

/// Hermitian part (M + M^H)/2.
pub fn hermitian_part(m: &CMat) -> CMat {
    let mh = adjoint(m);
    (m + &mh).mapv(|z| z * 0.5)
}

pub fn frobenius_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// H S H^H for Hermitian S.
pub fn sandwich(h: &CMat, s: &CMat) -> CMat {
    h.dot(s).dot(&adjoint(h))
}

/// A^H A.
pub fn gram(a: &CMat) -> CMat {
    adjoint(a).dot(a)
}

pub fn scale(m: &CMat, factor: f64) -> CMat {
    m.mapv(|z| z * factor)
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diag().iter().map(|z| z.re).sum()
}

/// Re tr(A^H B), the real inner product on Hermitian matrices.
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Full SVD: returns (U, s, V) with A = U diag(s) V^H, U m-by-m and V n-by-n
/// unitary, singular values descending.
pub fn svd_full(a: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    use ndarray_linalg::SVD;
    let (u, s, vt) = a
        .svd(true, true)
        .map_err(|e| Error::Numerical(format!("svd failed: {e}")))?;
    let u = u.expect("requested U");
    let vt = vt.expect("requested V^H");
    Ok((u, s.to_vec(), adjoint(&vt)))
}

/// Singular values only, descending.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    use ndarray_linalg::SVD;
    let (_, s, _) = a
        .svd(false, false)
        .map_err(|e| Error::Numerical(format!("svd failed: {e}")))?;
    Ok(s.to_vec())
}

/// Numerical rank under [`RANK_REL_TOL`], together with the smallest retained
/// singular value (0.0 when rank is 0).
pub fn numerical_rank(a: &CMat) -> Result<(usize, f64)> {
    let s = singular_values(a)?;
    Ok(rank_from_singular_values(&s))
}

pub fn rank_from_singular_values(s: &[f64]) -> (usize, f64) {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return (0, 0.0);
    }
    let tol = RANK_REL_TOL * smax;
    let rank = s.iter().take_while(|&&x| x > tol).count();
    let smallest = if rank > 0 { s[rank - 1] } else { 0.0 };
    (rank, smallest)
}

/// Orthonormal basis of the right null space of `a`, dimension n - rank.
pub fn null_space(a: &CMat) -> Result<CMat> {
    let n = a.ncols();
    let (_, s, v) = svd_full(a)?;
    let (rank, _) = rank_from_singular_values(&s);
    Ok(v.slice(ndarray::s![.., rank..n]).to_owned())
}

/// Orthonormal basis of the orthogonal complement of span(v) in C^rows.
/// `v` need not have orthonormal columns; only its span matters.
pub fn orthogonal_complement(v: &CMat) -> Result<CMat> {
    let rows = v.nrows();
    if v.ncols() == 0 {
        return Ok(identity(rows));
    }
    let (u, s, _) = svd_full(v)?;
    let (rank, _) = rank_from_singular_values(&s);
    Ok(u.slice(ndarray::s![.., rank..rows]).to_owned())
}

/// Checks that `v` has orthonormal columns: ||V^H V - I||_F <= tol.
pub fn orthonormality_residual(v: &CMat) -> f64 {
    let k = v.ncols();
    if k == 0 {
        return 0.0;
    }
    let g = gram(v);
    frobenius_norm(&(&g - &identity(k)))
}

/// Principal angles (radians, ascending) between the column spans of two
/// matrices with orthonormal columns. Computed through the sines,
/// sin(theta_i) = singular values of (I - A A^H) B completed against the
/// cosines, which keeps accuracy for tiny angles where acos saturates.
pub fn principal_angles(a: &CMat, b: &CMat) -> Result<Vec<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "principal angles need equal subspace dimensions, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Ok(Vec::new());
    }
    // residual of B against span(A): B - A (A^H B)
    let ahb = adjoint(a).dot(b);
    let resid = b - &a.dot(&ahb);
    let mut sines = singular_values(&resid)?;
    sines.reverse(); // ascending
    Ok(sines
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0).asin())
        .collect())
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending, columns
/// of the returned matrix are the eigenvectors.
pub fn eigh_ascending(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let h = hermitian_part(m);
    let (w, v) = h
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("eigh failed: {e}")))?;
    // LAPACK's column-major eigenvector matrix arrives transposed in the
    // row-major view; conjugating restores columns-as-eigenvectors for the
    // complex case (and is a no-op for real input).
    Ok((w.to_vec(), v.mapv(|z| z.conj())))
}

/// Eigenvalues of a general complex matrix (companion matrices, oracles).
pub fn eigenvalues(m: &CMat) -> Result<Vec<c64>> {
    let (w, _) = m
        .eig()
        .map_err(|e| Error::Numerical(format!("eig failed: {e}")))?;
    Ok(w.to_vec())
}

/// Hermitian PSD square root via eigendecomposition, with negative
/// eigenvalues (numerical noise) clipped to zero.
pub fn psd_sqrt(s: &CMat) -> Result<CMat> {
    let (w, v) = eigh_ascending(s)?;
    let roots: Vec<f64> = w.iter().map(|&x| x.max(0.0).sqrt()).collect();
    Ok(reassemble(&v, &roots))
}

/// Clip the eigenvalues of a Hermitian matrix at zero.
pub fn clip_psd(s: &CMat) -> Result<CMat> {
    let (w, v) = eigh_ascending(s)?;
    let clipped: Vec<f64> = w.iter().map(|&x| x.max(0.0)).collect();
    Ok(reassemble(&v, &clipped))
}

/// V diag(d) V^H.
pub fn reassemble(v: &CMat, d: &[f64]) -> CMat {
    let mut scaled = v.clone();
    for (j, &dj) in d.iter().enumerate() {
        let mut col = scaled.index_axis_mut(Axis(1), j);
        col.mapv_inplace(|z| z * dj);
    }
    scaled.dot(&adjoint(v))
}

/// Validates that `s` is Hermitian PSD within tolerance and returns its
/// eigenvalue floor. Hermitian residual is measured in Frobenius norm
/// relative to the matrix scale; the eigenvalue floor is relative to the
/// largest eigenvalue magnitude.
pub fn check_psd(s: &CMat, what: &str) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::DimensionMismatch(format!("{what} is not square")));
    }
    if s.nrows() == 0 {
        return Ok(());
    }
    if !all_finite(s) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    let scale = frobenius_norm(s).max(1.0);
    let herm_resid = frobenius_norm(&(s - &hermitian_part(s)));
    if herm_resid > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "{what} is not Hermitian (residual {herm_resid:.3e})"
        )));
    }
    let (w, _) = eigh_ascending(s)?;
    let wmax = w.last().copied().unwrap_or(0.0).max(0.0);
    let floor = -1e-10 * wmax.max(1.0);
    if w[0] < floor {
        return Err(Error::InvalidArgument(format!(
            "{what} is not PSD (min eigenvalue {:.3e})",
            w[0]
        )));
    }
    Ok(())
}

/// log2 det(I + M) for Hermitian PSD `M`, via Cholesky of I + M.
pub fn log2_det_i_plus(m: &CMat) -> Result<f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let arg = hermitian_part(m) + identity(n);
    let l = arg
        .cholesky(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("cholesky of I + M failed: {e}")))?;
    let mut acc = 0.0;
    for i in 0..n {
        let d = l[[i, i]].re;
        if !(d > 0.0) {
            return Err(Error::Numerical("non-positive Cholesky pivot".into()));
        }
        acc += d.ln();
    }
    Ok(2.0 * acc / std::f64::consts::LN_2)
}

/// Generalized eigenvalues of the Hermitian pencil (A, B) with B positive
/// definite: reduce with the Cholesky factor of B, then a Hermitian solve.
pub fn generalized_eigenvalues_pd(a: &CMat, b: &CMat) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(
            "pencil matrices must be square and equal-sized".into(),
        ));
    }
    let l = hermitian_part(b)
        .cholesky(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("pencil reduction failed: {e}")))?;
    // C = L^-1 A L^-H
    let x = l
        .solve_triangular(UPLO::Lower, ndarray_linalg::Diag::NonUnit, &hermitian_part(a))
        .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))?;
    let y = l
        .solve_triangular(UPLO::Lower, ndarray_linalg::Diag::NonUnit, &adjoint(&x))
        .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))?;
    let (w, _) = eigh_ascending(&y)?;
    Ok(w)
}
