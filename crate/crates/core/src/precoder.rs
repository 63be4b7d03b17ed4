//! Null-space precoder construction.
//!
//! The confidential block V1 spans (part of) the right null space of the
//! unintended receiver's Toeplitz matrix T(g); the common block V0 completes
//! it to a square unitary matrix. The null space has dimension exactly L and
//! admits a Vandermonde basis built from the roots of the channel polynomial
//! S(z) = sum_j g_j z^j (taps in ascending-power order, see [`crate::channel`]).
//!
//! The raw root-power basis becomes ill-conditioned as soon as roots leave
//! the unit circle, so the default construction orthogonalizes through an
//! SVD of T(g) instead. The literal root-powers route (companion-matrix
//! roots, then QR) is kept behind [`NullSpaceMethod::GramSchmidt`]; both
//! produce the same subspace and all consumers compare subspaces, never raw
//! entries, since basis columns are only defined up to a unitary rotation.

use ndarray::s;
use num_complex::Complex64 as c64;

use crate::channel::{make_toeplitz, ChannelVector, ToeplitzChannel};
use crate::error::{Error, Result};
use crate::linalg::{
    self, adjoint, frobenius_norm, identity, null_space, orthogonal_complement,
    orthonormality_residual, rank_from_singular_values, singular_values, CMat,
};

/// Roots of the channel polynomial with their evaluation residuals.
#[derive(Debug, Clone)]
pub struct RootSet {
    roots: Vec<c64>,
    residuals: Vec<f64>,
}

impl RootSet {
    pub fn roots(&self) -> &[c64] {
        &self.roots
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

fn eval_poly(coeffs: &[c64], z: c64) -> c64 {
    // Horner, ascending coefficients
    let mut acc = c64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// All roots of S(z) = sum_j g_j z^j, computed as eigenvalues of the
/// companion matrix of the (deflated) monic polynomial.
///
/// A vanishing leading coefficient reduces the effective degree; the lost
/// null-space dimensions are still recovered by the SVD route. Returns the
/// empty set for degree zero (no secrecy dimensions at L = 0).
pub fn channel_roots(g: &ChannelVector) -> Result<RootSet> {
    let coeffs = g.taps();
    let scale = g.norm();
    // deflate: drop numerically-zero leading (highest-power) coefficients
    let mut degree = coeffs.len() - 1;
    while degree > 0 && coeffs[degree].norm() <= 1e-14 * scale {
        degree -= 1;
    }
    if degree == 0 {
        return Ok(RootSet {
            roots: Vec::new(),
            residuals: Vec::new(),
        });
    }
    let lead = coeffs[degree];
    let mut companion = linalg::zeros(degree, degree);
    for i in 1..degree {
        companion[[i, i - 1]] = c64::new(1.0, 0.0);
    }
    for i in 0..degree {
        companion[[i, degree - 1]] = -coeffs[i] / lead;
    }
    let mut roots = linalg::eigenvalues(&companion)?;
    // deterministic order: descending modulus, then angle
    roots.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(a.arg().partial_cmp(&b.arg()).unwrap())
    });
    let l = g.delay_spread();
    let mut residuals = Vec::with_capacity(roots.len());
    for &r in &roots {
        let resid = eval_poly(&coeffs[..=degree], r).norm();
        let bound = 1e-8 * scale * r.norm().max(1.0).powi(l as i32);
        if resid > bound {
            return Err(Error::Numerical(format!(
                "root residual {resid:.3e} exceeds bound {bound:.3e}"
            )));
        }
        residuals.push(resid);
    }
    Ok(RootSet { roots, residuals })
}

/// The raw root-power matrix: column j is [1, a_j, a_j^2, ..., a_j^(dim-1)]^T.
pub fn raw_vandermonde(roots: &RootSet, dimension: usize) -> CMat {
    let mut m = linalg::zeros(dimension, roots.len());
    for (j, &a) in roots.roots().iter().enumerate() {
        let mut p = c64::new(1.0, 0.0);
        for i in 0..dimension {
            m[[i, j]] = p;
            p *= a;
        }
    }
    m
}

/// How to orthogonalize the confidential-block basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullSpaceMethod {
    /// QR-orthogonalize the raw root-power columns. Falls back to SVD (with
    /// a warning) on nearly coincident roots or when deflation leaves fewer
    /// roots than requested columns.
    GramSchmidt,
    /// Orthonormal null-space basis from the SVD of T(g). Default.
    Svd,
}

fn nulling_residual_bound(tg: &ToeplitzChannel) -> f64 {
    1e-10 * frobenius_norm(tg.matrix()).max(1.0)
}

fn svd_null_basis(tg: &ToeplitzChannel, l: usize) -> Result<CMat> {
    let n = tg.block_len();
    let basis = null_space(tg.matrix())?;
    if basis.ncols() != tg.delay_spread() {
        return Err(Error::DegenerateChannel(format!(
            "T(g) is rank deficient: null space dimension {} instead of {} (N = {n})",
            basis.ncols(),
            tg.delay_spread()
        )));
    }
    Ok(basis.slice(s![.., ..l]).to_owned())
}

/// Orthonormal basis of an l-dimensional subspace of the null space of T(g).
///
/// When l is strictly less than L the spanned subspace depends on the
/// method: SVD keeps the leading null directions in LAPACK order, the
/// root-powers route keeps the l roots closest to the unit circle (the best
/// conditioned columns). At l = L both span the full null space.
pub fn null_space_basis(
    tg: &ToeplitzChannel,
    l: usize,
    method: NullSpaceMethod,
) -> Result<CMat> {
    let dim = tg.input_dim();
    let spread = tg.delay_spread();
    if l > spread {
        return Err(Error::DimensionMismatch(format!(
            "requested {l} null-space columns but the delay spread is {spread}"
        )));
    }
    if l == 0 {
        return Ok(linalg::zeros(dim, 0));
    }
    let basis = match method {
        NullSpaceMethod::Svd => svd_null_basis(tg, l)?,
        NullSpaceMethod::GramSchmidt => match gram_schmidt_basis(tg, l)? {
            Some(b) => b,
            None => svd_null_basis(tg, l)?,
        },
    };
    let nulling = frobenius_norm(&tg.matrix().dot(&basis));
    if nulling > nulling_residual_bound(tg) {
        return Err(Error::PropertyViolation(format!(
            "null-space basis leaks through T(g): residual {nulling:.3e}"
        )));
    }
    Ok(basis)
}

/// Root-powers construction; `None` requests the SVD fallback.
fn gram_schmidt_basis(tg: &ToeplitzChannel, l: usize) -> Result<Option<CMat>> {
    let roots = channel_roots(tg.channel())?;
    if roots.len() < l {
        log::warn!(
            "channel polynomial deflated to {} roots (< {l}); using SVD null basis",
            roots.len()
        );
        return Ok(None);
    }
    for (i, &a) in roots.roots().iter().enumerate() {
        for &b in roots.roots().iter().skip(i + 1) {
            if (a - b).norm() < 1e-8 * a.norm().max(1.0) {
                log::warn!("nearly coincident channel roots; using SVD null basis");
                return Ok(None);
            }
        }
    }
    // keep the l best-conditioned columns: roots closest to the unit circle
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&i, &j| {
        let di = (roots.roots()[i].norm() - 1.0).abs();
        let dj = (roots.roots()[j].norm() - 1.0).abs();
        di.partial_cmp(&dj)
            .unwrap()
            .then(roots.roots()[i].arg().partial_cmp(&roots.roots()[j].arg()).unwrap())
    });
    let picked = RootSet {
        roots: order[..l].iter().map(|&i| roots.roots()[i]).collect(),
        residuals: order[..l].iter().map(|&i| roots.residuals()[i]).collect(),
    };
    let raw = raw_vandermonde(&picked, tg.input_dim());
    // column scaling before QR keeps far-from-unit-circle roots in range
    let mut scaled = raw;
    for mut col in scaled.columns_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|z| z / norm);
        }
    }
    use ndarray_linalg::QR;
    let (q, r) = scaled
        .qr()
        .map_err(|e| Error::Numerical(format!("qr failed: {e}")))?;
    // rank loss in R means the raw columns were too ill-conditioned
    for i in 0..l {
        if r[[i, i]].norm() < 1e-12 {
            log::warn!("ill-conditioned root-power columns; using SVD null basis");
            return Ok(None);
        }
    }
    Ok(Some(q.slice(s![.., ..l]).to_owned()))
}

/// Unitary completion: V0 with V0^H V1 = 0 such that [V0 V1] is square
/// unitary. Rejects non-orthonormal input.
pub fn null_complement(v1: &CMat) -> Result<CMat> {
    let dim = v1.nrows();
    let l = v1.ncols();
    if l == 0 {
        return Ok(identity(dim));
    }
    let ortho = orthonormality_residual(v1);
    if ortho > 1e-10 * (l as f64).sqrt() {
        return Err(Error::InvalidArgument(format!(
            "input block is not orthonormal (residual {ortho:.3e})"
        )));
    }
    if l == dim {
        return Ok(linalg::zeros(dim, 0));
    }
    orthogonal_complement(v1)
}

/// Certificate that an effective channel block has the required rank.
#[derive(Debug, Clone)]
pub struct RankCertificate {
    pub required: usize,
    pub achieved: usize,
    /// Smallest retained singular value of the certified product.
    pub smallest_retained: f64,
    pub largest: f64,
}

impl RankCertificate {
    pub fn holds(&self) -> bool {
        self.achieved == self.required
    }
}

pub(crate) fn certify_rank(product: &CMat, required: usize) -> Result<RankCertificate> {
    let s = singular_values(product)?;
    let (achieved, smallest) = rank_from_singular_values(&s);
    let cert = RankCertificate {
        required,
        achieved,
        smallest_retained: smallest,
        largest: s.first().copied().unwrap_or(0.0),
    };
    if !cert.holds() {
        return Err(Error::PropertyViolation(format!(
            "rank certificate failed: achieved {achieved}, required {required}"
        )));
    }
    Ok(cert)
}

/// Unitary precoder blocks: `blocks[0]` carries the common message, the
/// remaining blocks carry confidential messages. All blocks have orthonormal
/// columns and the common block is orthogonal to every confidential block;
/// whether distinct confidential blocks are mutually orthogonal depends on
/// the construction (they are for the single-eavesdropper builders, not for
/// the two-user variant).
#[derive(Debug, Clone)]
pub struct VandermondePrecoder {
    blocks: Vec<CMat>,
    dimension: usize,
}

impl VandermondePrecoder {
    pub fn new(blocks: Vec<CMat>, dimension: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("precoder needs at least one block".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != dimension {
                return Err(Error::DimensionMismatch(format!(
                    "block {k} has {} rows, expected {dimension}",
                    b.nrows()
                )));
            }
            let resid = orthonormality_residual(b);
            if resid > 1e-10 * (b.ncols().max(1) as f64).sqrt() {
                return Err(Error::PropertyViolation(format!(
                    "block {k} is not orthonormal (residual {resid:.3e})"
                )));
            }
        }
        for (k, b) in blocks.iter().enumerate().skip(1) {
            let cross = frobenius_norm(&adjoint(&blocks[0]).dot(b));
            if cross > 1e-10 * (dimension as f64).sqrt() {
                return Err(Error::PropertyViolation(format!(
                    "common block is not orthogonal to block {k} (residual {cross:.3e})"
                )));
            }
        }
        Ok(Self { blocks, dimension })
    }

    /// N + L.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The common-message block V0.
    pub fn common_block(&self) -> &CMat {
        &self.blocks[0]
    }

    /// Confidential blocks V1, ..., VK.
    pub fn confidential_blocks(&self) -> &[CMat] {
        &self.blocks[1..]
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    /// Column counts [l0, l1, ..., lK].
    pub fn stream_counts(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.ncols()).collect()
    }

    /// Largest Frobenius cross-orthogonality residual between distinct
    /// blocks (including the common block).
    pub fn cross_orthogonality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.blocks.len() {
            for j in i + 1..self.blocks.len() {
                let r = frobenius_norm(&adjoint(&self.blocks[i]).dot(&self.blocks[j]));
                worst = worst.max(r);
            }
        }
        worst
    }
}

/// Builds the two-block precoder {V0, V1} for legitimate channel `h` and
/// eavesdropped channel `g`: T(g) V1 = 0 and rank(T(h) V1) = min(l, N),
/// certified by SVD. The certificate failing is reported as a property
/// violation, never silently accepted.
pub fn build_precoder(
    g: &ChannelVector,
    h: &ChannelVector,
    n: usize,
    l: usize,
    method: NullSpaceMethod,
) -> Result<(VandermondePrecoder, RankCertificate)> {
    if g.delay_spread() != h.delay_spread() {
        return Err(Error::DimensionMismatch(
            "h and g must share the same delay spread".into(),
        ));
    }
    let tg = make_toeplitz(g, n)?;
    let th = make_toeplitz(h, n)?;
    let v1 = null_space_basis(&tg, l, method)?;
    let v0 = null_complement(&v1)?;
    // the product has N rows, so the certified rank is min(l, N); the two
    // coincide in the usual regime l <= L < N
    let cert = if l > 0 {
        certify_rank(&th.matrix().dot(&v1), l.min(n))?
    } else {
        RankCertificate {
            required: 0,
            achieved: 0,
            smallest_retained: 0.0,
            largest: 0.0,
        }
    };
    let prec = VandermondePrecoder::new(vec![v0, v1], n + g.delay_spread())?;
    Ok((prec, cert))
}
