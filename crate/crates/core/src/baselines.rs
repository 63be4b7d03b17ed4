//! Reference beamformers for the comparison curves: the optimal
//! null-space-constrained MISO beamformer, the best single Vandermonde
//! column, and projection-based zero-forcing for the two-user MISO setting.

use ndarray::Array1;
use num_complex::Complex64 as c64;

use crate::channel::{ChannelVector, ToeplitzChannel};
use crate::error::{Error, Result};
use crate::linalg::{adjoint, null_space, vec_norm, CMat, CVec};

/// A unit-norm transmit beamformer. The zero vector signals a degenerate
/// instance with no useful direction (empty null space or a fully projected
/// channel); every non-degenerate construction returns unit norm.
#[derive(Debug, Clone)]
pub struct Beamformer {
    pub weights: CVec,
}

impl Beamformer {
    pub fn norm(&self) -> f64 {
        vec_norm(&self.weights)
    }
}

fn row_dot(row: &CVec, col: &CVec) -> c64 {
    row.iter().zip(col.iter()).map(|(a, b)| a * b).sum()
}

/// The optimal beamformer confined to the null space of T(g) for a
/// single-observation receiver with row channel `h_row`: the normalized
/// projection of h_row^H onto null(T(g)). Returns the beamformer and its
/// power gain |h_row phi|^2 (the exact maximum over the subspace).
pub fn miso_optimal_beamformer(
    h_row: &CVec,
    tg: &ToeplitzChannel,
) -> Result<(Beamformer, f64)> {
    let dim = tg.input_dim();
    if h_row.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "h_row has length {}, expected {dim}",
            h_row.len()
        )));
    }
    let basis = null_space(tg.matrix())?;
    if basis.ncols() == 0 {
        return Ok((Beamformer { weights: Array1::zeros(dim) }, 0.0));
    }
    // coefficients of the projection of h_row^H onto the basis
    let h_conj: CVec = h_row.map(|z| z.conj());
    let coeffs: CVec = adjoint(&basis).dot(&h_conj);
    let cnorm = vec_norm(&coeffs);
    if cnorm == 0.0 {
        return Ok((Beamformer { weights: Array1::zeros(dim) }, 0.0));
    }
    let phi: CVec = basis.dot(&coeffs.map(|z| z / cnorm));
    let gain = row_dot(h_row, &phi).norm_sqr();
    Ok((Beamformer { weights: phi }, gain))
}

/// Best single-column gain of an orthonormal null-space basis:
/// max_i |h_row v_i|^2.
pub fn vandermonde_miso_gain(h_row: &CVec, v1: &CMat) -> Result<f64> {
    if v1.ncols() == 0 {
        return Ok(0.0);
    }
    if h_row.len() != v1.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "h_row has length {}, basis rows {}",
            h_row.len(),
            v1.nrows()
        )));
    }
    let mut best = 0.0f64;
    for j in 0..v1.ncols() {
        let col = v1.column(j).to_owned();
        best = best.max(row_dot(h_row, &col).norm_sqr());
    }
    Ok(best)
}

/// Rate of a single-stream beamformed link carrying the whole block budget:
/// 1/(N+L) log2(1 + (N+L) P gain).
pub fn miso_rate(p: f64, dimension: usize, gain: f64) -> f64 {
    (1.0 + dimension as f64 * p * gain).log2() / dimension as f64
}

/// Zero-forcing beamformers for the two-user MISO setting (N = 1): each
/// user's beamformer is the normalized projection of its channel row
/// conjugate onto the null space of the other user's row. Errors on
/// (numerically) dependent channels.
pub fn zf_two_user_beamformers(
    h1: &ChannelVector,
    h2: &ChannelVector,
) -> Result<(Beamformer, Beamformer)> {
    if h1.delay_spread() != h2.delay_spread() {
        return Err(Error::DimensionMismatch(
            "h1 and h2 must share the delay spread".into(),
        ));
    }
    let project = |own: &ChannelVector, other: &ChannelVector| -> Result<Beamformer> {
        let own_conj: CVec = Array1::from(own.taps().iter().map(|t| t.conj()).collect::<Vec<_>>());
        let other_row: CVec = Array1::from(other.taps().to_vec());
        let other_conj: CVec = other_row.map(|z| z.conj());
        let denom = other_row.iter().map(|z| z.norm_sqr()).sum::<f64>();
        // <other_row, own_conj> in the row sense: other_row . own^H
        let inner = row_dot(&other_row, &own_conj);
        let projected: CVec = Array1::from(
            own_conj
                .iter()
                .zip(other_conj.iter())
                .map(|(o, oc)| o - oc * (inner / denom))
                .collect::<Vec<_>>(),
        );
        let norm = vec_norm(&projected);
        if norm <= 1e-13 * own.norm() {
            return Err(Error::DegenerateChannel(
                "channels are (numerically) parallel: zero-forcing direction vanishes".into(),
            ));
        }
        Ok(Beamformer { weights: projected.map(|z| z / norm) })
    };
    Ok((project(h1, h2)?, project(h2, h1)?))
}

/// (R1, R2) of the two-user MISO region point with per-user powers
/// (p1, p2): user k sends one stream on its best Vandermonde column (the
/// null-space basis of the other user's single-row Toeplitz matrix).
pub fn vandermonde_two_user_miso_rates(
    h1: &ChannelVector,
    h2: &ChannelVector,
    p1: f64,
    p2: f64,
) -> Result<(f64, f64)> {
    let l = h1.delay_spread();
    let dim = (l + 1) as f64;
    let rate = |own: &ChannelVector, other: &ChannelVector, p: f64| -> Result<f64> {
        let t_other = crate::channel::make_toeplitz(other, 1)?;
        let basis = null_space(t_other.matrix())?;
        let own_row: CVec = Array1::from(own.taps().to_vec());
        let gain = vandermonde_miso_gain(&own_row, &basis)?;
        Ok((1.0 + p * gain).log2() / dim)
    };
    Ok((rate(h1, h2, p1)?, rate(h2, h1, p2)?))
}

/// (R1, R2) of the zero-forcing baseline at the same per-user power split.
pub fn zf_two_user_rates(
    h1: &ChannelVector,
    h2: &ChannelVector,
    p1: f64,
    p2: f64,
) -> Result<(f64, f64)> {
    let (b1, b2) = zf_two_user_beamformers(h1, h2)?;
    let dim = (h1.delay_spread() + 1) as f64;
    let gain = |h: &ChannelVector, b: &Beamformer| -> f64 {
        let row: CVec = Array1::from(h.taps().to_vec());
        row_dot(&row, &b.weights).norm_sqr()
    };
    let r1 = (1.0 + p1 * gain(h1, &b1)).log2() / dim;
    let r2 = (1.0 + p2 * gain(h2, &b2)).log2() / dim;
    Ok((r1, r2))
}
