//! Log-det rate functionals of the precoded broadcast channel.
//!
//! All rates are in bits per channel use per dimension: base-2 logs with the
//! 1/(N+L) block normalization baked in. Log-dets are evaluated through a
//! Cholesky factorization of I + (Hermitian PSD argument) rather than raw
//! determinants.

use num_complex::Complex64 as c64;

use crate::channel::ToeplitzChannel;
use crate::error::{Error, Result};
use crate::linalg::{
    self, check_psd, generalized_eigenvalues_pd, gram, identity,
    log2_det_i_plus, psd_sqrt, rank_from_singular_values, sandwich, svd_full, CMat,
};
use crate::precoder::VandermondePrecoder;

/// Effective channels of the two-block precoder:
/// H0 = T(h) V0, H1 = T(h) V1, G0 = T(g) V0, together with the SVDs of H1
/// and G0 (singular values descending, full right singular-vector matrices).
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    pub h0: CMat,
    pub h1: CMat,
    pub g0: CMat,
    /// Singular values of H1, descending (length l).
    pub h1_singular_values: Vec<f64>,
    /// Singular values of G0, descending, zero-padded to N+L-l entries.
    pub g0_singular_values: Vec<f64>,
    /// Full right singular-vector matrix of H1 (l x l unitary).
    pub v_h1: CMat,
    /// Full right singular-vector matrix of G0 ((N+L-l) x (N+L-l) unitary).
    pub v_g0: CMat,
    /// Block dimension N + L.
    pub dimension: usize,
}

impl EffectiveChannels {
    /// Number of confidential streams l.
    pub fn confidential_streams(&self) -> usize {
        self.h1.ncols()
    }

    /// Eigenvalues lambda_i of H1^H H1 (squared singular values), descending.
    pub fn h1_eigenvalues(&self) -> Vec<f64> {
        self.h1_singular_values.iter().map(|s| s * s).collect()
    }

    pub fn g0_eigenvalues(&self) -> Vec<f64> {
        self.g0_singular_values.iter().map(|s| s * s).collect()
    }
}

/// Forms the effective channel products and their SVDs, re-certifying that
/// H1 has exactly min(l, N) positive singular values.
pub fn effective_channels(
    th: &ToeplitzChannel,
    tg: &ToeplitzChannel,
    prec: &VandermondePrecoder,
) -> Result<EffectiveChannels> {
    let dim = prec.dimension();
    if th.input_dim() != dim || tg.input_dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "precoder dimension {dim} does not match channels ({} / {})",
            th.input_dim(),
            tg.input_dim()
        )));
    }
    if prec.blocks().len() != 2 {
        return Err(Error::InvalidArgument(
            "effective_channels expects a two-block precoder".into(),
        ));
    }
    let v0 = prec.common_block();
    let v1 = &prec.confidential_blocks()[0];
    let l = v1.ncols();
    let h0 = th.matrix().dot(v0);
    let h1 = th.matrix().dot(v1);
    let g0 = tg.matrix().dot(v0);

    let (h1_singular_values, v_h1) = if l > 0 {
        let (_, s, v) = svd_full(&h1)?;
        let (rank, _) = rank_from_singular_values(&s);
        let expected = l.min(h1.nrows());
        if rank != expected {
            return Err(Error::PropertyViolation(format!(
                "effective confidential channel has rank {rank}, expected {expected}"
            )));
        }
        let mut padded = s;
        padded.resize(l, 0.0);
        (padded, v)
    } else {
        (Vec::new(), linalg::zeros(0, 0))
    };

    let (_, s_g0, v_g0) = svd_full(&g0)?;
    let mut g0_singular_values = s_g0;
    g0_singular_values.resize(g0.ncols(), 0.0);

    Ok(EffectiveChannels {
        h0,
        h1,
        g0,
        h1_singular_values,
        g0_singular_values,
        v_h1,
        v_g0,
        dimension: dim,
    })
}

/// Input covariances S0..SK under a shared trace budget.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    matrices: Vec<CMat>,
    budget: f64,
}

impl CovarianceSet {
    /// Validates Hermitian-ness, the PSD eigenvalue floor and the total
    /// trace against the budget (with a small feasibility slack).
    pub fn new(matrices: Vec<CMat>, budget: f64) -> Result<Self> {
        if !(budget >= 0.0) {
            return Err(Error::InvalidArgument("budget must be non-negative".into()));
        }
        let mut total = 0.0;
        for (k, s) in matrices.iter().enumerate() {
            check_psd(s, &format!("covariance S{k}"))?;
            total += linalg::trace_re(s);
        }
        if total > budget + 1e-9 * budget.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "total trace {total:.6e} exceeds budget {budget:.6e}"
            )));
        }
        Ok(Self { matrices, budget })
    }

    pub fn matrices(&self) -> &[CMat] {
        &self.matrices
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn total_trace(&self) -> f64 {
        self.matrices.iter().map(linalg::trace_re).sum()
    }
}

/// Achieved rates [R0, R1, ..., RK] in bits per channel use per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTuple {
    pub rates: Vec<f64>,
}

impl RateTuple {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.iter().any(|r| !r.is_finite() || *r < -1e-12) {
            return Err(Error::Numerical(format!("invalid rate tuple {rates:?}")));
        }
        Ok(Self {
            rates: rates.into_iter().map(|r| r.max(0.0)).collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.rates.iter().sum()
    }
}

fn scaled_log2_det(dim: usize, arg: &CMat) -> Result<f64> {
    Ok(log2_det_i_plus(arg)?.max(0.0) / dim as f64)
}

/// R1 = 1/(N+L) log2 det(I + H1 S1 H1^H).
pub fn rate_r1(eff: &EffectiveChannels, s1: &CMat) -> Result<f64> {
    let l = eff.confidential_streams();
    if s1.nrows() != l || s1.ncols() != l {
        return Err(Error::DimensionMismatch(format!(
            "S1 must be {l}x{l}, got {}x{}",
            s1.nrows(),
            s1.ncols()
        )));
    }
    if l == 0 {
        return Ok(0.0);
    }
    check_psd(s1, "S1")?;
    scaled_log2_det(eff.dimension, &sandwich(&eff.h1, s1))
}

/// R01 = 1/(N+L) [log2 det(I + H0 S0 H0^H + H1 S1 H1^H) - log2 det(I + H1 S1 H1^H)].
pub fn rate_r01(eff: &EffectiveChannels, s0: &CMat, s1: &CMat) -> Result<f64> {
    check_psd(s0, "S0")?;
    check_psd(s1, "S1")?;
    let combined = sandwich(&eff.h0, s0) + sandwich(&eff.h1, s1);
    let numer = log2_det_i_plus(&combined)?;
    let denom = log2_det_i_plus(&sandwich(&eff.h1, s1))?;
    Ok(((numer - denom) / eff.dimension as f64).max(0.0))
}

/// R02 = 1/(N+L) log2 det(I + G0 S0 G0^H).
pub fn rate_r02(eff: &EffectiveChannels, s0: &CMat) -> Result<f64> {
    check_psd(s0, "S0")?;
    scaled_log2_det(eff.dimension, &sandwich(&eff.g0, s0))
}

/// Leakage diagnostic: the rate the unintended receiver would see through
/// the confidential block, 1/(N+L) log2 det(I + T(g) V1 S1 V1^H T(g)^H).
/// Identically zero (up to numerical residue) for any null-space precoder.
pub fn leakage_rate(tg: &ToeplitzChannel, v1: &CMat, s1: &CMat) -> Result<f64> {
    if v1.ncols() == 0 {
        return Ok(0.0);
    }
    let eff = tg.matrix().dot(v1);
    let arg = sandwich(&eff, s1);
    Ok(log2_det_i_plus(&arg)?.max(0.0) / tg.input_dim() as f64)
}

/// Rates under the all-streams equal power split S0 = P I, S1 = P I:
/// returns (min(R01, R02), R1).
pub fn equal_power_rates(
    th: &ToeplitzChannel,
    tg: &ToeplitzChannel,
    prec: &VandermondePrecoder,
    p: f64,
) -> Result<RateTuple> {
    if !(p >= 0.0) {
        return Err(Error::InvalidArgument("per-stream power must be >= 0".into()));
    }
    let eff = effective_channels(th, tg, prec)?;
    let l = eff.confidential_streams();
    let s0 = linalg::scale(&identity(eff.dimension - l), p);
    let s1 = linalg::scale(&identity(l), p);
    let r01 = rate_r01(&eff, &s0, &s1)?;
    let r02 = rate_r02(&eff, &s0)?;
    let r1 = rate_r1(&eff, &s1)?;
    RateTuple::new(vec![r01.min(r02), r1])
}

/// Secrecy rate of a fixed full-dimension input covariance S, evaluated from
/// the generalized eigenvalues greater than one of the pencil
/// (I + S^(1/2) T(h)^H T(h) S^(1/2), I + S^(1/2) T(g)^H T(g) S^(1/2)).
pub fn fixed_covariance_secrecy_rate(
    th: &ToeplitzChannel,
    tg: &ToeplitzChannel,
    s: &CMat,
) -> Result<f64> {
    let dim = th.input_dim();
    if tg.input_dim() != dim {
        return Err(Error::DimensionMismatch(
            "channel matrices must share the input dimension".into(),
        ));
    }
    if s.nrows() != dim || s.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "S must be {dim}x{dim}, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    check_psd(s, "S")?;
    let root = psd_sqrt(s)?;
    let a = identity(dim) + root.dot(&gram(th.matrix())).dot(&root);
    let b = identity(dim) + root.dot(&gram(tg.matrix())).dot(&root);
    let phis = generalized_eigenvalues_pd(&a, &b)?;
    let rate: f64 = phis
        .iter()
        .filter(|&&phi| phi > 1.0)
        .map(|&phi| phi.log2())
        .sum();
    Ok(rate / dim as f64)
}

/// Scaled-identity covariance helper: p * I_n.
pub fn scaled_identity(n: usize, p: f64) -> CMat {
    linalg::scale(&identity(n), p)
}

/// dB-to-linear power conversion: P = 10^(dB/10).
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[allow(dead_code)]
pub(crate) fn complex(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}
