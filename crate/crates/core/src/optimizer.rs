//! Weighted-sum-rate maximization over the input covariances.
//!
//! The boundary of the achievable (R0, R1) region solves
//! max gamma0 * min(R01, R02) + gamma1 * R1 over the trace-constrained PSD
//! pair (S0, S1). The max-min splits into three hypothesis cases:
//!
//! * Case 1 — R01 is the bottleneck: maximize
//!   f1 = gamma0 * R01 + gamma1 * R1 (projected-gradient ascent; concave
//!   when gamma1 >= gamma0);
//! * Case 2 — R02 is the bottleneck: maximize
//!   f2 = gamma0 * R02 + gamma1 * R1, which decouples over the SVD modes of
//!   G0 and H1 and is solved in closed form by waterfilling;
//! * Case 3 — the bottlenecks tie: maximize the theta-mixed objective f3 and
//!   pick theta in (0,1) so that R01 = R02 at the maximizer (bisection with
//!   a grid fallback).
//!
//! A case's solution is accepted only when its own consistency check holds;
//! exactly one case is expected to pass. Every solver returns a KKT
//! certificate (recovered dual blocks, stationarity/complementary-slackness
//! residuals) so optimality claims are checkable rather than implied.

use ndarray::s;

use crate::error::{Error, Result};
use crate::linalg::{
    self, eigh_ascending, frobenius_norm, hermitian_part, identity, inner_re,
    log2_det_i_plus, reassemble, sandwich, trace_re, CMat,
};
use crate::rates::{rate_r01, rate_r02, rate_r1, CovarianceSet, EffectiveChannels, RateTuple};

const LN_2: f64 = std::f64::consts::LN_2;

/// Weights of the boundary point being targeted, gamma0 + gamma1 = 1.
#[derive(Debug, Clone, Copy)]
pub struct WeightPair {
    gamma0: f64,
    gamma1: f64,
}

impl WeightPair {
    pub fn new(gamma0: f64, gamma1: f64) -> Result<Self> {
        if !(gamma0 >= 0.0 && gamma1 >= 0.0) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        if (gamma0 + gamma1 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weights must satisfy gamma0 + gamma1 = 1, got {}",
                gamma0 + gamma1
            )));
        }
        Ok(Self { gamma0, gamma1 })
    }

    pub fn equal() -> Self {
        Self { gamma0: 0.5, gamma1: 0.5 }
    }

    pub fn confidential_only() -> Self {
        Self { gamma0: 0.0, gamma1: 1.0 }
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }
}

/// Exact waterfilling solution: allocations p_i = [w_i / mu - 1 / lambda_i]_+
/// with the multiplier mu saturating the budget.
#[derive(Debug, Clone)]
pub struct WaterfillingSolution {
    /// Lagrange multiplier of the trace constraint (natural-log convention:
    /// active streams satisfy w_i / (p_i + 1/lambda_i) = mu).
    pub mu: f64,
    pub allocations: Vec<f64>,
}

impl WaterfillingSolution {
    pub fn total_power(&self) -> f64 {
        self.allocations.iter().sum()
    }
}

/// Exact (non-iterative) weighted waterfilling over streams given as
/// (weight, lambda) pairs: maximizes sum_i w_i ln(1 + lambda_i p_i) subject
/// to sum_i p_i = budget, p_i >= 0, by the sorted-breakpoint search.
///
/// Streams with zero weight or zero gain receive no power; errors when no
/// stream can absorb power at all.
pub fn waterfill(streams: &[(f64, f64)], budget: f64) -> Result<WaterfillingSolution> {
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument("waterfilling budget must be positive".into()));
    }
    for &(w, lam) in streams {
        if w < 0.0 || lam < 0.0 || !w.is_finite() || !lam.is_finite() {
            return Err(Error::InvalidArgument(
                "stream weights and gains must be finite and non-negative".into(),
            ));
        }
    }
    // candidate streams, ordered by descending breakpoint w * lambda
    let mut order: Vec<usize> = (0..streams.len())
        .filter(|&i| streams[i].0 > 0.0 && streams[i].1 > 0.0)
        .collect();
    if order.is_empty() {
        return Err(Error::InvalidArgument(
            "no stream can absorb power (all weights or gains are zero)".into(),
        ));
    }
    order.sort_by(|&i, &j| {
        let bi = streams[i].0 * streams[i].1;
        let bj = streams[j].0 * streams[j].1;
        bj.partial_cmp(&bi).unwrap()
    });

    let mut weight_sum = 0.0;
    let mut inv_gain_sum = 0.0;
    let mut mu = f64::NAN;
    let mut active = 0;
    for (k, &i) in order.iter().enumerate() {
        let (w, lam) = streams[i];
        weight_sum += w;
        inv_gain_sum += 1.0 / lam;
        let cand = weight_sum / (budget + inv_gain_sum);
        let next_break = order
            .get(k + 1)
            .map(|&j| streams[j].0 * streams[j].1)
            .unwrap_or(0.0);
        if cand >= next_break {
            mu = cand;
            active = k + 1;
            break;
        }
    }
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::Numerical("waterfilling multiplier search failed".into()));
    }
    let mut allocations = vec![0.0; streams.len()];
    for &i in order.iter().take(active) {
        let (w, lam) = streams[i];
        allocations[i] = (w / mu - 1.0 / lam).max(0.0);
    }
    let total: f64 = allocations.iter().sum();
    if (total - budget).abs() > 1e-8 * budget.max(1.0) {
        return Err(Error::Numerical(format!(
            "waterfilling budget mismatch: allocated {total}, budget {budget}"
        )));
    }
    Ok(WaterfillingSolution { mu, allocations })
}

/// Which of the three max-min hypothesis cases produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseLabel {
    Case1,
    Case2,
    Case3,
}

impl std::fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaseLabel::Case1 => write!(f, "case1"),
            CaseLabel::Case2 => write!(f, "case2"),
            CaseLabel::Case3 => write!(f, "case3"),
        }
    }
}

/// KKT certificate of a covariance solution: dual blocks recovered from
/// stationarity, with residuals small enough to check optimality claims.
#[derive(Debug, Clone)]
pub struct KktCertificate {
    pub case: CaseLabel,
    /// Trace-constraint multiplier (natural-log units).
    pub mu: f64,
    /// Recovered dual blocks Psi_i = mu I - grad_i, Hermitian.
    pub psi: Vec<CMat>,
    /// Stationarity residual per block, restricted to the active subspace of
    /// S_i and normalized by mu.
    pub stationarity_residuals: Vec<f64>,
    /// Minimum eigenvalue of each Psi_i (dual feasibility).
    pub psi_min_eigenvalues: Vec<f64>,
    /// |tr(Psi_i S_i)| per block (complementary slackness).
    pub complementary_slackness: Vec<f64>,
    /// Trace budget the solution was computed under.
    pub budget: f64,
    /// Ascent reached its stationarity tolerance (true for closed forms).
    pub converged: bool,
    /// The concavity condition held, so the certificate implies a global
    /// optimum rather than a local one.
    pub global: bool,
}

impl KktCertificate {
    /// Largest stationarity residual across blocks.
    pub fn worst_residual(&self) -> f64 {
        self.stationarity_residuals
            .iter()
            .fold(0.0f64, |a, &b| a.max(b))
    }

    /// All certificate conditions within their bounds.
    pub fn certified(&self) -> bool {
        self.converged
            && self.stationarity_residuals.iter().all(|&r| r <= 1e-6)
            && self.psi_min_eigenvalues.iter().all(|&e| e >= -1e-7)
            && self
                .complementary_slackness
                .iter()
                .all(|&s| s <= 1e-6 * self.budget.max(1.0))
    }
}

/// A solved case: covariances, the three rate terms, the case objective (in
/// bits per channel use per dimension) and the KKT certificate.
#[derive(Debug, Clone)]
pub struct CaseSolution {
    pub covariances: CovarianceSet,
    pub r01: f64,
    pub r02: f64,
    pub r1: f64,
    pub objective: f64,
    pub certificate: KktCertificate,
}

impl CaseSolution {
    /// Achieved rate pair (R0, R1) with R0 = min(R01, R02).
    pub fn rates(&self) -> RateTuple {
        RateTuple::new(vec![self.r01.min(self.r02), self.r1]).expect("finite rates")
    }

    pub fn weighted_rate(&self, w: WeightPair) -> f64 {
        w.gamma0() * self.r01.min(self.r02) + w.gamma1() * self.r1
    }
}

/// Projected-gradient ascent controls.
#[derive(Debug, Clone)]
pub struct AscentOptions {
    pub max_iterations: usize,
    /// Relative step-norm tolerance declaring stationarity. Values below
    /// ~1e-7 are clamped on exits forced by floating-point resolution (the
    /// line search cannot measure improvements past sqrt(eps)).
    pub tolerance: f64,
    /// Backtracking factor of the line search.
    pub backtrack: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Optional starting point (S0, S1); defaults to scaled identities.
    pub warm_start: Option<(CMat, CMat)>,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-8,
            backtrack: 0.5,
            armijo: 1e-4,
            warm_start: None,
        }
    }
}

/// Which case objective the ascent maximizes (natural-log units).
#[derive(Clone, Copy)]
enum ObjectiveKind {
    F1,
    /// f2, only used to cross-check the closed form numerically.
    F2,
    F3(f64),
}

struct CaseObjective<'a> {
    eff: &'a EffectiveChannels,
    w: WeightPair,
    kind: ObjectiveKind,
}

impl<'a> CaseObjective<'a> {
    fn concave(&self) -> bool {
        match self.kind {
            ObjectiveKind::F1 => self.w.gamma1() >= self.w.gamma0() - 1e-15,
            ObjectiveKind::F2 => true,
            ObjectiveKind::F3(t) => self.w.gamma1() >= self.w.gamma0() * t - 1e-15,
        }
    }

    fn value(&self, s0: &CMat, s1: &CMat) -> Result<f64> {
        let d1 = sandwich(&self.eff.h1, s1);
        let ln_d1 = log2_det_i_plus(&d1)? * LN_2;
        let (g0, g1) = (self.w.gamma0(), self.w.gamma1());
        let quotient = || -> Result<f64> {
            let gamma = sandwich(&self.eff.h0, s0) + sandwich(&self.eff.h1, s1);
            Ok((log2_det_i_plus(&gamma)? * LN_2 - ln_d1).max(0.0))
        };
        match self.kind {
            ObjectiveKind::F1 => Ok(g0 * quotient()? + g1 * ln_d1),
            ObjectiveKind::F2 => {
                let ln_e = log2_det_i_plus(&sandwich(&self.eff.g0, s0))? * LN_2;
                Ok(g0 * ln_e + g1 * ln_d1)
            }
            ObjectiveKind::F3(t) => {
                let ln_e = log2_det_i_plus(&sandwich(&self.eff.g0, s0))? * LN_2;
                Ok(g0 * (t * quotient()? + (1.0 - t) * ln_e) + g1 * ln_d1)
            }
        }
    }

    fn gradients(&self, s0: &CMat, s1: &CMat) -> Result<(CMat, CMat)> {
        use ndarray_linalg::Inverse;
        let inv = |m: CMat| -> Result<CMat> {
            m.inv()
                .map_err(|e| Error::Numerical(format!("gradient inverse failed: {e}")))
        };
        let n = self.eff.h0.nrows();
        let h0 = &self.eff.h0;
        let h1 = &self.eff.h1;
        let d1_inv = inv(identity(n) + sandwich(h1, s1))?;
        let h1_d1 = linalg::adjoint(h1).dot(&d1_inv).dot(h1);
        let (g0, g1) = (self.w.gamma0(), self.w.gamma1());
        let (grad0, grad1) = match self.kind {
            ObjectiveKind::F1 => {
                let gamma_inv = inv(identity(n) + sandwich(h0, s0) + sandwich(h1, s1))?;
                (
                    linalg::scale(&linalg::adjoint(h0).dot(&gamma_inv).dot(h0), g0),
                    linalg::scale(&linalg::adjoint(h1).dot(&gamma_inv).dot(h1), g0)
                        + linalg::scale(&h1_d1, g1 - g0),
                )
            }
            ObjectiveKind::F2 => {
                let g0m = &self.eff.g0;
                let e_inv = inv(identity(n) + sandwich(g0m, s0))?;
                (
                    linalg::scale(&linalg::adjoint(g0m).dot(&e_inv).dot(g0m), g0),
                    linalg::scale(&h1_d1, g1),
                )
            }
            ObjectiveKind::F3(t) => {
                let gamma_inv = inv(identity(n) + sandwich(h0, s0) + sandwich(h1, s1))?;
                let g0m = &self.eff.g0;
                let e_inv = inv(identity(n) + sandwich(g0m, s0))?;
                let g0_e = linalg::adjoint(g0m).dot(&e_inv).dot(g0m);
                (
                    linalg::scale(&linalg::adjoint(h0).dot(&gamma_inv).dot(h0), g0 * t)
                        + linalg::scale(&g0_e, g0 * (1.0 - t)),
                    linalg::scale(&linalg::adjoint(h1).dot(&gamma_inv).dot(h1), g0 * t)
                        + linalg::scale(&h1_d1, g1 - g0 * t),
                )
            }
        };
        Ok((hermitian_part(&grad0), hermitian_part(&grad1)))
    }
}

/// Exact Frobenius projection onto {S0, S1 PSD, tr S0 + tr S1 <= budget}:
/// Hermitian symmetrization, then eigenvalue clipping at zero; when the
/// clipped total still exceeds the budget, a common shift nu is subtracted
/// from the pooled spectrum before clipping, with nu solving
/// sum_k [w_k - nu]_+ = budget.
///
/// The shift matters: a cheaper clip-then-rescale retraction admits spurious
/// fixed points (gradient proportional to S instead of gradient = mu I on
/// the active subspace), which projected-gradient ascent then converges to.
/// With the exact projection the fixed points are precisely the KKT points.
fn project_feasible(s0: &CMat, s1: &CMat, budget: f64) -> Result<(CMat, CMat)> {
    let decompose = |s: &CMat| -> Result<(Vec<f64>, CMat)> {
        if s.nrows() == 0 {
            return Ok((Vec::new(), linalg::zeros(0, 0)));
        }
        eigh_ascending(&hermitian_part(s))
    };
    let (w0, v0) = decompose(s0)?;
    let (w1, v1) = decompose(s1)?;
    let clipped_total: f64 = w0
        .iter()
        .chain(w1.iter())
        .map(|&x| x.max(0.0))
        .sum();
    let nu = if clipped_total <= budget {
        0.0
    } else {
        // simplex projection of the pooled spectrum: largest m with
        // w_(m) > (sum_{k<=m} w_(k) - budget)/m gives the shift
        let mut pooled: Vec<f64> = w0.iter().chain(w1.iter()).copied().collect();
        pooled.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut prefix = 0.0;
        let mut nu = 0.0;
        for (m, &w) in pooled.iter().enumerate() {
            prefix += w;
            let cand = (prefix - budget) / (m + 1) as f64;
            if w > cand {
                nu = cand;
            } else {
                break;
            }
        }
        nu.max(0.0)
    };
    let rebuild = |w: &[f64], v: &CMat| -> CMat {
        if w.is_empty() {
            return linalg::zeros(0, 0);
        }
        let shifted: Vec<f64> = w.iter().map(|&x| (x - nu).max(0.0)).collect();
        reassemble(v, &shifted)
    };
    Ok((rebuild(&w0, &v0), rebuild(&w1, &v1)))
}

fn active_subspace(s: &CMat, power_scale: f64) -> Result<CMat> {
    if s.nrows() == 0 {
        return Ok(linalg::zeros(0, 0));
    }
    let (w, v) = eigh_ascending(s)?;
    let cutoff = 1e-9 * power_scale.max(w.last().copied().unwrap_or(0.0)).max(1e-300);
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > cutoff).collect();
    let mut u = linalg::zeros(s.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        u.slice_mut(s![.., col]).assign(&v.slice(s![.., i]));
    }
    Ok(u)
}

/// Recovers the dual variables from stationarity and measures the KKT
/// residuals at (S0, S1) for gradient blocks `grads`.
fn build_certificate(
    case: CaseLabel,
    grads: (&CMat, &CMat),
    s0: &CMat,
    s1: &CMat,
    budget: f64,
    converged: bool,
    global: bool,
) -> Result<KktCertificate> {
    let blocks = [(grads.0, s0), (grads.1, s1)];
    let total_trace: f64 = blocks.iter().map(|(_, s)| trace_re(s)).sum();
    // mu from the active directions: at a KKT point every positive
    // eigendirection of S_i sees gradient exactly mu.
    let mu = if total_trace > 1e-300 {
        blocks.iter().map(|(g, s)| inner_re(g, s)).sum::<f64>() / total_trace
    } else {
        // no power allocated: any mu dominating the gradients certifies
        blocks
            .iter()
            .filter(|(g, _)| g.nrows() > 0)
            .map(|(g, _)| eigh_ascending(g).map(|(w, _)| w.last().copied().unwrap_or(0.0)))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0f64, f64::max)
    };
    let power_scale = budget / (s0.nrows() + s1.nrows()).max(1) as f64;
    let mut psi = Vec::new();
    let mut stationarity = Vec::new();
    let mut min_eigs = Vec::new();
    let mut slack = Vec::new();
    for (g, s) in blocks {
        let dim = g.nrows();
        let psi_i = linalg::scale(&identity(dim), mu) - g;
        let min_eig = if dim > 0 { eigh_ascending(&psi_i)?.0[0] } else { 0.0 };
        let u = active_subspace(s, power_scale)?;
        let resid = if u.ncols() > 0 && mu > 0.0 {
            let restricted = linalg::adjoint(&u).dot(&psi_i).dot(&u);
            frobenius_norm(&restricted) / (mu * (u.ncols() as f64).sqrt())
        } else {
            0.0
        };
        slack.push(inner_re(&psi_i, s).abs());
        psi.push(psi_i);
        stationarity.push(resid);
        min_eigs.push(min_eig);
    }
    Ok(KktCertificate {
        case,
        mu,
        psi,
        stationarity_residuals: stationarity,
        psi_min_eigenvalues: min_eigs,
        complementary_slackness: slack,
        budget,
        converged,
        global,
    })
}

fn zero_solution(eff: &EffectiveChannels, case: CaseLabel, budget: f64) -> Result<CaseSolution> {
    let l = eff.confidential_streams();
    let dim0 = eff.dimension - l;
    let s0 = linalg::zeros(dim0, dim0);
    let s1 = linalg::zeros(l, l);
    let certificate = KktCertificate {
        case,
        mu: 0.0,
        psi: vec![],
        stationarity_residuals: vec![0.0, 0.0],
        psi_min_eigenvalues: vec![0.0, 0.0],
        complementary_slackness: vec![0.0, 0.0],
        budget,
        converged: true,
        global: true,
    };
    Ok(CaseSolution {
        covariances: CovarianceSet::new(vec![s0, s1], budget)?,
        r01: 0.0,
        r02: 0.0,
        r1: 0.0,
        objective: 0.0,
        certificate,
    })
}

fn finish_solution(
    eff: &EffectiveChannels,
    obj: &CaseObjective<'_>,
    case: CaseLabel,
    s0: CMat,
    s1: CMat,
    budget: f64,
    converged: bool,
) -> Result<CaseSolution> {
    let grads = obj.gradients(&s0, &s1)?;
    let certificate = build_certificate(
        case,
        (&grads.0, &grads.1),
        &s0,
        &s1,
        budget,
        converged,
        obj.concave(),
    )?;
    let r01 = rate_r01(eff, &s0, &s1)?;
    let r02 = rate_r02(eff, &s0)?;
    let r1 = rate_r1(eff, &s1)?;
    let (g0, g1) = (obj.w.gamma0(), obj.w.gamma1());
    let objective = match obj.kind {
        ObjectiveKind::F1 => g0 * r01 + g1 * r1,
        ObjectiveKind::F2 => g0 * r02 + g1 * r1,
        ObjectiveKind::F3(t) => g0 * (t * r01 + (1.0 - t) * r02) + g1 * r1,
    };
    Ok(CaseSolution {
        covariances: CovarianceSet::new(vec![s0, s1], budget)?,
        r01,
        r02,
        r1,
        objective,
        certificate,
    })
}

fn ascend(
    eff: &EffectiveChannels,
    obj: CaseObjective<'_>,
    case: CaseLabel,
    budget: f64,
    opts: &AscentOptions,
) -> Result<CaseSolution> {
    let l = eff.confidential_streams();
    let dim0 = eff.dimension - l;
    if budget <= 0.0 {
        return zero_solution(eff, case, 0.0);
    }
    let (mut s0, mut s1) = match &opts.warm_start {
        Some((a, b)) => {
            if a.nrows() != dim0 || b.nrows() != l {
                return Err(Error::DimensionMismatch("warm start has wrong block sizes".into()));
            }
            project_feasible(a, b, budget)?
        }
        None => {
            let p = budget / eff.dimension as f64;
            (
                linalg::scale(&identity(dim0), p),
                linalg::scale(&identity(l), p),
            )
        }
    };
    let mut f = obj.value(&s0, &s1)?;
    let mut spectral = budget.max(1e-6);
    let mut converged = false;
    let tol_norm = opts.tolerance * budget.max(1.0);

    // stationarity probe: movement of the projected-gradient map at a
    // gradient-normalized step, immune to step-size collapse
    let probe_stationary = |s0: &CMat, s1: &CMat, g0: &CMat, g1: &CMat, tol: f64| -> Result<bool> {
        let gnorm = (frobenius_norm(g0).powi(2) + frobenius_norm(g1).powi(2)).sqrt();
        if gnorm == 0.0 {
            return Ok(true);
        }
        let t = budget / gnorm;
        let (p0, p1) = project_feasible(
            &(s0 + &linalg::scale(g0, t)),
            &(s1 + &linalg::scale(g1, t)),
            budget,
        )?;
        let moved = frobenius_norm(&(&p0 - s0)) + frobenius_norm(&(&p1 - s1));
        Ok(moved <= tol * budget.max(1.0))
    };
    // tolerances below the square root of machine epsilon are not
    // measurable through the line search; exits forced by float resolution
    // use this floor instead of the requested tolerance
    let float_floor = opts.tolerance.max(1e-7);

    // spectral projected gradient: one projection per iteration gives the
    // feasible direction, then a segment line search (the segment stays
    // feasible by convexity)
    for _ in 0..opts.max_iterations {
        let (g0, g1) = obj.gradients(&s0, &s1)?;
        let (p0, p1) = project_feasible(
            &(&s0 + &linalg::scale(&g0, spectral)),
            &(&s1 + &linalg::scale(&g1, spectral)),
            budget,
        )?;
        let d0 = &p0 - &s0;
        let d1 = &p1 - &s1;
        let dnorm = frobenius_norm(&d0) + frobenius_norm(&d1);
        let slope = inner_re(&g0, &d0) + inner_re(&g1, &d1);
        if dnorm <= tol_norm || slope <= 0.0 {
            if slope <= 0.0 {
                // no feasible ascent direction at this point
                converged = probe_stationary(&s0, &s1, &g0, &g1, float_floor)?;
                break;
            }
            converged = probe_stationary(&s0, &s1, &g0, &g1, opts.tolerance)?;
            if converged {
                break;
            }
            // direction too short because the spectral step collapsed;
            // reset it and retry
            spectral = budget.max(1e-6);
            continue;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1e-14 {
            let c0 = &s0 + &linalg::scale(&d0, alpha);
            let c1 = &s1 + &linalg::scale(&d1, alpha);
            let fc = obj.value(&c0, &c1)?;
            if fc.is_finite() && fc >= f + opts.armijo * alpha * slope {
                s0 = c0;
                s1 = c1;
                f = fc;
                accepted = true;
                break;
            }
            alpha *= opts.backtrack;
        }
        if !accepted {
            // the line search cannot measure further improvement: stationary
            // at floating-point resolution
            converged = probe_stationary(&s0, &s1, &g0, &g1, float_floor)?;
            break;
        }
        if alpha * dnorm <= tol_norm && probe_stationary(&s0, &s1, &g0, &g1, opts.tolerance)? {
            converged = true;
            break;
        }
        spectral = if alpha >= 1.0 {
            (spectral * 2.0).min(1e9 * budget)
        } else {
            (spectral * alpha.max(0.1)).max(1e-12 * budget)
        };
    }
    finish_solution(eff, &obj, case, s0, s1, budget, converged)
}

/// Case-1 objective f1 = gamma0 R01 + gamma1 R1, by projected-gradient
/// ascent. Returns a KKT-certified solution; the certificate is global only
/// in the concave regime gamma1 >= gamma0.
pub fn ascend_case1(
    eff: &EffectiveChannels,
    w: WeightPair,
    budget: f64,
    opts: &AscentOptions,
) -> Result<CaseSolution> {
    ascend(
        eff,
        CaseObjective { eff, w, kind: ObjectiveKind::F1 },
        CaseLabel::Case1,
        budget,
        opts,
    )
}

/// Case-3 objective f3 with mixing parameter theta in (0, 1).
pub fn ascend_case3(
    eff: &EffectiveChannels,
    w: WeightPair,
    theta: f64,
    budget: f64,
    opts: &AscentOptions,
) -> Result<CaseSolution> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie strictly inside (0, 1), got {theta}"
        )));
    }
    ascend(
        eff,
        CaseObjective { eff, w, kind: ObjectiveKind::F3(theta) },
        CaseLabel::Case3,
        budget,
        opts,
    )
}

/// Numerical maximization of f2, kept as an independent route to
/// cross-check [`maximize_case2`]'s closed form.
pub fn ascend_case2(
    eff: &EffectiveChannels,
    w: WeightPair,
    budget: f64,
    opts: &AscentOptions,
) -> Result<CaseSolution> {
    ascend(
        eff,
        CaseObjective { eff, w, kind: ObjectiveKind::F2 },
        CaseLabel::Case2,
        budget,
        opts,
    )
}

/// Case-2 closed form: f2 = gamma0 R02 + gamma1 R1 decouples over the SVD
/// modes of G0 and H1, so the optimal covariances are diagonal in those
/// bases with waterfilled diagonals.
pub fn maximize_case2(
    eff: &EffectiveChannels,
    w: WeightPair,
    budget: f64,
) -> Result<CaseSolution> {
    let l = eff.confidential_streams();
    let dim0 = eff.dimension - l;
    if budget <= 0.0 {
        return zero_solution(eff, CaseLabel::Case2, 0.0);
    }
    let mut streams: Vec<(f64, f64)> = Vec::with_capacity(eff.dimension);
    for lam in eff.g0_eigenvalues() {
        streams.push((w.gamma0(), lam));
    }
    for lam in eff.h1_eigenvalues() {
        streams.push((w.gamma1(), lam));
    }
    let absorbing = streams.iter().any(|&(wt, lam)| wt > 0.0 && lam > 0.0);
    if !absorbing {
        return zero_solution(eff, CaseLabel::Case2, budget);
    }
    let wf = waterfill(&streams, budget)?;
    let p0 = &wf.allocations[..dim0];
    let p1 = &wf.allocations[dim0..];
    let s0 = if dim0 > 0 { reassemble(&eff.v_g0, p0) } else { linalg::zeros(0, 0) };
    let s1 = if l > 0 { reassemble(&eff.v_h1, p1) } else { linalg::zeros(0, 0) };

    // f2 gradients for the certificate
    use ndarray_linalg::Inverse;
    let n = eff.h0.nrows();
    let e_inv = (identity(n) + sandwich(&eff.g0, &s0))
        .inv()
        .map_err(|e| Error::Numerical(format!("certificate inverse failed: {e}")))?;
    let d_inv = (identity(n) + sandwich(&eff.h1, &s1))
        .inv()
        .map_err(|e| Error::Numerical(format!("certificate inverse failed: {e}")))?;
    let grad0 = hermitian_part(&linalg::scale(
        &linalg::adjoint(&eff.g0).dot(&e_inv).dot(&eff.g0),
        w.gamma0(),
    ));
    let grad1 = hermitian_part(&linalg::scale(
        &linalg::adjoint(&eff.h1).dot(&d_inv).dot(&eff.h1),
        w.gamma1(),
    ));
    let certificate =
        build_certificate(CaseLabel::Case2, (&grad0, &grad1), &s0, &s1, budget, true, true)?;
    let r01 = rate_r01(eff, &s0, &s1)?;
    let r02 = rate_r02(eff, &s0)?;
    let r1 = rate_r1(eff, &s1)?;
    Ok(CaseSolution {
        covariances: CovarianceSet::new(vec![s0, s1], budget)?,
        r01,
        r02,
        r1,
        objective: w.gamma0() * r02 + w.gamma1() * r1,
        certificate,
    })
}

/// Waterfilled secrecy rate of the null-space precoder (the gamma1 = 1
/// corner): R1 = 1/(N+L) sum_i [log2(level * lambda_i)]_+ where the water
/// level saturates the budget. Cross-checked against the log-det route
/// before returning.
pub fn secrecy_rate_vdm(
    eff: &EffectiveChannels,
    budget: f64,
) -> Result<(f64, WaterfillingSolution)> {
    let l = eff.confidential_streams();
    if l == 0 {
        return Ok((0.0, WaterfillingSolution { mu: 0.0, allocations: vec![] }));
    }
    if budget <= 0.0 {
        return Ok((0.0, WaterfillingSolution { mu: 0.0, allocations: vec![0.0; l] }));
    }
    let streams: Vec<(f64, f64)> = eff.h1_eigenvalues().iter().map(|&lam| (1.0, lam)).collect();
    let wf = waterfill(&streams, budget)?;
    let level = 1.0 / wf.mu;
    let rate: f64 = eff
        .h1_eigenvalues()
        .iter()
        .map(|&lam| (level * lam).log2().max(0.0))
        .sum::<f64>()
        / eff.dimension as f64;
    // consistency: the same value through the log-det functional
    let s1 = reassemble(&eff.v_h1, &wf.allocations);
    let direct = rate_r1(eff, &s1)?;
    if (rate - direct).abs() > 1e-9 * rate.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "waterfilled secrecy rate mismatch: closed form {rate}, log-det {direct}"
        )));
    }
    Ok((rate, wf))
}

/// Outcome of the theta search for Case 3.
#[derive(Debug)]
pub enum ThetaOutcome {
    /// theta in (0,1) with |R01 - R02| within tolerance at the maximizer.
    Balanced { theta: f64, solution: CaseSolution },
    /// No sign change of R01 - R02 over the grid: Case 3 cannot balance.
    Infeasible { samples: Vec<(f64, f64)> },
}

/// Finds theta in (0,1) such that the Case-3 maximizer satisfies
/// R01 = R02 within 1e-6: bisection on Delta(theta) = R01 - R02, seeded by a
/// 32-point grid when the endpoint signs agree.
pub fn theta_solve(
    eff: &EffectiveChannels,
    w: WeightPair,
    budget: f64,
    opts: &AscentOptions,
) -> Result<ThetaOutcome> {
    const BALANCE_TOL: f64 = 1e-6;
    let mut warm = opts.clone();
    let eval = |theta: f64, warm: &mut AscentOptions| -> Result<(f64, CaseSolution)> {
        let sol = ascend_case3(eff, w, theta, budget, warm)?;
        let m = sol.covariances.matrices();
        warm.warm_start = Some((m[0].clone(), m[1].clone()));
        Ok((sol.r01 - sol.r02, sol))
    };

    let (mut lo, mut hi) = (1e-3, 1.0 - 1e-3);
    let (mut d_lo, sol_lo) = eval(lo, &mut warm)?;
    if d_lo.abs() <= BALANCE_TOL {
        return Ok(ThetaOutcome::Balanced { theta: lo, solution: sol_lo });
    }
    let (d_hi, sol_hi) = eval(hi, &mut warm)?;
    if d_hi.abs() <= BALANCE_TOL {
        return Ok(ThetaOutcome::Balanced { theta: hi, solution: sol_hi });
    }

    if d_lo.signum() == d_hi.signum() {
        // grid fallback: Delta is not guaranteed monotone
        let mut samples = vec![(lo, d_lo)];
        let mut bracket = None;
        let mut prev = (lo, d_lo);
        for k in 1..=32 {
            let theta = lo + (hi - lo) * k as f64 / 32.0;
            let (d, sol) = eval(theta, &mut warm)?;
            samples.push((theta, d));
            if d.abs() <= BALANCE_TOL {
                return Ok(ThetaOutcome::Balanced { theta, solution: sol });
            }
            if d.signum() != prev.1.signum() {
                bracket = Some((prev.0, theta, prev.1));
                break;
            }
            prev = (theta, d);
        }
        match bracket {
            Some((a, b, da)) => {
                lo = a;
                hi = b;
                d_lo = da;
            }
            None => return Ok(ThetaOutcome::Infeasible { samples }),
        }
    }

    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (d, sol) = eval(mid, &mut warm)?;
        if d.abs() <= BALANCE_TOL {
            return Ok(ThetaOutcome::Balanced { theta: mid, solution: sol });
        }
        if d.signum() == d_lo.signum() {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical("theta bisection failed to balance R01 and R02".into()))
}

/// A weighted-sum-rate solution with its consistency flag.
#[derive(Debug)]
pub struct WeightedSolution {
    pub solution: CaseSolution,
    /// The selected case passed its own consistency check. When false the
    /// best objective among the attempted cases is returned instead.
    pub consistent: bool,
}

/// Maximizes gamma0 min(R01, R02) + gamma1 R1 by the three-case hypothesis
/// test: Case 1 (accept if R01 < R02), Case 2 (accept if R02 < R01), then
/// Case 3 with the theta search. Exactly one case is expected to pass; when
/// none does, the best attempted objective is returned flagged inconsistent.
pub fn maximize_weighted(
    eff: &EffectiveChannels,
    w: WeightPair,
    budget: f64,
    opts: &AscentOptions,
) -> Result<WeightedSolution> {
    if budget <= 0.0 {
        return Ok(WeightedSolution {
            solution: zero_solution(eff, CaseLabel::Case2, 0.0)?,
            consistent: true,
        });
    }
    if w.gamma0() <= 1e-15 {
        // confidential-only corner: all three objectives reduce to R1 and
        // the closed form is exact
        let solution = maximize_case2(eff, w, budget)?;
        return Ok(WeightedSolution { solution, consistent: true });
    }
    let c1 = ascend_case1(eff, w, budget, opts)?;
    if c1.r01 < c1.r02 {
        return Ok(WeightedSolution { solution: c1, consistent: true });
    }
    let c2 = maximize_case2(eff, w, budget)?;
    if c2.r02 < c2.r01 {
        return Ok(WeightedSolution { solution: c2, consistent: true });
    }
    match theta_solve(eff, w, budget, opts)? {
        ThetaOutcome::Balanced { solution, .. } => {
            Ok(WeightedSolution { solution, consistent: true })
        }
        ThetaOutcome::Infeasible { .. } => {
            let best = if c1.weighted_rate(w) >= c2.weighted_rate(w) { c1 } else { c2 };
            Ok(WeightedSolution { solution: best, consistent: false })
        }
    }
}

/// The maximum sum rate point: the equal-weight case gamma0 = gamma1 = 1/2,
/// where all three case objectives are concave and the hypothesis test is
/// exhaustive.
pub fn greedy_max_sum_rate(
    eff: &EffectiveChannels,
    budget: f64,
    opts: &AscentOptions,
) -> Result<WeightedSolution> {
    maximize_weighted(eff, WeightPair::equal(), budget, opts)
}

/// One solved boundary point of the (R0, R1) region sweep.
#[derive(Debug, Clone)]
pub struct RegionPoint {
    pub gamma1: f64,
    pub r0: f64,
    pub r1: f64,
    pub case: CaseLabel,
    pub consistent: bool,
    pub kkt_residual: f64,
}

/// Sweep result: per-weight boundary points plus the upper convex hull
/// (the time-sharing closure of the swept points).
#[derive(Debug, Clone)]
pub struct RegionSweep {
    pub points: Vec<RegionPoint>,
    pub hull: Vec<(f64, f64)>,
}

/// Upper convex hull (monotone chain) over (R0, R1) points.
pub fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
    });
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= -1e-15 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Solves the weighted maximization at each gamma1 in `gamma1_grid` and
/// hulls the resulting (R0, R1) points.
pub fn rate_region_sweep(
    eff: &EffectiveChannels,
    budget: f64,
    gamma1_grid: &[f64],
    opts: &AscentOptions,
) -> Result<RegionSweep> {
    if gamma1_grid.is_empty() {
        return Err(Error::InvalidArgument("weight grid is empty".into()));
    }
    let mut points = Vec::with_capacity(gamma1_grid.len());
    for &g1 in gamma1_grid {
        if !(0.0..=1.0).contains(&g1) {
            return Err(Error::InvalidArgument(format!(
                "weight gamma1 = {g1} outside [0, 1]"
            )));
        }
        let w = WeightPair::new(1.0 - g1, g1)?;
        let out = maximize_weighted(eff, w, budget, opts)?;
        let rates = out.solution.rates();
        points.push(RegionPoint {
            gamma1: g1,
            r0: rates.rates[0],
            r1: rates.rates[1],
            case: out.solution.certificate.case,
            consistent: out.consistent,
            kkt_residual: out.solution.certificate.worst_residual(),
        });
    }
    let hull = upper_hull(&points.iter().map(|p| (p.r0, p.r1)).collect::<Vec<_>>());
    Ok(RegionSweep { points, hull })
}
