//! Monte Carlo experiment driver.
//!
//! A run is described by an [`ExperimentConfig`] (JSON on disk, presets in
//! code), executes one independent channel draw per trial — all schemes see
//! identical draws — and emits a [`ResultTable`] with one row per
//! (trial, snr, scheme) in deterministic order. Trials are independent work
//! units: the same seed and config produce byte-identical CSV at any worker
//! count. Every confidential-rate row carries a leakage diagnostic; a
//! single value above 1e-9 fails the whole run.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::channel::{make_toeplitz, sample_channel, ChannelVector, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{null_space, reassemble, CVec};
use crate::multiuser::{
    kuser_equal_power_rates, kuser_leakage, kuser_precoder, two_user_leakage, two_user_precoder,
    two_user_rates, MultiuserInstance,
};
use crate::optimizer::{
    maximize_weighted, secrecy_rate_vdm, upper_hull, AscentOptions, WeightPair,
};
use crate::precoder::{build_precoder, NullSpaceMethod};
use crate::rates::{
    db_to_linear, effective_channels, equal_power_rates, fixed_covariance_secrecy_rate,
    leakage_rate, rate_r1, scaled_identity,
};

/// Leakage bound every confidential-rate row must satisfy.
pub const LEAKAGE_BOUND: f64 = 1e-9;

/// Transmission schemes the driver can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Null-space precoder with waterfilled confidential covariance.
    #[serde(rename = "vdm-waterfill")]
    VdmWaterfill,
    /// Null-space precoder with equal power per stream (best single column
    /// in the MISO baseline and two-user region settings).
    #[serde(rename = "vdm-equal")]
    VdmEqual,
    /// Optimal beamformer confined to the eavesdropper's null space.
    #[serde(rename = "miso-optimal")]
    MisoOptimal,
    /// Projection-based zero forcing (two-user MISO region).
    #[serde(rename = "zf")]
    Zf,
    /// Fixed scaled-identity covariance scored by the generalized-eigenvalue
    /// secrecy-rate expression.
    #[serde(rename = "fixed-cov-geig")]
    FixedCovGeig,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scheme::VdmWaterfill => "vdm-waterfill",
            Scheme::VdmEqual => "vdm-equal",
            Scheme::MisoOptimal => "miso-optimal",
            Scheme::Zf => "zf",
            Scheme::FixedCovGeig => "fixed-cov-geig",
        };
        write!(f, "{s}")
    }
}

/// What the experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Wiretap secrecy rate R1 vs SNR.
    #[serde(rename = "secrecy-rate")]
    SecrecyRate,
    /// Weighted (R0, R1) boundary points (and their hull) per SNR.
    #[serde(rename = "rate-region")]
    RateRegion,
    /// K+1-user equal-power rates vs SNR.
    #[serde(rename = "kuser")]
    KUser,
    /// Two-user (two confidential messages) equal-power rates vs SNR.
    #[serde(rename = "two-user")]
    TwoUser,
    /// Two-user MISO (R1, R2) region by power-split sweep.
    #[serde(rename = "two-user-region")]
    TwoUserRegion,
    /// Single-observation MISO wiretap baseline comparison.
    #[serde(rename = "baseline")]
    MisoBaseline,
}

fn default_k() -> usize {
    1
}

/// Full description of one experiment run. Serialized as JSON with these
/// exact field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub preset: Option<String>,
    pub n: usize,
    pub l: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    /// gamma1 grid for `rate-region`, power-split fractions for
    /// `two-user-region`; ignored elsewhere.
    #[serde(default)]
    pub weight_grid: Vec<f64>,
    /// Confidential stream counts: [l] for the wiretap kinds, [l1, ..., lK]
    /// for the multiuser kinds. Defaults to the full delay spread (wiretap)
    /// or an even split (multiuser).
    #[serde(default)]
    pub streams: Option<Vec<usize>>,
    /// CSV output path; stdout when absent.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("bad config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Named desk-scale presets exposing the reference dimensions.
    pub fn preset(name: &str) -> Result<Self> {
        let snr_0_50 = || (0..=10).map(|i| 5.0 * i as f64).collect::<Vec<_>>();
        let coarse = || (0..=5).map(|i| 10.0 * i as f64).collect::<Vec<_>>();
        let splits = || (0..=16).map(|i| i as f64 / 16.0).collect::<Vec<_>>();
        let cfg = match name {
            "wiretap-64x16" => Self {
                kind: ExperimentKind::SecrecyRate,
                preset: Some(name.into()),
                n: 64,
                l: 16,
                k: 1,
                snr_grid_db: snr_0_50(),
                trials: 20,
                seed: 7,
                schemes: vec![Scheme::VdmWaterfill, Scheme::VdmEqual],
                weight_grid: vec![],
                streams: None,
                out: None,
            },
            "wiretap-16x4" => Self {
                n: 16,
                l: 4,
                ..Self::preset("wiretap-64x16")?
            },
            "miso-64x16" => Self {
                kind: ExperimentKind::MisoBaseline,
                preset: Some(name.into()),
                n: 64,
                l: 16,
                k: 1,
                snr_grid_db: snr_0_50(),
                trials: 20,
                seed: 11,
                schemes: vec![Scheme::MisoOptimal, Scheme::VdmEqual],
                weight_grid: vec![],
                streams: None,
                out: None,
            },
            "sum-rate-16x4" => Self {
                kind: ExperimentKind::RateRegion,
                preset: Some(name.into()),
                n: 16,
                l: 4,
                k: 1,
                snr_grid_db: coarse(),
                trials: 10,
                seed: 13,
                schemes: vec![Scheme::VdmWaterfill, Scheme::VdmEqual],
                weight_grid: vec![0.5],
                streams: None,
                out: None,
            },
            "sum-rate-64x16" => Self {
                n: 64,
                l: 16,
                trials: 5,
                ..Self::preset("sum-rate-16x4")?
            },
            "bcc-region-1x5" => Self {
                kind: ExperimentKind::RateRegion,
                preset: Some(name.into()),
                n: 1,
                l: 5,
                k: 1,
                snr_grid_db: vec![20.0],
                trials: 10,
                seed: 17,
                schemes: vec![Scheme::VdmWaterfill],
                weight_grid: (0..=16).map(|i| i as f64 / 16.0).collect(),
                streams: None,
                out: None,
            },
            "kuser-16x4" => Self {
                kind: ExperimentKind::KUser,
                preset: Some(name.into()),
                n: 16,
                l: 4,
                k: 2,
                snr_grid_db: snr_0_50(),
                trials: 10,
                seed: 19,
                schemes: vec![Scheme::VdmEqual],
                weight_grid: vec![],
                streams: Some(vec![2, 2]),
                out: None,
            },
            "two-user-16x4" => Self {
                kind: ExperimentKind::TwoUser,
                preset: Some(name.into()),
                n: 16,
                l: 4,
                k: 2,
                snr_grid_db: snr_0_50(),
                trials: 10,
                seed: 23,
                schemes: vec![Scheme::VdmEqual],
                weight_grid: vec![],
                streams: Some(vec![2, 2]),
                out: None,
            },
            "two-user-region-1x5" => Self {
                kind: ExperimentKind::TwoUserRegion,
                preset: Some(name.into()),
                n: 1,
                l: 5,
                k: 2,
                snr_grid_db: vec![20.0],
                trials: 20,
                seed: 29,
                schemes: vec![Scheme::VdmEqual, Scheme::Zf],
                weight_grid: splits(),
                streams: None,
                out: None,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (available: wiretap-64x16, wiretap-16x4, \
                     miso-64x16, sum-rate-16x4, sum-rate-64x16, bcc-region-1x5, kuser-16x4, \
                     two-user-16x4, two-user-region-1x5)"
                )))
            }
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("N must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr grid is empty".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("snr grid must be sorted ascending".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        let allowed: &[Scheme] = match self.kind {
            ExperimentKind::SecrecyRate => {
                &[Scheme::VdmWaterfill, Scheme::VdmEqual, Scheme::FixedCovGeig]
            }
            ExperimentKind::RateRegion => &[Scheme::VdmWaterfill, Scheme::VdmEqual],
            ExperimentKind::KUser | ExperimentKind::TwoUser => &[Scheme::VdmEqual],
            ExperimentKind::TwoUserRegion => &[Scheme::VdmEqual, Scheme::Zf],
            ExperimentKind::MisoBaseline => &[Scheme::MisoOptimal, Scheme::VdmEqual],
        };
        for s in &self.schemes {
            if !allowed.contains(s) {
                return Err(Error::Config(format!(
                    "scheme {s} is not applicable to this experiment kind"
                )));
            }
        }
        match self.kind {
            ExperimentKind::RateRegion | ExperimentKind::TwoUserRegion => {
                if self.weight_grid.is_empty() {
                    return Err(Error::Config("region sweeps need a weight grid".into()));
                }
                if self.weight_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
                    return Err(Error::Config("weight grid entries must lie in [0, 1]".into()));
                }
            }
            _ => {}
        }
        if matches!(
            self.kind,
            ExperimentKind::KUser | ExperimentKind::TwoUser | ExperimentKind::TwoUserRegion
        ) {
            let users = self.user_count();
            if let Some(streams) = &self.streams {
                if streams.len() != users {
                    return Err(Error::Config(format!(
                        "streams has {} entries for {users} users",
                        streams.len()
                    )));
                }
            }
        }
        self.stream_counts()?;
        Ok(())
    }

    fn user_count(&self) -> usize {
        match self.kind {
            ExperimentKind::TwoUser | ExperimentKind::TwoUserRegion => 2,
            ExperimentKind::KUser => self.k,
            _ => 1,
        }
    }

    /// Resolved confidential stream counts for the run.
    pub fn stream_counts(&self) -> Result<Vec<usize>> {
        let counts = match self.kind {
            ExperimentKind::SecrecyRate
            | ExperimentKind::RateRegion
            | ExperimentKind::MisoBaseline => {
                let l = self
                    .streams
                    .as_ref()
                    .map(|s| s.first().copied().unwrap_or(self.l))
                    .unwrap_or(self.l);
                if l > self.l {
                    return Err(Error::Config(format!(
                        "confidential streams {l} exceed the delay spread {}",
                        self.l
                    )));
                }
                vec![l]
            }
            ExperimentKind::KUser => {
                let counts = self
                    .streams
                    .clone()
                    .unwrap_or_else(|| vec![self.l / self.k.max(1); self.k]);
                if counts.iter().sum::<usize>() > self.l {
                    return Err(Error::Config(
                        "total confidential streams exceed the delay spread".into(),
                    ));
                }
                counts
            }
            ExperimentKind::TwoUser | ExperimentKind::TwoUserRegion => {
                let counts = self.streams.clone().unwrap_or_else(|| vec![self.l, self.l]);
                if counts.iter().any(|&c| c > self.l) {
                    return Err(Error::Config(
                        "per-user streams exceed the delay spread".into(),
                    ));
                }
                counts
            }
        };
        Ok(counts)
    }
}

/// One emitted measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub trial: usize,
    pub snr_db: f64,
    pub scheme: String,
    /// (R0, R1, R2); unused entries are zero.
    pub rates: [f64; 3],
    /// Case label / sweep annotation; empty when not applicable.
    pub case: String,
    pub kkt_residual: Option<f64>,
    pub leakage: Option<f64>,
}

/// All rows of a run, in (trial, snr, scheme) order. Per-row evaluation
/// failures are recorded here instead of aborting the sweep.
#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<String>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "trial,snr_db,scheme,R0,R1,R2,case,kkt_residual,leakage")?;
        for r in &self.rows {
            let kkt = r.kkt_residual.map(|v| format!("{v:e}")).unwrap_or_default();
            let leak = r.leakage.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.trial, r.snr_db, r.scheme, r.rates[0], r.rates[1], r.rates[2], r.case, kkt, leak
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Mean of rate column `idx` per (scheme, snr), sorted by snr.
    pub fn mean_rates(&self, scheme: &str, idx: usize) -> Vec<(f64, f64)> {
        let mut acc: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
        for r in self.rows.iter().filter(|r| r.scheme == scheme) {
            let key = r.snr_db.to_bits();
            let e = acc.entry(key).or_insert((0.0, 0));
            e.0 += r.rates[idx];
            e.1 += 1;
        }
        let mut out: Vec<(f64, f64)> = acc
            .into_iter()
            .map(|(bits, (sum, count))| (f64::from_bits(bits), sum / count as f64))
            .collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }

    pub fn schemes(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.scheme) {
                seen.push(r.scheme.clone());
            }
        }
        seen
    }
}

/// Per-scheme high-SNR slope estimate of the mean rates.
#[derive(Debug, Clone)]
pub struct DofEstimate {
    pub scheme: String,
    /// Least-squares slope of mean rate vs log2 P, per rate column.
    pub slopes: [f64; 3],
    /// Root-mean-square regression residual per rate column.
    pub residuals: [f64; 3],
    pub points: usize,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = num / den;
    let intercept = my - slope * mx;
    let mse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum::<f64>()
        / n;
    (slope, mse.sqrt())
}

/// Least-squares slopes of mean rate vs log2(P) over the SNR tail
/// [lo_db, hi_db]; needs at least three grid points in the tail.
pub fn estimate_dof(table: &ResultTable, lo_db: f64, hi_db: f64) -> Result<Vec<DofEstimate>> {
    let mut out = Vec::new();
    for scheme in table.schemes() {
        let mut slopes = [0.0; 3];
        let mut residuals = [0.0; 3];
        let mut points = 0;
        for idx in 0..3 {
            let series: Vec<(f64, f64)> = table
                .mean_rates(&scheme, idx)
                .into_iter()
                .filter(|(db, _)| *db >= lo_db - 1e-9 && *db <= hi_db + 1e-9)
                .collect();
            if series.len() < 3 {
                return Err(Error::InvalidArgument(format!(
                    "need at least 3 SNR points in [{lo_db}, {hi_db}] dB, found {}",
                    series.len()
                )));
            }
            points = series.len();
            let xs: Vec<f64> = series.iter().map(|(db, _)| db_to_linear(*db).log2()).collect();
            let ys: Vec<f64> = series.iter().map(|(_, r)| *r).collect();
            let (slope, resid) = least_squares(&xs, &ys);
            slopes[idx] = slope;
            residuals[idx] = resid;
        }
        out.push(DofEstimate { scheme, slopes, residuals, points });
    }
    Ok(out)
}

/// RNG slot layout within a trial: slot 0 is the eavesdropper (when one
/// exists), slots 1..=K the legitimate users.
fn trial_stream(seed: u64, trial: usize, slot: u64) -> RngStream {
    RngStream::new(seed, trial as u64 * 16 + slot)
}

#[derive(Default)]
struct TrialOutput {
    rows: Vec<ResultRow>,
    failures: Vec<String>,
}

impl TrialOutput {
    /// Runs one (snr, scheme) evaluation, recording a failure instead of
    /// aborting the sweep.
    fn record(
        &mut self,
        trial: usize,
        db: f64,
        what: &str,
        f: impl FnOnce() -> Result<Vec<ResultRow>>,
    ) {
        match f() {
            Ok(mut rows) => self.rows.append(&mut rows),
            Err(e) => self
                .failures
                .push(format!("trial {trial}, {db} dB, {what}: {e}")),
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> TrialOutput {
    let setup = match cfg.kind {
        ExperimentKind::SecrecyRate => secrecy_rate_trial(cfg, trial),
        ExperimentKind::MisoBaseline => miso_baseline_trial(cfg, trial),
        ExperimentKind::RateRegion => rate_region_trial(cfg, trial),
        ExperimentKind::KUser => kuser_trial(cfg, trial),
        ExperimentKind::TwoUser => two_user_trial(cfg, trial),
        ExperimentKind::TwoUserRegion => two_user_region_trial(cfg, trial),
    };
    match setup {
        Ok(out) => out,
        // channel draw / precoder construction failed: the whole trial is
        // reported, the sweep continues
        Err(e) => TrialOutput {
            rows: Vec::new(),
            failures: vec![format!("trial {trial}: {e}")],
        },
    }
}

fn secrecy_rate_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    let g = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 0));
    let h = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 1));
    let l = cfg.stream_counts()?[0];
    let (prec, _) = build_precoder(&g, &h, cfg.n, l, NullSpaceMethod::Svd)?;
    let th = make_toeplitz(&h, cfg.n)?;
    let tg = make_toeplitz(&g, cfg.n)?;
    let eff = effective_channels(&th, &tg, &prec)?;
    let v1 = &prec.confidential_blocks()[0];
    let dim = eff.dimension;

    let mut out = TrialOutput::default();
    for &db in &cfg.snr_grid_db {
        let p = db_to_linear(db);
        let budget = dim as f64 * p;
        for scheme in &cfg.schemes {
            out.record(trial, db, &scheme.to_string(), || {
                let row = match scheme {
                    Scheme::VdmWaterfill => {
                        let (rate, wf) = secrecy_rate_vdm(&eff, budget)?;
                        let s1 = reassemble(&eff.v_h1, &wf.allocations);
                        let leak = leakage_rate(&tg, v1, &s1)?;
                        ResultRow {
                            trial,
                            snr_db: db,
                            scheme: scheme.to_string(),
                            rates: [0.0, rate, 0.0],
                            case: String::new(),
                            kkt_residual: None,
                            leakage: Some(leak),
                        }
                    }
                    Scheme::VdmEqual => {
                        let s1 =
                            scaled_identity(l, if l > 0 { budget / l as f64 } else { 0.0 });
                        let rate = rate_r1(&eff, &s1)?;
                        let leak = leakage_rate(&tg, v1, &s1)?;
                        ResultRow {
                            trial,
                            snr_db: db,
                            scheme: scheme.to_string(),
                            rates: [0.0, rate, 0.0],
                            case: String::new(),
                            kkt_residual: None,
                            leakage: Some(leak),
                        }
                    }
                    Scheme::FixedCovGeig => {
                        let s = scaled_identity(dim, p);
                        let rate = fixed_covariance_secrecy_rate(&th, &tg, &s)?;
                        ResultRow {
                            trial,
                            snr_db: db,
                            scheme: scheme.to_string(),
                            rates: [0.0, rate, 0.0],
                            case: String::new(),
                            kkt_residual: None,
                            leakage: None,
                        }
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "scheme {other} not valid for secrecy-rate"
                        )))
                    }
                };
                Ok(vec![row])
            });
        }
    }
    Ok(out)
}

fn miso_baseline_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    let g = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 0));
    let h = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 1));
    let th = make_toeplitz(&h, cfg.n)?;
    let tg = make_toeplitz(&g, cfg.n)?;
    let h_row: CVec = th.matrix().row(0).to_owned();
    let dim = cfg.n + cfg.l;
    let basis = null_space(tg.matrix())?;

    let (opt_phi, opt_gain) = baselines::miso_optimal_beamformer(&h_row, &tg)?;
    let col_gain = baselines::vandermonde_miso_gain(&h_row, &basis)?;
    // leakage of a single beamformed stream through T(g)
    let beam_leakage = |weights: &CVec, power: f64| -> f64 {
        let through = tg.matrix().dot(weights);
        let energy: f64 = through.iter().map(|z| z.norm_sqr()).sum();
        (1.0 + power * energy).log2() / dim as f64
    };
    // best column as a beamformer for the leakage diagnostic
    let best_col: CVec = {
        let mut best = 0usize;
        let mut best_gain = -1.0;
        for j in 0..basis.ncols() {
            let col = basis.column(j).to_owned();
            let gain: f64 = h_row
                .iter()
                .zip(col.iter())
                .map(|(a, b)| a * b)
                .sum::<num_complex::Complex64>()
                .norm_sqr();
            if gain > best_gain {
                best_gain = gain;
                best = j;
            }
        }
        basis.column(best).to_owned()
    };

    let mut out = TrialOutput::default();
    for &db in &cfg.snr_grid_db {
        let p = db_to_linear(db);
        let budget = dim as f64 * p;
        for scheme in &cfg.schemes {
            out.record(trial, db, &scheme.to_string(), || {
                let row = match scheme {
                    Scheme::MisoOptimal => ResultRow {
                        trial,
                        snr_db: db,
                        scheme: scheme.to_string(),
                        rates: [0.0, baselines::miso_rate(p, dim, opt_gain), 0.0],
                        case: String::new(),
                        kkt_residual: None,
                        leakage: Some(beam_leakage(&opt_phi.weights, budget)),
                    },
                    Scheme::VdmEqual => ResultRow {
                        trial,
                        snr_db: db,
                        scheme: scheme.to_string(),
                        rates: [0.0, baselines::miso_rate(p, dim, col_gain), 0.0],
                        case: String::new(),
                        kkt_residual: None,
                        leakage: Some(beam_leakage(&best_col, budget)),
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "scheme {other} not valid for baseline"
                        )))
                    }
                };
                Ok(vec![row])
            });
        }
    }
    Ok(out)
}

fn rate_region_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    let g = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 0));
    let h = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 1));
    let l = cfg.stream_counts()?[0];
    let (prec, _) = build_precoder(&g, &h, cfg.n, l, NullSpaceMethod::Svd)?;
    let th = make_toeplitz(&h, cfg.n)?;
    let tg = make_toeplitz(&g, cfg.n)?;
    let eff = effective_channels(&th, &tg, &prec)?;
    let v1 = &prec.confidential_blocks()[0];
    let dim = eff.dimension;
    let opts = AscentOptions::default();

    let mut out = TrialOutput::default();
    for &db in &cfg.snr_grid_db {
        let p = db_to_linear(db);
        let budget = dim as f64 * p;
        for scheme in &cfg.schemes {
            out.record(trial, db, &scheme.to_string(), || match scheme {
                Scheme::VdmWaterfill => {
                    let mut rows = Vec::new();
                    let mut points = Vec::new();
                    for &g1 in &cfg.weight_grid {
                        let w = WeightPair::new(1.0 - g1, g1)?;
                        let solved = maximize_weighted(&eff, w, budget, &opts)?;
                        let rates = solved.solution.rates();
                        let leak =
                            leakage_rate(&tg, v1, &solved.solution.covariances.matrices()[1])?;
                        let label = if solved.consistent {
                            format!("{}@w={g1}", solved.solution.certificate.case)
                        } else {
                            format!(
                                "{}@w={g1}(inconsistent)",
                                solved.solution.certificate.case
                            )
                        };
                        points.push((rates.rates[0], rates.rates[1]));
                        rows.push(ResultRow {
                            trial,
                            snr_db: db,
                            scheme: scheme.to_string(),
                            rates: [rates.rates[0], rates.rates[1], 0.0],
                            case: label,
                            kkt_residual: Some(solved.solution.certificate.worst_residual()),
                            leakage: Some(leak),
                        });
                    }
                    for (r0, r1) in upper_hull(&points) {
                        rows.push(ResultRow {
                            trial,
                            snr_db: db,
                            scheme: scheme.to_string(),
                            rates: [r0, r1, 0.0],
                            case: "hull".into(),
                            kkt_residual: None,
                            leakage: None,
                        });
                    }
                    Ok(rows)
                }
                Scheme::VdmEqual => {
                    let t = equal_power_rates(&th, &tg, &prec, p)?;
                    let s1 = scaled_identity(l, p);
                    let leak = leakage_rate(&tg, v1, &s1)?;
                    Ok(vec![ResultRow {
                        trial,
                        snr_db: db,
                        scheme: scheme.to_string(),
                        rates: [t.rates[0], t.rates[1], 0.0],
                        case: "equal".into(),
                        kkt_residual: None,
                        leakage: Some(leak),
                    }])
                }
                other => Err(Error::Config(format!(
                    "scheme {other} not valid for rate-region"
                ))),
            });
        }
    }
    Ok(out)
}

fn kuser_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    let g = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 0));
    let users: Vec<ChannelVector> = (0..cfg.k)
        .map(|i| sample_channel(cfg.l, trial_stream(cfg.seed, trial, 1 + i as u64)))
        .collect();
    let inst = MultiuserInstance::new(g, users, cfg.n)?;
    let counts = cfg.stream_counts()?;
    let (prec, _) = kuser_precoder(&inst, &counts)?;

    let mut out = TrialOutput::default();
    for &db in &cfg.snr_grid_db {
        out.record(trial, db, "vdm-equal", || {
            let p = db_to_linear(db);
            let tuple = kuser_equal_power_rates(&inst, &prec, p)?;
            let leak = kuser_leakage(&inst, &prec, p)?;
            let mut rates = [0.0; 3];
            for (i, r) in tuple.rates.iter().take(3).enumerate() {
                rates[i] = *r;
            }
            Ok(vec![ResultRow {
                trial,
                snr_db: db,
                scheme: Scheme::VdmEqual.to_string(),
                rates,
                case: String::new(),
                kkt_residual: None,
                leakage: Some(leak),
            }])
        });
    }
    Ok(out)
}

fn two_user_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    let h1 = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 1));
    let h2 = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 2));
    let counts = cfg.stream_counts()?;
    let (prec, _) = two_user_precoder(&h1, &h2, cfg.n, counts[0], counts[1])?;

    let mut out = TrialOutput::default();
    for &db in &cfg.snr_grid_db {
        out.record(trial, db, "vdm-equal", || {
            let p = db_to_linear(db);
            let tuple = two_user_rates(&h1, &h2, &prec, p)?;
            let leak = two_user_leakage(&h1, &h2, &prec, p)?;
            Ok(vec![ResultRow {
                trial,
                snr_db: db,
                scheme: Scheme::VdmEqual.to_string(),
                rates: [tuple.rates[0], tuple.rates[1], tuple.rates[2]],
                case: String::new(),
                kkt_residual: None,
                leakage: Some(leak),
            }])
        });
    }
    Ok(out)
}

fn two_user_region_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    if cfg.n != 1 {
        return Err(Error::Config(
            "two-user-region is a single-observation (N = 1) sweep".into(),
        ));
    }
    let h1 = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 1));
    let h2 = sample_channel(cfg.l, trial_stream(cfg.seed, trial, 2));
    let dim = (cfg.l + 1) as f64;

    // leakage of each user's best column through the other user's row
    let cross_leakage = |p1: f64, p2: f64| -> Result<f64> {
        let worst_dir =
            |own: &ChannelVector, other: &ChannelVector, p: f64| -> Result<f64> {
                let t_other = make_toeplitz(other, 1)?;
                let basis = null_space(t_other.matrix())?;
                let own_row: CVec = ndarray::Array1::from(own.taps().to_vec());
                let mut best = 0usize;
                let mut best_gain = -1.0;
                for j in 0..basis.ncols() {
                    let col = basis.column(j).to_owned();
                    let gain: f64 = own_row
                        .iter()
                        .zip(col.iter())
                        .map(|(a, b)| a * b)
                        .sum::<num_complex::Complex64>()
                        .norm_sqr();
                    if gain > best_gain {
                        best_gain = gain;
                        best = j;
                    }
                }
                let col = basis.column(best).to_owned();
                let other_row: CVec = ndarray::Array1::from(other.taps().to_vec());
                let through: f64 = other_row
                    .iter()
                    .zip(col.iter())
                    .map(|(a, b)| a * b)
                    .sum::<num_complex::Complex64>()
                    .norm_sqr();
                Ok((1.0 + p * through).log2() / dim)
            };
        Ok(worst_dir(&h1, &h2, p1)?.max(worst_dir(&h2, &h1, p2)?))
    };

    let mut out = TrialOutput::default();
    for &db in &cfg.snr_grid_db {
        let p = db_to_linear(db);
        let budget = dim * p;
        for scheme in &cfg.schemes {
            out.record(trial, db, &scheme.to_string(), || {
                let mut rows = Vec::new();
                let mut points = Vec::new();
                for &t in &cfg.weight_grid {
                    let (p1, p2) = (t * budget, (1.0 - t) * budget);
                    let (r1, r2, leak) = match scheme {
                        Scheme::VdmEqual => {
                            let (r1, r2) =
                                baselines::vandermonde_two_user_miso_rates(&h1, &h2, p1, p2)?;
                            (r1, r2, Some(cross_leakage(p1, p2)?))
                        }
                        Scheme::Zf => {
                            let (r1, r2) = baselines::zf_two_user_rates(&h1, &h2, p1, p2)?;
                            (r1, r2, None)
                        }
                        other => {
                            return Err(Error::Config(format!(
                                "scheme {other} not valid for two-user-region"
                            )))
                        }
                    };
                    points.push((r1, r2));
                    rows.push(ResultRow {
                        trial,
                        snr_db: db,
                        scheme: scheme.to_string(),
                        rates: [0.0, r1, r2],
                        case: format!("t={t}"),
                        kkt_residual: None,
                        leakage: leak,
                    });
                }
                for (r1, r2) in upper_hull(&points) {
                    rows.push(ResultRow {
                        trial,
                        snr_db: db,
                        scheme: scheme.to_string(),
                        rates: [0.0, r1, r2],
                        case: "hull".into(),
                        kkt_residual: None,
                        leakage: None,
                    });
                }
                Ok(rows)
            });
        }
    }
    Ok(out)
}

/// Runs the experiment: one independent channel draw per trial, all schemes
/// on identical draws, deterministic row order regardless of `workers`.
/// Fails with a property violation if any leakage diagnostic exceeds
/// [`LEAKAGE_BOUND`] or any rate is non-finite.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ResultTable> {
    cfg.validate()?;
    let trial_results: Vec<TrialOutput> = match workers {
        Some(w) if w > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            pool.install(|| {
                use rayon::prelude::*;
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| run_trial(cfg, t))
                    .collect()
            })
        }
        _ => (0..cfg.trials).map(|t| run_trial(cfg, t)).collect(),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for mut r in trial_results {
        rows.append(&mut r.rows);
        failures.append(&mut r.failures);
    }
    for r in &rows {
        if r.rates.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Numerical(format!(
                "non-finite or negative rate in row {r:?}"
            )));
        }
        if let Some(leak) = r.leakage {
            if leak > LEAKAGE_BOUND {
                return Err(Error::PropertyViolation(format!(
                    "leakage {leak:e} exceeds {LEAKAGE_BOUND:e} at trial {}, snr {}, scheme {}",
                    r.trial, r.snr_db, r.scheme
                )));
            }
        }
    }
    Ok(ResultTable { rows, failures })
}

/// Region-sweep entry point: validates that the config describes a region
/// experiment, then runs it.
pub fn sweep_region(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ResultTable> {
    match cfg.kind {
        ExperimentKind::RateRegion | ExperimentKind::TwoUserRegion => {
            run_experiment(cfg, workers)
        }
        _ => Err(Error::Config(
            "sweep_region expects a rate-region or two-user-region config".into(),
        )),
    }
}

/// Rows of the integer d.o.f. region enumerations as CSV
/// (`region,n,l,k,l0,l1,l2,l3`).
pub fn dof_scan_csv(n: usize, l: usize, k: usize) -> Result<String> {
    use crate::multiuser::{kuser_dof_region, two_user_dof_region};
    let mut out = String::from("region,n,l,k,l0,l1,l2,l3\n");
    let mut push = |region: &str, k: usize, t: &crate::multiuser::DofTuple| {
        let mut cols = [String::new(), String::new(), String::new(), String::new()];
        for (i, v) in t.streams.iter().take(4).enumerate() {
            cols[i] = v.to_string();
        }
        out.push_str(&format!(
            "{region},{n},{l},{k},{},{},{},{}\n",
            cols[0], cols[1], cols[2], cols[3]
        ));
    };
    for t in kuser_dof_region(n, l, k)? {
        push("kuser", k, &t);
    }
    if k == 2 {
        for t in two_user_dof_region(n, l)? {
            push("two-user", k, &t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in [
            "wiretap-64x16",
            "wiretap-16x4",
            "miso-64x16",
            "sum-rate-16x4",
            "sum-rate-64x16",
            "bcc-region-1x5",
            "kuser-16x4",
            "two-user-16x4",
            "two-user-region-1x5",
        ] {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
        }
        assert!(ExperimentConfig::preset("no-such-preset").is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig::preset("wiretap-16x4").unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        assert_eq!(back.n, 16);
        assert_eq!(back.schemes, cfg.schemes);
    }

    #[test]
    fn rejects_incompatible_scheme() {
        let mut cfg = ExperimentConfig::preset("wiretap-16x4").unwrap();
        cfg.schemes = vec![Scheme::Zf];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn single_trial_single_snr_gives_one_row() {
        let mut cfg = ExperimentConfig::preset("wiretap-16x4").unwrap();
        cfg.trials = 1;
        cfg.snr_grid_db = vec![20.0];
        cfg.schemes = vec![Scheme::VdmEqual];
        let table = run_experiment(&cfg, None).unwrap();
        assert_eq!(table.rows.len(), 1);
        let again = run_experiment(&cfg, None).unwrap();
        assert_eq!(table.rows, again.rows);
    }

    #[test]
    fn csv_identical_across_worker_counts() {
        let mut cfg = ExperimentConfig::preset("wiretap-16x4").unwrap();
        cfg.trials = 6;
        cfg.snr_grid_db = vec![0.0, 20.0, 40.0];
        let a = run_experiment(&cfg, Some(1)).unwrap().to_csv_string();
        let b = run_experiment(&cfg, Some(4)).unwrap().to_csv_string();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_rates_are_monotone_in_snr() {
        let mut cfg = ExperimentConfig::preset("wiretap-16x4").unwrap();
        cfg.trials = 5;
        let table = run_experiment(&cfg, None).unwrap();
        for scheme in table.schemes() {
            let series = table.mean_rates(&scheme, 1);
            for w in series.windows(2) {
                assert!(
                    w[1].1 >= w[0].1 - 1e-12,
                    "{scheme} mean rate decreased: {w:?}"
                );
            }
        }
    }

    #[test]
    fn dof_estimate_recovers_exact_synthetic_slopes() {
        let mut rows = Vec::new();
        for trial in 0..3usize {
            for &db in &[30.0, 35.0, 40.0, 45.0, 50.0] {
                let x = db_to_linear(db).log2();
                rows.push(ResultRow {
                    trial,
                    snr_db: db,
                    scheme: "synthetic".into(),
                    rates: [0.6 * x + 1.0, 0.2 * x + 0.3, 0.0],
                    case: String::new(),
                    kkt_residual: None,
                    leakage: None,
                });
            }
        }
        let table = ResultTable { rows, failures: vec![] };
        let est = estimate_dof(&table, 30.0, 50.0).unwrap();
        assert_eq!(est.len(), 1);
        assert!((est[0].slopes[0] - 0.6).abs() < 1e-12);
        assert!((est[0].slopes[1] - 0.2).abs() < 1e-12);
        assert!(est[0].residuals[0] < 1e-12);
        let narrow = estimate_dof(&table, 49.0, 50.0);
        assert!(narrow.is_err(), "fewer than 3 points must be rejected");
    }

    #[test]
    fn region_endpoint_matches_waterfilled_secrecy_rate() {
        let mut cfg = ExperimentConfig::preset("bcc-region-1x5").unwrap();
        cfg.trials = 1;
        cfg.weight_grid = vec![0.0, 0.5, 1.0];
        let table = run_experiment(&cfg, None).unwrap();
        // recompute the corner directly
        let g = sample_channel(cfg.l, trial_stream(cfg.seed, 0, 0));
        let h = sample_channel(cfg.l, trial_stream(cfg.seed, 0, 1));
        let (prec, _) = build_precoder(&g, &h, cfg.n, cfg.l, NullSpaceMethod::Svd).unwrap();
        let th = make_toeplitz(&h, cfg.n).unwrap();
        let tg = make_toeplitz(&g, cfg.n).unwrap();
        let eff = effective_channels(&th, &tg, &prec).unwrap();
        let budget = (cfg.n + cfg.l) as f64 * db_to_linear(20.0);
        let (vdm, _) = secrecy_rate_vdm(&eff, budget).unwrap();
        let corner = table
            .rows
            .iter()
            .find(|r| r.case.contains("w=1"))
            .expect("gamma1 = 1 row present");
        assert!(corner.rates[0].abs() < 1e-9);
        assert!((corner.rates[1] - vdm).abs() < 1e-8);
    }

    #[test]
    fn two_user_region_is_statistically_symmetric() {
        let mut cfg = ExperimentConfig::preset("two-user-region-1x5").unwrap();
        cfg.trials = 200;
        cfg.schemes = vec![Scheme::VdmEqual];
        cfg.weight_grid = vec![0.0, 1.0];
        let table = run_experiment(&cfg, Some(4)).unwrap();
        // corner t=1: all power to user 1; corner t=0: all power to user 2.
        // i.i.d. channels make the mean corner rates match across users.
        let mut corner1 = 0.0;
        let mut corner2 = 0.0;
        let mut count = 0usize;
        for r in table.rows.iter().filter(|r| r.case == "t=1") {
            corner1 += r.rates[1];
            count += 1;
        }
        for r in table.rows.iter().filter(|r| r.case == "t=0") {
            corner2 += r.rates[2];
        }
        let (m1, m2) = (corner1 / count as f64, corner2 / count as f64);
        assert!(
            (m1 - m2).abs() < 0.05 * m1.max(m2),
            "corner asymmetry: {m1} vs {m2}"
        );
    }

    #[test]
    fn region_hull_dominates_swept_points() {
        let mut cfg = ExperimentConfig::preset("two-user-region-1x5").unwrap();
        cfg.trials = 2;
        let table = run_experiment(&cfg, None).unwrap();
        for scheme in table.schemes() {
            for trial in 0..cfg.trials {
                let hull: Vec<(f64, f64)> = table
                    .rows
                    .iter()
                    .filter(|r| r.scheme == scheme && r.trial == trial && r.case == "hull")
                    .map(|r| (r.rates[1], r.rates[2]))
                    .collect();
                assert!(!hull.is_empty());
                let max_r1 = hull.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
                let max_r2 = hull.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                for r in table
                    .rows
                    .iter()
                    .filter(|r| r.scheme == scheme && r.trial == trial && r.case != "hull")
                {
                    assert!(r.rates[1] <= max_r1 + 1e-12);
                    assert!(r.rates[2] <= max_r2 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn leakage_bound_violation_fails_the_run() {
        // direct check of the enforcement path with a synthetic table is not
        // possible through run_experiment; validate the bound constant and
        // the row check shape instead
        let row = ResultRow {
            trial: 0,
            snr_db: 0.0,
            scheme: "vdm-equal".into(),
            rates: [0.0, 1.0, 0.0],
            case: String::new(),
            kkt_residual: None,
            leakage: Some(2e-9),
        };
        assert!(row.leakage.unwrap() > LEAKAGE_BOUND);
    }

    #[test]
    fn row_failures_are_recorded_without_aborting() {
        // the two-user-region driver requires N = 1; N = 2 makes every
        // trial fail at setup, and the sweep must still complete
        let mut cfg = ExperimentConfig::preset("two-user-region-1x5").unwrap();
        cfg.n = 2;
        cfg.trials = 3;
        let table = run_experiment(&cfg, None).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.failures.len(), 3);
        assert!(table.failures[0].contains("trial 0"));
    }

    #[test]
    fn dof_scan_emits_both_regions_for_two_users() {
        let csv = dof_scan_csv(4, 2, 2).unwrap();
        assert!(csv.starts_with("region,n,l,k,l0,l1,l2,l3\n"));
        assert!(csv.contains("kuser,4,2,2,"));
        assert!(csv.contains("two-user,4,2,2,"));
    }
}
