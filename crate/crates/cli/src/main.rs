//! `secrecy-sim`: Monte Carlo SNR sweeps and region scans for null-space
//! secrecy precoding over frequency-selective channels. Emits CSV.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secrecy_precoding::harness::{
    dof_scan_csv, estimate_dof, run_experiment, ExperimentConfig, ExperimentKind, Scheme,
};
use secrecy_precoding::Error;

#[derive(Parser)]
#[command(name = "secrecy-sim", version, about)]
struct Cli {
    /// Worker threads for trial-level parallelism (default: rayon's choice).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Named preset to start from.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON config file to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Block length N.
    #[arg(long)]
    n: Option<usize>,
    /// Delay spread L.
    #[arg(long)]
    l: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// SNR grid in dB: either `lo:step:hi` or a comma list.
    #[arg(long)]
    snr: Option<String>,
    /// Comma-separated scheme list.
    #[arg(long)]
    schemes: Option<String>,
    /// Comma-separated confidential stream counts.
    #[arg(long)]
    streams: Option<String>,
    /// Comma-separated weight / power-split grid for region sweeps.
    #[arg(long)]
    weights: Option<String>,
    /// Print per-scheme d.o.f. slope estimates over `LO:HI` dB to stderr.
    #[arg(long, value_name = "LO:HI")]
    dof_tail: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Wiretap secrecy rate R1 vs SNR (waterfilled / equal power).
    SecrecyRate(RunArgs),
    /// Weighted (R0, R1) boundary sweep with convex-hull rows.
    RateRegion(RunArgs),
    /// K+1-user equal-power rates vs SNR.
    Kuser {
        #[command(flatten)]
        args: RunArgs,
        /// Number of legitimate users.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Two-user (two confidential messages) rates vs SNR or region sweep.
    TwoUser {
        #[command(flatten)]
        args: RunArgs,
        /// Sweep the (R1, R2) region over power splits instead of SNR slopes.
        #[arg(long)]
        region: bool,
    },
    /// Single-observation MISO wiretap baseline comparison.
    Baseline(RunArgs),
    /// Enumerate the integer s.d.o.f. regions.
    DofScan {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    let bad = |t: &str| Error::Config(format!("cannot parse grid `{t}`"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(text));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad(text))?;
        let step: f64 = parts[1].parse().map_err(|_| bad(text))?;
        let hi: f64 = parts[2].parse().map_err(|_| bad(text))?;
        if step <= 0.0 || hi < lo {
            return Err(bad(text));
        }
        let mut grid = Vec::new();
        let mut x = lo;
        while x <= hi + 1e-9 {
            grid.push(x);
            x += step;
        }
        Ok(grid)
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad(text)))
            .collect()
    }
}

fn parse_schemes(text: &str) -> Result<Vec<Scheme>, Error> {
    text.split(',')
        .map(|t| match t.trim() {
            "vdm-waterfill" => Ok(Scheme::VdmWaterfill),
            "vdm-equal" => Ok(Scheme::VdmEqual),
            "miso-optimal" => Ok(Scheme::MisoOptimal),
            "zf" => Ok(Scheme::Zf),
            "fixed-cov-geig" => Ok(Scheme::FixedCovGeig),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        })
        .collect()
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("cannot parse `{text}` as integers")))
        })
        .collect()
}

fn build_config(
    args: &RunArgs,
    default_preset: &str,
    kind: ExperimentKind,
) -> Result<ExperimentConfig, Error> {
    let mut cfg = if let Some(path) = &args.config {
        ExperimentConfig::from_json_file(path)?
    } else {
        ExperimentConfig::preset(args.preset.as_deref().unwrap_or(default_preset))?
    };
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "config kind {:?} does not match the subcommand",
            cfg.kind
        )));
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(l) = args.l {
        cfg.l = l;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(snr) = &args.snr {
        cfg.snr_grid_db = parse_grid(snr)?;
    }
    if let Some(schemes) = &args.schemes {
        cfg.schemes = parse_schemes(schemes)?;
    }
    if let Some(streams) = &args.streams {
        cfg.streams = Some(parse_usize_list(streams)?);
    }
    if let Some(weights) = &args.weights {
        cfg.weight_grid = parse_grid(weights)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, workers: Option<usize>, args: &RunArgs) -> Result<(), Error> {
    let table = run_experiment(cfg, workers)?;
    for failure in &table.failures {
        eprintln!("row failure: {failure}");
    }
    match &cfg.out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            table.write_csv(std::io::BufWriter::new(file))?;
            eprintln!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            table.write_csv(stdout.lock())?;
        }
    }
    if let Some(tail) = &args.dof_tail {
        let parts: Vec<&str> = tail.split(':').collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!("bad --dof-tail `{tail}`, expected LO:HI")));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad --dof-tail `{tail}`")))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad --dof-tail `{tail}`")))?;
        for est in estimate_dof(&table, lo, hi)? {
            eprintln!(
                "dof {}: R0 slope {:.4} (rms {:.2e}), R1 slope {:.4} (rms {:.2e}), R2 slope {:.4} (rms {:.2e})",
                est.scheme,
                est.slopes[0],
                est.residuals[0],
                est.slopes[1],
                est.residuals[1],
                est.slopes[2],
                est.residuals[2],
            );
        }
    }
    if !table.failures.is_empty() {
        return Err(Error::Numerical(format!(
            "{} of the sweep's rows failed to evaluate (sweep completed)",
            table.failures.len()
        )));
    }
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    let workers = cli.workers;
    match &cli.command {
        Command::SecrecyRate(args) => {
            let cfg = build_config(args, "wiretap-64x16", ExperimentKind::SecrecyRate)?;
            emit(&cfg, workers, args)
        }
        Command::RateRegion(args) => {
            let cfg = build_config(args, "bcc-region-1x5", ExperimentKind::RateRegion)?;
            emit(&cfg, workers, args)
        }
        Command::Kuser { args, k } => {
            let mut cfg = build_config(args, "kuser-16x4", ExperimentKind::KUser)?;
            if let Some(k) = k {
                cfg.k = *k;
                cfg.validate()?;
            }
            emit(&cfg, workers, args)
        }
        Command::TwoUser { args, region } => {
            let (preset, kind) = if *region {
                ("two-user-region-1x5", ExperimentKind::TwoUserRegion)
            } else {
                ("two-user-16x4", ExperimentKind::TwoUser)
            };
            let cfg = build_config(args, preset, kind)?;
            emit(&cfg, workers, args)
        }
        Command::Baseline(args) => {
            let cfg = build_config(args, "miso-64x16", ExperimentKind::MisoBaseline)?;
            emit(&cfg, workers, args)
        }
        Command::DofScan { n, l, k, out } => {
            let csv = dof_scan_csv(*n, *l, *k)?;
            match out {
                Some(path) => {
                    let mut file = std::fs::File::create(path)?;
                    file.write_all(csv.as_bytes())?;
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // keep BLAS single-threaded: trial-level parallelism comes from rayon
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    env_logger::init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Io(_) | Error::InvalidArgument(_) => 1,
                Error::PropertyViolation(_) => 2,
                Error::Numerical(_) | Error::DimensionMismatch(_) | Error::DegenerateChannel(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}
