//! Command-line front end for the bbsense simulator.
//!
//! Every subcommand reads an optional JSON config (all fields defaulted),
//! applies `BBSENSE_SEED` and `--overrides key=value`, writes plot-ready files
//! under `--out`, and prints `kind key=value ...` records on stdout.

pub mod checks;
pub mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use bbsense::control::{
    bucket_coverage, gap_spectrum, make_control_instance, transversality_stats, BandSpec, Observable,
};
use bbsense::harness::{flatness_scan_instance, run_sweep, SweepConfig};
use bbsense::persist::{write_json, write_scaling_csv, write_table_csv, Metadata, SweepDocument};
use bbsense::seed::derive_seed;
use bbsense::witness::{shot_budget, two_time_test};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checks::Fault;
use crate::config::{FlatnessConfig, InstanceConfig, TrotterConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or config: exit code 2.
    Usage(String),
    /// Failure while running: exit code 1.
    Runtime(bbsense::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bbsense::Error> for CliError {
    fn from(e: bbsense::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

macro_rules! emit {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|source| {
            CliError::Runtime(bbsense::Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })
        })?
    };
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "bbsense", version, about = "Broadband AC-signal detection simulator")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// `key=value` with dotted paths, e.g. `cells.0.m=2`; values are JSON literals or bare strings.
    #[arg(long, num_args = 1..)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stopping-time sweep; writes scaling.csv and scaling.json.
    Sweep(Common),
    /// One control instance; writes instance.json.
    Instance(Common),
    /// Flatness ladder; writes inset.csv.
    Flatness(Common),
    /// Product-formula error scan; writes trotter.csv.
    TrotterCheck(Common),
    /// Two-time slope test on given IQFI estimates.
    SlopeTest(SlopeArgs),
    /// Oracle suite; exit code 1 on any failure.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SlopeArgs {
    /// IQFI estimate at T.
    pub k_t: f64,
    /// IQFI estimate at qT.
    pub k_qt: f64,
    /// Time ratio, > 1.
    pub q: f64,
    #[arg(long, default_value_t = 16)]
    pub n_shots: usize,
    /// Target error probability for the shot budget.
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    /// Test constant C in `2 exp(-C N ln^2 q)`.
    #[arg(long, default_value_t = 1.0)]
    pub c_test: f64,
    /// Print one JSON object instead of the record line.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FaultArg {
    GhzExponent,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Deliberately break one oracle (self-test of the suite).
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

/// Whether every check of the command passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

/// Runs one parsed invocation, printing records to stdout; `env_seed` is the
/// value of `BBSENSE_SEED`.
pub fn run(cli: Cli, env_seed: Option<String>) -> Result<Outcome, CliError> {
    run_with(cli, env_seed, &mut std::io::stdout())
}

pub fn run_with(cli: Cli, env_seed: Option<String>, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(usage)?;
    let seed = env_seed.as_deref();
    pool.install(|| match &cli.command {
        Command::Sweep(c) => cmd_sweep(c, seed, cli.jobs, out),
        Command::Instance(c) => cmd_instance(c, seed, out),
        Command::Flatness(c) => cmd_flatness(c, seed, out),
        Command::TrotterCheck(c) => cmd_trotter(c, seed, out),
        Command::SlopeTest(a) => cmd_slope_test(a, out),
        Command::Validate(a) => cmd_validate(a, out),
    })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        CliError::Runtime(bbsense::Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".to_string())
}

pub fn cmd_sweep(
    c: &Common,
    env_seed: Option<&str>,
    jobs: Option<usize>,
    out: &mut (dyn Write + Send),
) -> Result<Outcome, CliError> {
    let config: SweepConfig = config::load(c.config.as_deref(), &c.overrides, env_seed)?;
    config.validate().map_err(usage)?;
    prepare_out(&c.out)?;
    let sweep = run_sweep(&config, jobs)?;
    let meta = Metadata::for_sweep(&config);
    let csv = c.out.join("scaling.csv");
    let json = c.out.join("scaling.json");
    write_scaling_csv(&csv, &sweep.dataset, &meta)?;
    let doc = SweepDocument {
        metadata: meta,
        config,
        dataset: sweep.dataset,
        results: sweep.results,
    };
    write_json(&json, &doc)?;
    for r in &doc.dataset.rows {
        emit!(
            out,
            "cell id={} m={} x_value={} t_mean={} t_std={} n_valid={} n_samples={}",
            r.cell_id,
            r.m,
            r.x_value,
            opt(r.t_mean),
            opt(r.t_std),
            r.n_valid,
            r.n_samples
        );
    }
    match &doc.dataset.fit {
        Some(f) => {
            let (lo, hi) = f.slope_ci95.map_or((None, None), |(a, b)| (Some(a), Some(b)));
            emit!(
                out,
                "fit slope={} ci95_lo={} ci95_hi={} intercept={} residual={} n_cells={}",
                f.slope,
                opt(lo),
                opt(hi),
                f.intercept,
                f.residual,
                f.n_cells
            );
        }
        None => emit!(out, "fit none"),
    }
    emit!(out, "file path={}", csv.display());
    emit!(out, "file path={}", json.display());
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct InstanceDocument {
    metadata: Metadata,
    config: InstanceConfig,
    d: usize,
    n_qubits: usize,
    instance_seed: u64,
    band: BandSpec<f64>,
    eigvals: Vec<f64>,
    reconstruction_error: f64,
    gaps: bbsense::GapSpectrum,
    coverage: bbsense::CoverageReport,
    transversality: Option<bbsense::control::TransversalityStats>,
}

pub fn cmd_instance(c: &Common, env_seed: Option<&str>, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    let cfg: InstanceConfig = config::load(c.config.as_deref(), &c.overrides, env_seed)?;
    let unit = cfg.units.to_rad_per_s();
    let omega_min = cfg.omega_min * unit;
    let band = BandSpec::from_ratio(omega_min, cfg.r, cfg.b_min_rel * omega_min, cfg.m).map_err(usage)?;
    if cfg.n_eigvecs > 0 && cfg.n_eigvecs < 30 {
        return Err(usage("n_eigvecs: use 0 to skip or at least 30"));
    }
    prepare_out(&c.out)?;
    let inst = make_control_instance(&band, cfg.seed_root)?;
    let gaps = gap_spectrum(&inst);
    let coverage = bucket_coverage(&gaps, &band, gaps.default_weight_floor())?;
    let transversality = if cfg.n_eigvecs > 0 {
        Some(transversality_stats(
            &band,
            derive_seed(cfg.seed_root, &[1]),
            cfg.n_eigvecs,
            Observable::SignalGenerator,
            &[0.5, 1.0, 1.5, 2.0],
        )?)
    } else {
        None
    };
    let doc = InstanceDocument {
        metadata: Metadata::new(cfg.seed_root, cfg.units.label()),
        d: inst.d,
        n_qubits: inst.n,
        instance_seed: inst.seed,
        band,
        eigvals: inst.eigvals.iter().copied().collect(),
        reconstruction_error: inst.reconstruction_error(),
        gaps,
        coverage,
        transversality,
        config: cfg,
    };
    let path = c.out.join("instance.json");
    write_json(&path, &doc)?;
    emit!(
        out,
        "instance d={} seed={} gaps={} covered_fraction={} max_detuning={} reconstruction_error={}",
        doc.d,
        doc.instance_seed,
        doc.gaps.gaps.len(),
        doc.coverage.covered_fraction,
        doc.coverage.max_detuning,
        doc.reconstruction_error
    );
    if let Some(t) = &doc.transversality {
        emit!(
            out,
            "transversality samples={} var={} predicted={} z={}",
            t.n_samples,
            t.sample_var,
            t.predicted_var,
            t.variance_z_score()
        );
    }
    emit!(out, "file path={}", path.display());
    Ok(Outcome::Success)
}

pub const INSET_COLUMNS: [&str; 11] = [
    "delta_omega_over_b",
    "r",
    "d",
    "t_eval",
    "min_ratio",
    "epsilon_t",
    "mean_s",
    "kfd",
    "certified",
    "degenerate",
    "transfer_bounds_hold",
];

/// One `(label, report)` per ladder rung.
pub fn flatness_ladder(cfg: &FlatnessConfig) -> Result<Vec<(f64, usize, f64, bbsense::FlatnessReport)>, CliError> {
    if cfg.ladder.is_empty() {
        return Err(usage("ladder: at least one value"));
    }
    let unit = cfg.units.to_rad_per_s();
    let omega_min = cfg.omega_min * unit;
    let b_min = cfg.b_min_rel * omega_min;
    let mut out = Vec::new();
    for (i, &ratio) in cfg.ladder.iter().enumerate() {
        let r = ratio / cfg.m as f64;
        let band = BandSpec::from_ratio(omega_min, r, b_min, cfg.m).map_err(|e| usage(format!("ladder[{i}]: {e}")))?;
        let inst = make_control_instance(&band, derive_seed(cfg.seed_root, &[ratio.to_bits()]))?;
        let t_eval = cfg.t_eval_factor * (band.n_buckets() as f64).sqrt() / (cfg.m as f64 * b_min);
        let (_, report) = flatness_scan_instance(
            &inst,
            &band,
            cfg.signal_scale * b_min,
            t_eval,
            cfg.n_omega,
            cfg.max_drive_ratio,
        )
        .map_err(usage)?;
        out.push((ratio, inst.d, t_eval, report));
    }
    Ok(out)
}

pub fn cmd_flatness(c: &Common, env_seed: Option<&str>, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    let cfg: FlatnessConfig = config::load(c.config.as_deref(), &c.overrides, env_seed)?;
    prepare_out(&c.out)?;
    let ladder = flatness_ladder(&cfg)?;
    let rows: Vec<Vec<String>> = ladder
        .iter()
        .map(|(ratio, d, t, rep)| {
            vec![
                ratio.to_string(),
                (ratio / cfg.m as f64).to_string(),
                d.to_string(),
                t.to_string(),
                rep.min_ratio.to_string(),
                rep.epsilon_t.to_string(),
                rep.mean_s.to_string(),
                rep.kfd.map(|k| k.to_string()).unwrap_or_default(),
                rep.certified.to_string(),
                rep.degenerate.to_string(),
                rep.transfer_bounds_hold.map(|b| b.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    let meta = Metadata::new(cfg.seed_root, cfg.units.label())
        .with("m", cfg.m)
        .with("b_min_rel", cfg.b_min_rel)
        .with("omega_min", cfg.omega_min)
        .with("n_omega", cfg.n_omega)
        .with("t_eval_factor", cfg.t_eval_factor)
        .with("signal_scale", cfg.signal_scale)
        .with("max_drive_ratio", cfg.max_drive_ratio)
        .with("b_eff", bbsense::persist::B_EFF_CONVENTION);
    let path = c.out.join("inset.csv");
    write_table_csv(&path, &INSET_COLUMNS, &rows, &meta)?;
    for (ratio, d, _, rep) in &ladder {
        emit!(
            out,
            "inset delta_omega_over_b={ratio} d={d} min_ratio={} epsilon_t={} certified={} degenerate={}",
            rep.min_ratio,
            rep.epsilon_t,
            rep.certified,
            rep.degenerate
        );
    }
    emit!(out, "file path={}", path.display());
    Ok(Outcome::Success)
}

pub const TROTTER_COLUMNS: [&str; 4] = ["dt", "error", "error_double_b", "ratio"];

pub fn cmd_trotter(c: &Common, env_seed: Option<&str>, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    let cfg: TrotterConfig = config::load(c.config.as_deref(), &c.overrides, env_seed)?;
    if cfg.dts.len() < 2 {
        return Err(usage("dts: at least two steps"));
    }
    prepare_out(&c.out)?;
    let rep = checks::trotter_report(&cfg).map_err(|e| match e {
        bbsense::Error::Io { .. } => CliError::Runtime(e),
        other => usage(other),
    })?;
    let rows: Vec<Vec<String>> = rep
        .scan
        .points
        .iter()
        .zip(&rep.doubled.points)
        .zip(&rep.ratios)
        .map(|(((dt, e), (_, e2)), r)| vec![dt.to_string(), e.to_string(), e2.to_string(), r.to_string()])
        .collect();
    let meta = Metadata::new(cfg.seed_root, "rad_per_s")
        .with("r", cfg.r)
        .with("omega_min", cfg.omega_min)
        .with("b_rel", cfg.b_rel)
        .with("carrier_fraction", cfg.carrier_fraction)
        .with("t_final", cfg.t_final)
        .with("reference_dt", rep.scan.reference_dt)
        .with("commuting", cfg.commuting)
        .with("slope", opt(rep.scan.slope))
        .with("slope_double_b", opt(rep.doubled.slope))
        .with("degenerate", rep.scan.degenerate);
    let path = c.out.join("trotter.csv");
    write_table_csv(&path, &TROTTER_COLUMNS, &rows, &meta)?;
    emit!(
        out,
        "trotter slope={} slope_double_b={} degenerate={}",
        opt(rep.scan.slope),
        opt(rep.doubled.slope),
        rep.scan.degenerate
    );
    emit!(out, "file path={}", path.display());
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SlopeReport {
    alpha_hat: f64,
    decision: bbsense::witness::Hypothesis,
    q: f64,
    n_shots: usize,
    error_bound: f64,
    delta: f64,
    shot_budget: usize,
}

pub fn cmd_slope_test(a: &SlopeArgs, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    let res = two_time_test(a.k_t, a.k_qt, a.q, a.n_shots, a.c_test).map_err(usage)?;
    let budget = shot_budget(a.q, a.delta, a.c_test).map_err(usage)?;
    let rep = SlopeReport {
        alpha_hat: res.alpha_hat,
        decision: res.decision,
        q: res.q,
        n_shots: res.n_shots,
        error_bound: res.error_bound,
        delta: a.delta,
        shot_budget: budget,
    };
    if a.json {
        emit!(out, "{}", serde_json::to_string(&rep).map_err(usage)?);
    } else {
        emit!(
            out,
            "slope_test alpha_hat={} decision={:?} q={} n_shots={} error_bound={} delta={} shot_budget={}",
            rep.alpha_hat,
            rep.decision,
            rep.q,
            rep.n_shots,
            rep.error_bound,
            rep.delta,
            rep.shot_budget
        );
    }
    Ok(Outcome::Success)
}

pub fn cmd_validate(a: &ValidateArgs, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    let fault = match a.inject_fault {
        Some(FaultArg::GhzExponent) => Fault::GhzExponent,
        None => Fault::None,
    };
    let suite = checks::validation_suite(fault)?;
    for c in &suite {
        emit!(out, "{c}");
    }
    let failed = suite.iter().filter(|c| !c.pass).count();
    emit!(out, "validate pass={} fail={failed}", suite.len() - failed);
    Ok(if failed == 0 {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}
