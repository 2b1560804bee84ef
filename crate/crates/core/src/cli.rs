//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 monitor hard
//! failure, 4 internal error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use crate::error::Error;
use crate::functionals::{campanato_seminorm, holder_seminorm, lp_norm, v2_norm, FieldHistory, LpNorm};
use crate::io::config::{load_and_prepare, load_config, PreparedRun};
use crate::io::rundir::{load_history, RunDirectory, RunMetadata, RunReport, RunStatus};
use crate::model::Species;
use crate::stepper::{RunError, Simulation};
use crate::verification::mms::{case_by_name, mms_run};
use crate::verification::weak::{test_bank, weak_residual, TestFunction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_MONITOR: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "upasim", version, about = "Cross-diffusion cancer invasion simulator with a priori bound monitors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a config and write a run directory.
    Run {
        config: PathBuf,
        /// Run directory (overrides output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the hypotheses and print certificates and margins.
    Validate { config: PathBuf },
    /// Manufactured-solution convergence study.
    Mms {
        /// constant, diffusion or coupled
        case: String,
        /// Cells per axis, comma separated, e.g. 32,64,128
        ladder: String,
        #[arg(long, default_value_t = 0.5)]
        t_end: f64,
        /// dt = dt_factor * h^2
        #[arg(long, default_value_t = 1.0)]
        dt_factor: f64,
    },
    /// Function-space diagnostics of a stored history.
    Norms {
        history: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Cylinder radii, comma separated (default 2h,4h,8h).
        #[arg(long)]
        radii: Option<String>,
        /// Where to write the per-time CSV (default <history>/norms.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Largest number of space-time points fed to the all-pairs Hölder search;
        /// the history is thinned in time to stay below it.
        #[arg(long, default_value_t = 4096)]
        holder_max_points: usize,
    },
    /// Weak-form residuals of a stored history against the test bank.
    WeakResidual { history: PathBuf, config: PathBuf },
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out.as_deref()),
        Command::Validate { config } => cmd_validate(&config),
        Command::Mms { case, ladder, t_end, dt_factor } => cmd_mms(&case, &ladder, t_end, dt_factor),
        Command::Norms { history, mu, alpha, radii, out, holder_max_points } => {
            cmd_norms(&history, mu, alpha, radii.as_deref(), out.as_deref(), holder_max_points)
        }
        Command::WeakResidual { history, config } => cmd_weak(&history, &config),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure { code, message }) => {
            error!("{message}");
            eprintln!("error: {message}");
            code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Hypothesis(_) | Error::Initialization { .. } | Error::DiffusionOutOfBounds { .. } => EXIT_VALIDATION,
        _ => EXIT_INTERNAL,
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, Failure> {
    text.split(',').map(|s| s.trim().parse::<T>().map_err(|_| usage(format!("cannot parse {what} entry `{s}`")))).collect()
}

fn prepare_from(config: &Path) -> Result<PreparedRun, Failure> {
    load_and_prepare(config).map_err(|e| match e {
        Error::Io { path, source } => Failure { code: EXIT_VALIDATION, message: format!("cannot read {}: {source}", path.display()) },
        other => other.into(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "unbounded".to_string(), |v| v.to_string())
}

fn cmd_validate(config: &Path) -> Result<(), Failure> {
    let p = prepare_from(config)?;
    let c = &p.certificates;
    println!("M_A = {}", fmt_opt(c.m_a));
    println!("M_V = {}", fmt_opt(c.m_v));
    println!("h4_margin = {}", c.h4_margin);
    println!("chi_margin = {}", c.chi_margin);
    println!("regime = {:?}", c.regime);
    for w in &c.warnings {
        warn!("{w}");
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_run(config: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let p = prepare_from(config)?;
    for w in &p.certificates.warnings {
        warn!("{w}");
    }
    let root = match (out, &p.config.output.directory) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) if d.is_absolute() => d.clone(),
        (None, Some(d)) => config.parent().unwrap_or(Path::new(".")).join(d),
        (None, None) => return Err(usage("no run directory: pass --out or set output.directory")),
    };
    let mut dir = RunDirectory::create(&root, p.config.output.snapshot_every, p.window.steps())?;
    let sim = Simulation::new(p.params, p.scheme, p.certificates.clone(), p.config.monitors);
    let mut meta = RunMetadata {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: p.config.clone(),
        certificates: p.certificates.clone(),
        positivity_enforced: p.scheme.clip_negative,
        status: RunStatus::Completed,
        steps_completed: 0,
        final_time: 0.0,
        message: None,
    };
    let outcome = sim.run(p.initial.clone(), &p.window, &mut [&mut dir]);
    dir.write_steps()?;
    match outcome {
        Ok(summary) => {
            meta.steps_completed = summary.reports.len();
            meta.final_time = summary.final_state.time();
            dir.write_series(&summary.series)?;
            dir.write_report(&RunReport { warnings: summary.warnings, hard_violations: vec![], l1_checks: summary.l1_checks })?;
            dir.write_metadata(&meta)?;
            info!("run completed: {} steps, t = {}", meta.steps_completed, meta.final_time);
            println!("{}", root.display());
            Ok(())
        }
        Err(RunError::MonitorHalt { step, violations, dump, series }) => {
            meta.status = RunStatus::MonitorHalt;
            meta.steps_completed = step.saturating_sub(1);
            meta.final_time = series.last().map_or(0.0, |r| r.t);
            let mut msg = format!("monitor hard failure at step {step}:");
            for v in &violations {
                let _ = write!(msg, "\n  {v}");
            }
            if let Some(d) = dump {
                let _ = write!(msg, "\n  offending state written to {}", d.display());
            }
            meta.message = Some(msg.clone());
            dir.write_series(&series)?;
            dir.write_report(&RunReport { warnings: vec![], hard_violations: violations, l1_checks: vec![] })?;
            dir.write_metadata(&meta)?;
            Err(Failure { code: EXIT_MONITOR, message: msg })
        }
        Err(RunError::Step { step, source, dump }) => {
            meta.status = RunStatus::Failed;
            meta.steps_completed = step.saturating_sub(1);
            let mut msg = format!("step {step} failed: {source}");
            if let Some(d) = dump {
                let _ = write!(msg, " (last good state written to {})", d.display());
            }
            meta.message = Some(msg.clone());
            dir.write_metadata(&meta)?;
            Err(Failure { code: exit_code(&source), message: msg })
        }
        Err(RunError::Sink(e)) => Err(e.into()),
    }
}

fn cmd_mms(case: &str, ladder: &str, t_end: f64, dt_factor: f64) -> Result<(), Failure> {
    let c = case_by_name(case).ok_or_else(|| usage(format!("unknown case `{case}` (constant, diffusion, coupled)")))?;
    let ladder: Vec<usize> = parse_list(ladder, "ladder")?;
    if !(t_end > 0.0 && dt_factor > 0.0) {
        return Err(usage("--t-end and --dt-factor must be positive"));
    }
    let table = mms_run(&c, &ladder, t_end, dt_factor)?;
    print!("{}", table.to_csv());
    Ok(())
}

fn cmd_norms(dir: &Path, mu: f64, alpha: f64, radii: Option<&str>, out: Option<&Path>, holder_max_points: usize) -> Result<(), Failure> {
    let history = load_history(dir)?;
    let grid = *history.grid();
    let radii: Vec<f64> = match radii {
        Some(r) => parse_list(r, "radii")?,
        None => [2.0, 4.0, 8.0].iter().map(|k| k * grid.min_spacing()).collect(),
    };
    let species: Vec<Species> = history.species().collect();

    let mut csv = String::from("t");
    for s in &species {
        let _ = write!(csv, ",L1_{s},L2_{s},L3_{s},Linf_{s}");
    }
    csv.push('\n');
    for (n, t) in history.times().iter().enumerate() {
        let _ = write!(csv, "{t}");
        for &s in &species {
            let f = history.field(s, n)?;
            let _ = write!(csv, ",{},{},{},{}", lp_norm(&f, LpNorm::L1), lp_norm(&f, LpNorm::L2), lp_norm(&f, LpNorm::L3), lp_norm(&f, LpNorm::Inf));
        }
        csv.push('\n');
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("norms.csv"));
    crate::io::snapshot::write_atomic(&out, csv.as_bytes())?;

    let stride = holder_stride(&history, holder_max_points);
    let thinned = history.thinned(stride);
    println!("species,v2,campanato_mu,campanato,holder_alpha,holder,holder_time_stride");
    for &s in &species {
        let v2 = v2_norm(&history, s)?;
        let camp = campanato_seminorm(&history, s, mu, &radii)?;
        let hold = holder_seminorm(&thinned, s, alpha)?;
        println!("{s},{v2},{mu},{camp},{alpha},{hold},{stride}");
    }
    Ok(())
}

fn holder_stride(history: &FieldHistory, max_points: usize) -> usize {
    let cells = history.grid().total_cells().max(1);
    let keep = (max_points / cells).max(2);
    history.len().div_ceil(keep).max(1)
}

fn cmd_weak(dir: &Path, config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let params = cfg.model.build()?;
    let history = load_history(dir)?;
    if history.species().count() != 6 {
        return Err(Error::Diagnostic("weak residual needs all six species in the history".into()).into());
    }
    if history.times()[0] != 0.0 {
        return Err(Error::Diagnostic("history must start at t = 0".into()).into());
    }
    let t_end = *history.times().last().expect("non-empty");
    let bank: Vec<TestFunction> = test_bank(history.grid().dim(), t_end);
    let res = weak_residual(&history, &params, cfg.scheme.taxis, &bank)?;
    println!("test,modes,time_factor,C,N,V,A,I,P");
    for (j, (phi, row)) in bank.iter().zip(&res.rows).enumerate() {
        let term = &phi.terms[0];
        let modes: Vec<String> = term.modes[..history.grid().dim()].iter().map(|m| m.to_string()).collect();
        let cols: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        println!("{j},{},{:?},{}", modes.join(" "), term.time, cols.join(","));
    }
    let max = res.max_per_equation();
    eprintln!("max |residual| per equation (C N V A I P): {max:?}");
    Ok(())
}
