//! Command-line front end: `simulate`, `converge` and `check-dt`.

pub mod config;
pub mod output;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{load_config, parse_config, ConfigError, OutputConfig, RunConfig, StudyPlan};
pub use output::{
    format_f64, read_timeseries_csv, write_timeseries_csv, write_vtk, write_vtk_snapshot, TimeseriesWriter,
};

use crate::model::{Scheme, StabilityReport};
use crate::schemes::{run_with, RunOptions, SchemeError};
use crate::verify::{convergence_study, Axis, ErrorAccumulator};

/// Exit code for unreadable or invalid input.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures during a run.
pub const EXIT_RUN: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "rdcompete",
    version,
    about = "Finite-element solver for N-species competition with harvesting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configuration and write the average-density series and snapshots.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Snapshot times, comma separated (overrides `[output] snapshots`).
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
        /// Constant of the stability estimate (overrides `[output] C`).
        #[arg(long = "constant-C")]
        constant_c: Option<f64>,
    },
    /// Run a manufactured-solution convergence study.
    Converge {
        config: PathBuf,
        #[arg(long)]
        axis: Axis,
        /// Levels as `4,8,16`, `1/4,1/8` (spatial) or `T/4,T/8` (temporal).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<String>>,
        /// Scheme to study (defaults to `[time] scheme`).
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Directory for the CSV table (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the stability report only.
    CheckDt {
        config: PathBuf,
        #[arg(long = "constant-C")]
        constant_c: Option<f64>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn run(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUN,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            snapshots,
            constant_c,
        } => simulate(&config, out, snapshots, constant_c),
        Command::Converge {
            config,
            axis,
            levels,
            scheme,
            out,
        } => converge(&config, axis, levels, scheme, out),
        Command::CheckDt { config, constant_c } => check_dt(&config, constant_c),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    load_config(path).map_err(Failure::config)
}

fn checked_c(c: Option<f64>, default: f64) -> Result<f64, Failure> {
    match c {
        Some(v) if !v.is_finite() || v < 0.0 => Err(Failure::config("--constant-C must be a non-negative number")),
        Some(v) => Ok(v),
        None => Ok(default),
    }
}

fn report(cfg: &RunConfig, c: f64) -> Result<StabilityReport, Failure> {
    let report = StabilityReport::new(&cfg.spec, c).map_err(Failure::run)?;
    print!("{report}");
    for i in report.violations() {
        eprintln!(
            "warning: dt = {} exceeds the estimated bound {} for species {}",
            cfg.spec.dt,
            report.species[i].dt_max,
            i + 1
        );
    }
    Ok(report)
}

fn check_dt(path: &Path, constant_c: Option<f64>) -> Result<(), Failure> {
    let cfg = load(path)?;
    let c = checked_c(constant_c, cfg.output.constant_c)?;
    report(&cfg, c).map(|_| ())
}

fn simulate(
    path: &Path,
    out: Option<PathBuf>,
    snapshots: Option<Vec<f64>>,
    constant_c: Option<f64>,
) -> Result<(), Failure> {
    let cfg = load(path)?;
    let c = checked_c(constant_c, cfg.output.constant_c)?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    let snapshot_times = snapshots.unwrap_or_else(|| cfg.output.snapshots.clone());
    report(&cfg, c)?;

    std::fs::create_dir_all(&dir).map_err(|e| Failure::run(format!("cannot create {}: {e}", dir.display())))?;
    let csv_path = dir.join("timeseries.csv");
    let mut csv = TimeseriesWriter::create(&csv_path, cfg.spec.num_species())
        .map_err(|e| Failure::run(format!("cannot write {}: {e}", csv_path.display())))?;

    let spec = &cfg.spec;
    let mut acc = cfg
        .mms
        .as_ref()
        .filter(|_| cfg.output.verification)
        .map(|m| (ErrorAccumulator::new(m.num_species(), spec.step_size()), m));
    let opts = RunOptions {
        snapshot_times,
        stability_constant: None,
        ..RunOptions::default()
    };
    let result = run_with(spec, &opts, |state, averages| {
        csv.row(state.t, averages)
            .map_err(|e| SchemeError::Observer(format!("writing {}: {e}", csv_path.display())))?;
        if let Some((acc, case)) = acc.as_mut() {
            acc.add_level(state.n, &state.current, case.exact_solutions(), state.t)?;
        }
        Ok(())
    });
    csv.finish()
        .map_err(|e| Failure::run(format!("writing {}: {e}", csv_path.display())))?;
    let traj = match result {
        Ok(t) => t,
        Err(f) => {
            return Err(Failure::run(format!(
                "{} (series up to t = {} kept in {})",
                f.error,
                f.partial.times.last().copied().unwrap_or(0.0),
                csv_path.display()
            )))
        }
    };

    for snap in &traj.snapshots {
        let p = dir.join(format!("snapshot_{:06}.vtk", snap.step));
        write_vtk_snapshot(&p, &snap.fields, snap.time)
            .map_err(|e| Failure::run(format!("writing {}: {e}", p.display())))?;
        println!("snapshot t = {} -> {}", format_f64(snap.time), p.display());
    }
    if let Some(last) = traj.averages.last() {
        let vals: Vec<String> = last.iter().map(|v| format!("{v:.6}")).collect();
        println!(
            "final t = {}: ubar = [{}]",
            format_f64(*traj.times.last().expect("nonempty")),
            vals.join(", ")
        );
    }
    println!("series -> {}", csv_path.display());
    if let Some((acc, _)) = acc {
        for (i, e) in acc.finish().iter().enumerate() {
            println!("||e_{}||_(2,1) = {e:.4e}", i + 1);
        }
    }
    Ok(())
}

/// Accepts `8`, `1/8` or `T/8`.
fn parse_level(s: &str) -> Result<usize, String> {
    let t = s.trim();
    let t = t.strip_prefix("1/").or_else(|| t.strip_prefix("T/")).unwrap_or(t);
    t.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| format!("bad level {s:?} (expected e.g. 8, 1/8 or T/8)"))
}

fn converge(
    path: &Path,
    axis: Axis,
    levels: Option<Vec<String>>,
    scheme: Option<Scheme>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let cfg = load(path)?;
    let case = cfg
        .mms
        .as_ref()
        .ok_or_else(|| Failure::config("converge needs exact solutions in every [species.N] table"))?;
    let scheme = scheme.unwrap_or(cfg.spec.scheme);
    let plan = cfg.study(axis, scheme).ok_or_else(|| {
        Failure::config(format!(
            "no [convergence.{}] table in {}",
            axis_name(axis),
            path.display()
        ))
    })?;
    let levels = match levels {
        Some(l) => l
            .iter()
            .map(|s| parse_level(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(Failure::config)?,
        None => plan.levels.clone(),
    };
    let base = case.with_discretisation(cfg.spec.nx, cfg.spec.dt, plan.t_end, scheme);
    let table = convergence_study(&base, axis, &levels, plan.fixed).map_err(Failure::run)?;
    print!("{}", table.to_text());
    let _ = std::io::stdout().flush();

    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Failure::run(format!("cannot create {}: {e}", dir.display())))?;
    let p = dir.join(format!("convergence_{}_{}.csv", axis_name(axis), scheme.name()));
    std::fs::write(&p, table.to_csv()).map_err(|e| Failure::run(format!("writing {}: {e}", p.display())))?;
    println!("table -> {}", p.display());
    Ok(())
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::Spatial => "spatial",
        Axis::Temporal => "temporal",
    }
}
