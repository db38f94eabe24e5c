//! Configuration-driven runs and the `lifespans` command line.
//!
//! Exit codes: 0 success, 1 configuration, 2 data or I/O, 3 numerical.

mod config;
mod dataset;
mod output;
mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::fields::FieldError;
use crate::tracking::TrackingError;
use crate::ulam::UlamError;

pub use config::{AnalysisConfig, ConfigError, Dumps, FieldSource, PChoice};
pub use dataset::{generate_dwp_dataset, time_range};
pub use output::{read_vectors, render_vector, render_vector_to, write_vectors, RunInfo, StoredModes};
pub use run::{analyze_windows, compute_windows, run_analysis, run_select_p, write_outputs, Analysis, Field, RunSummary, Windows};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    BadConfig(#[from] ConfigError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ulam(#[from] UlamError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error("no quasi-norm candidate produced a lifespan")]
    NoValidP,
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadConfig(_) | CliError::Config(_) => 1,
            CliError::Ulam(UlamError::EmptyPatch | UlamError::Geometry(_)) => 1,
            CliError::Field(_) | CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Ulam(UlamError::Flow(crate::flow::FlowError::OutsideTimeRange { .. })) => 2,
            CliError::Ulam(_) | CliError::Tracking(_) | CliError::NoValidP | CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lifespans", version, about = "Coherent-structure lifespans from localised Ulam operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VectorKind {
    /// Left singular vector on the seeded bins.
    U,
    /// Right singular vector on the image bins.
    V,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline described by a config file.
    Analyze {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the quasi-norm candidates and report the selected one.
    SelectP {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a gridded double-well dataset.
    GenDwp {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a stored tracked vector from a finished run.
    Render {
        #[arg(long)]
        run_dir: PathBuf,
        /// Tracked mode, from 1.
        #[arg(long)]
        mode: usize,
        /// Window start time.
        #[arg(long)]
        time: i64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "v")]
        kind: VectorKind,
    },
}

fn load_config(path: &Path, out: Option<PathBuf>) -> Result<AnalysisConfig, CliError> {
    let mut config = AnalysisConfig::load(path)?;
    if let Some(out) = out {
        config.output_dir = out;
    }
    Ok(config)
}

/// Renders vector `mode` (from 1) of window `time` stored under `run_dir`.
pub fn render_stored(run_dir: &Path, mode: usize, time: i64, kind: VectorKind, out: &Path) -> Result<(), CliError> {
    let info_path = run_dir.join("run.json");
    let text = std::fs::read_to_string(&info_path).map_err(|e| CliError::io(&info_path, e))?;
    let info: RunInfo = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", info_path.display())))?;
    let window = info
        .times
        .iter()
        .position(|&t| t == time)
        .ok_or_else(|| CliError::Config(format!("run has no window starting at t={time}")))?;
    if mode == 0 || mode > info.modes {
        return Err(CliError::Config(format!("mode must lie in 1..={}", info.modes)));
    }
    let vectors = run_dir.join("vectors.bin");
    let stored = read_vectors(&vectors, window, mode - 1).map_err(|e| CliError::io(&vectors, e))?;
    let v = match kind {
        VectorKind::U => stored.left,
        VectorKind::V => stored.right,
    };
    render_vector_to(&v, &info.grid, out).map_err(|e| CliError::io(out, e))
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze { config, out } => {
            let config = load_config(&config, out)?;
            let summary = run_analysis(&config)?;
            let a = &summary.analysis;
            println!("windows: {}", summary.windows);
            println!("p: {}", a.p);
            println!("lifespans: {}", a.report.total_spans());
            for (name, span) in [
                ("eldest", &a.report.eldest),
                ("min_eq", &a.report.min_eq),
                ("max_var_sv", &a.report.max_var_sv),
            ] {
                if let Some(s) = span {
                    println!("{name}: mode {} [{}, {}]", s.mode, s.birth, s.death);
                }
            }
            println!("regular spans: {}", a.regularity.spans.len());
            println!("output: {}", summary.output_dir.display());
            Ok(())
        }
        Command::SelectP { config, out } => {
            let config = load_config(&config, out)?;
            let sel = run_select_p(&config)?;
            for s in &sel.scores {
                match s.mean_mismatch {
                    Some(m) => println!("p={} mean_mismatch={m:.6} lifespans={}", s.p, s.lifespans),
                    None => println!("p={} mean_mismatch=none lifespans=0", s.p),
                }
            }
            match sel.selected {
                Some(p) => println!("selected: {p}"),
                None => println!("selected: none"),
            }
            Ok(())
        }
        Command::GenDwp { nx, ny, t0, t1, step, out } => {
            let times = time_range(t0, t1, step)
                .ok_or_else(|| CliError::Config(format!("bad time range t0={t0} t1={t1} step={step}")))?;
            if nx < 2 || ny < 2 {
                return Err(CliError::Config(format!("need nx, ny >= 2, got {nx}x{ny}")));
            }
            generate_dwp_dataset(nx, ny, &times, &out)?;
            println!("wrote {} slices to {}", times.len(), out.display());
            Ok(())
        }
        Command::Render {
            run_dir,
            mode,
            time,
            out,
            kind,
        } => render_stored(&run_dir, mode, time, kind, &out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
