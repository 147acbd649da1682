//! Command-line front end for the dfcv simulator: single runs, density
//! sweeps and paired protocol comparisons written out as CSV.

pub mod config_file;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dfcv_core::config::{ProtocolKind, SimConfig};
use dfcv_core::engine::{self, RunOutput};
use dfcv_core::error::SimError;
use dfcv_core::metrics::RunReport;
use dfcv_core::trace::{load_trace, TraceTimeline};
use rayon::prelude::*;
use tracing::info;
use tracing_subscriber::EnvFilter;

use crate::config_file::ConfigFile;

pub const LOG_ENV: &str = "DFCV_LOG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Trace(_) | SimError::VehicleCountMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            SimError::Model(_) | SimError::Invariant { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dfcv", version, about = "Dynamic fog computing simulator for vehicular networks")]
pub struct Cli {
    /// Diagnostic verbosity (error, warn, info, debug, trace); overrides DFCV_LOG.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Run(RunArgs),
    /// Sweep vehicle counts, protocols and seeds.
    Sweep(SweepArgs),
    /// Run several protocols on identical seeds.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mobility trace CSV replacing the synthetic mobility model.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "40,80,120,160,200,240")]
    pub vehicle_counts: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "dfcv,static-fog,cloud-only")]
    pub protocols: Vec<ProtocolKind>,
    /// Seeds per cell; seed i is the config seed plus i.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub seeds: u32,
    /// Maximum concurrent runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub protocols: Vec<ProtocolKind>,
    /// Vehicle counts to compare at; defaults to the configured count.
    #[arg(long, value_delimiter = ',')]
    pub vehicle_counts: Vec<u32>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub seeds: u32,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// One cell of a sweep: a full configuration plus a label for event logs.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: String,
    pub config: SimConfig,
}

pub fn sweep_cells(base: &SimConfig, vehicle_counts: &[u32], protocols: &[ProtocolKind], seeds: u32) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &n in vehicle_counts {
        for &protocol in protocols {
            for i in 0..seeds {
                let config = SimConfig {
                    vehicle_count: n,
                    protocol,
                    seed: base.seed.wrapping_add(u64::from(i)),
                    ..base.clone()
                };
                let label = format!("{protocol}/n={n}/seed={}", config.seed);
                cells.push(Cell { label, config });
            }
        }
    }
    cells
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn init_logging(level: Option<&str>) {
    let directive = level.map(str::to_owned).or_else(|| std::env::var(LOG_ENV).ok());
    let filter = directive
        .and_then(|d| EnvFilter::try_new(d).ok())
        .unwrap_or_else(|| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))
}

fn run_single(args: &RunArgs) -> Result<(), CliError> {
    let file = load_config(args.config.as_deref())?;
    let count_given = file.vehicle_count.is_some();
    let mut config = file.into_config()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let trace: Option<TraceTimeline> = match &args.trace {
        Some(path) => {
            let timeline = load_trace(path, &config.road_bounds()).map_err(SimError::from)?;
            if !count_given {
                config.vehicle_count = u32::try_from(timeline.vehicle_count())
                    .map_err(|_| CliError::Config("trace holds too many vehicles".into()))?;
            }
            Some(timeline)
        }
        None => None,
    };
    info!(protocol = %config.protocol, vehicles = config.vehicle_count, seed = config.seed, "starting run");
    let RunOutput { report, log } = engine::run(config, trace)?;
    create_out_dir(&args.out)?;
    output::write_report(&args.out.join("report.csv"), std::slice::from_ref(&report))?;
    output::write_events(&args.out.join("events.csv"), [(None, log.events.as_slice())])?;
    output::write_failure_curve(&args.out.join("failure_curve.csv"), &report.failure_probability_curve)?;
    output::write_plotdata(&args.out, std::slice::from_ref(&report))
}

/// Runs every cell, at most `jobs` at a time, and returns outputs in cell order.
pub fn run_cells(cells: &[Cell], jobs: usize) -> Result<Vec<RunOutput>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                info!(run = %cell.label, "starting run");
                engine::run(cell.config.clone(), None).map_err(CliError::from)
            })
            .collect()
    })
}

fn write_batch(out: &Path, cells: &[Cell], outputs: &[RunOutput]) -> Result<(), CliError> {
    create_out_dir(out)?;
    let reports: Vec<RunReport> = outputs.iter().map(|o| o.report.clone()).collect();
    output::write_report(&out.join("report.csv"), &reports)?;
    output::write_events(
        &out.join("events.csv"),
        cells.iter().zip(outputs).map(|(c, o)| (Some(c.label.clone()), o.log.events.as_slice())),
    )?;
    output::write_plotdata(out, &reports)
}

fn run_batch(
    config: Option<&Path>,
    counts: &[u32],
    protocols: &[ProtocolKind],
    seeds: u32,
    jobs: usize,
    out: &Path,
) -> Result<(), CliError> {
    let base = load_config(config)?.into_config()?;
    let counts = if counts.is_empty() { vec![base.vehicle_count] } else { counts.to_vec() };
    let cells = sweep_cells(&base, &counts, protocols, seeds);
    let outputs = run_cells(&cells, jobs)?;
    write_batch(out, &cells, &outputs)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(args) => run_single(args),
        Command::Sweep(a) => run_batch(a.config.as_deref(), &a.vehicle_counts, &a.protocols, a.seeds, a.jobs, &a.out),
        Command::Compare(a) => run_batch(a.config.as_deref(), &a.vehicle_counts, &a.protocols, a.seeds, a.jobs, &a.out),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
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
    init_logging(cli.log_level.as_deref());
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
