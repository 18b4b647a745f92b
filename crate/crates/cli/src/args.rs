use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "railcrowd",
    version,
    about = "Passenger location inference for urban rail networks from tap-in/tap-out data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic fare-collection records and a ground-truth trace.
    Simulate(SimulateArgs),
    /// Estimate walk-time distributions from historical records.
    Estimate(EstimateArgs),
    /// Build location and destination tables into an archive.
    BuildTables(BuildTablesArgs),
    /// Replay tap events and write crowdedness snapshots.
    Infer(InferArgs),
    /// Draw maps and time series from snapshot files.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Demand profile (TOML).
    #[arg(long)]
    pub demand: PathBuf,
    /// Truth model (JSON). Without it, walk means are drawn uniformly from
    /// `--walk-mean-min..--walk-mean-max` with variance `--walk-variance`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 40.0)]
    pub walk_mean_min: f64,
    #[arg(long, default_value_t = 90.0)]
    pub walk_mean_max: f64,
    #[arg(long, default_value_t = 5.0)]
    pub walk_variance: f64,
    #[arg(long, default_value_t = 1)]
    pub days: u32,
    /// Index of the first simulated day.
    #[arg(long, default_value_t = 0)]
    pub day_offset: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `afc.csv`, `trace.csv` and `truth_model.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Historical records (CSV).
    #[arg(long)]
    pub history: PathBuf,
    /// Minimum completed trips for an OD pair to be used.
    #[arg(long, default_value_t = 5)]
    pub nmin: u64,
    #[arg(long, default_value = railcrowd::estimator::DEFAULT_SOLVER)]
    pub solver: String,
    /// Reference model (JSON) to report the error against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output model file (JSON); residuals go next to it as `<name>.residuals.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildTablesArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Estimated model (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Historical records (CSV) for the destination table.
    #[arg(long)]
    pub history: PathBuf,
    /// Output archive.
    #[arg(long)]
    pub archive: PathBuf,
    /// Grid step in seconds.
    #[arg(long, default_value_t = 15.0)]
    pub delta: f64,
    /// Fixed number of grid steps; sized per route when omitted.
    #[arg(long)]
    pub horizon: Option<u32>,
    /// Simulated trips per route.
    #[arg(long, default_value_t = 20_000)]
    pub imax: u32,
    /// Time-of-day bin width in seconds.
    #[arg(long, default_value_t = 1800)]
    pub bin_width: i64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenderKind {
    Svg,
    Csv,
    Both,
}

impl RenderKind {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            RenderKind::Svg => &["svg"],
            RenderKind::Csv => &["csv"],
            RenderKind::Both => &["svg", "csv"],
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub archive: PathBuf,
    /// Tap events in the record CSV format; exit fields may be empty.
    #[arg(long)]
    pub events: PathBuf,
    /// Output directory for snapshot files.
    #[arg(long)]
    pub out: PathBuf,
    /// Seconds between snapshots.
    #[arg(long, default_value_t = 600)]
    pub cadence: i64,
    /// First snapshot, `HH:MM[:SS]` or seconds after midnight.
    #[arg(long, default_value = "08:00")]
    pub from: String,
    /// Last snapshot (inclusive).
    #[arg(long, default_value = "20:00")]
    pub to: String,
    /// Day the clock times refer to; defaults to the day of the first event.
    #[arg(long)]
    pub day: Option<i64>,
    /// Report transfer points as part of their station.
    #[arg(long)]
    pub fold_transfers: bool,
    /// Also render the snapshots.
    #[arg(long, value_enum)]
    pub render: Option<RenderKind>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Directory of `snapshot_<t>.csv` files written by `infer`.
    #[arg(long)]
    pub snapshots: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub render: RenderKind,
    #[arg(long)]
    pub fold_transfers: bool,
}
