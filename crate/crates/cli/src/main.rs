//! `loadcast`: run the forecasting pipeline stage by stage.

mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loadcast::neural::Variant;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "loadcast", version, about = "Passenger load factor forecasting from dual booking sequences")]
pub struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true, env = "LOADCAST_SEED", default_value_t = 42, help_heading = "Global options")]
    pub seed: u64,
    /// Run manifest updated by every subcommand.
    #[arg(long, global = true, default_value = "run_manifest.json", help_heading = "Global options")]
    pub manifest: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus (reservations, airports, routes, holidays).
    Generate(GenerateArgs),
    /// Validate the input tables and aggregate legs into flight records.
    Ingest(IngestArgs),
    /// Compute the 39 candidate features per booking snapshot.
    Features(FeaturesArgs),
    /// Run the seven-stage feature selection.
    Select(SelectArgs),
    /// Build horizontal/vertical samples and the chronological split.
    Sequences(SequencesArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Train and score models over several seeds; write the leaderboard.
    Evaluate(EvaluateArgs),
    /// Metrics per days-before-departure from a predictions file.
    Horizon(HorizonArgs),
    /// Metrics per route category from a predictions file.
    Categories(CategoriesArgs),
    /// Validation loss over symmetric window sizes.
    Sweep(SweepArgs),
    /// Load a checkpoint and forecast PLF.
    Predict(PredictArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Output directory for the four CSV tables.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Generator config (TOML); absent keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the number of routes.
    #[arg(long)]
    pub routes: Option<usize>,
    /// Overrides the number of flights per route.
    #[arg(long)]
    pub flights_per_route: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TableArgs {
    /// reservations.csv
    #[arg(long)]
    pub reservations: PathBuf,
    /// airports.csv
    #[arg(long)]
    pub airports: PathBuf,
    /// routes.csv
    #[arg(long)]
    pub routes: PathBuf,
    /// holidays.csv
    #[arg(long)]
    pub holidays: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub tables: TableArgs,
    /// Aggregated reservations output.
    #[arg(long)]
    pub out: PathBuf,
    /// Reject legs that disagree on aircraft type.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub tables: TableArgs,
    /// features.csv output.
    #[arg(long)]
    pub out: PathBuf,
    /// Feature config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// features.csv input.
    #[arg(long)]
    pub features: PathBuf,
    /// selection_report.json output.
    #[arg(long)]
    pub out: PathBuf,
    /// Writes the selected feature lists as JSON (full runs only).
    #[arg(long)]
    pub feature_set_out: Option<PathBuf>,
    /// Stop after this stage (1-7).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
    pub stage: Option<u8>,
    /// Selection config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SequencesArgs {
    /// features.csv input.
    #[arg(long)]
    pub features: PathBuf,
    /// Feature lists from `select`; defaults to the default selection.
    #[arg(long)]
    pub feature_set: Option<PathBuf>,
    /// Output directory for samples.bin, window.json and samples_manifest.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Horizontal window length H.
    #[arg(long, default_value_t = 3)]
    pub horizontal: usize,
    /// Vertical window length V.
    #[arg(long, default_value_t = 3)]
    pub vertical: usize,
    /// Gap between vertical flights.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Largest days-before-departure to forecast from.
    #[arg(long, default_value_t = 21)]
    pub d_max: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Directory written by `sequences`.
    #[arg(long)]
    pub sequences: PathBuf,
    /// Model variant, e.g. DLSTM-HA.
    #[arg(long)]
    pub variant: Variant,
    /// Checkpoints go to <runs-dir>/runs/<variant>/<seed>/best.ckpt.
    #[arg(long)]
    pub runs_dir: PathBuf,
    /// Overrides the epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Directory written by `sequences`.
    #[arg(long)]
    pub sequences: PathBuf,
    /// Output directory for leaderboard.csv, runs.csv and predictions.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated model names; defaults to every variant and baseline.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Number of seeds, counting up from --seed.
    #[arg(long, default_value_t = 3)]
    pub runs: u64,
    /// Overrides the epoch budget of neural models.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Trees of the random-forest baseline.
    #[arg(long, default_value_t = 100)]
    pub forest_trees: usize,
    /// Parallel model slots.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Also save neural checkpoints and training logs here.
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct HorizonArgs {
    /// predictions.csv from `evaluate`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Output directory for horizon.csv and the SVG plots.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Largest days-before-departure reported.
    #[arg(long, default_value_t = 21)]
    pub d_max: u32,
    /// Seed whose predictions are analysed; defaults to the smallest present.
    #[arg(long)]
    pub run_seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CategoriesArgs {
    /// predictions.csv from `evaluate`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// routes.csv with the category tags.
    #[arg(long)]
    pub routes: PathBuf,
    /// airports.csv referenced by the routes.
    #[arg(long)]
    pub airports: PathBuf,
    /// Output directory for categories.csv and the SVG plots.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Seed whose predictions are analysed; defaults to the smallest present.
    #[arg(long)]
    pub run_seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// features.csv input.
    #[arg(long)]
    pub features: PathBuf,
    /// Feature lists from `select`; defaults to the default selection.
    #[arg(long)]
    pub feature_set: Option<PathBuf>,
    /// sweep.csv output.
    #[arg(long)]
    pub out: PathBuf,
    /// Window sizes, H = V; defaults to 3 through 18.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Variants to train; defaults to SLSTM-H, SLSTM-V and DLSTM.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    /// Epoch budget per fit.
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Largest days-before-departure to forecast from.
    #[arg(long, default_value_t = 21)]
    pub d_max: u32,
    /// Parallel model slots.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Partition {
    Test,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Model checkpoint from `train` or `evaluate`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory written by `sequences`.
    #[arg(long)]
    pub sequences: PathBuf,
    /// Forecast CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Which samples to forecast.
    #[arg(long, value_enum, default_value_t = Partition::Test)]
    pub partition: Partition,
    /// Emit PLF only (the default).
    #[arg(long, conflicts_with = "capacity")]
    pub plf_only: bool,
    /// Seat capacity; adds a passenger count column.
    #[arg(long)]
    pub capacity: Option<u32>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
