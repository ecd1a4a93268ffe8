mod commands;
mod config;
mod error;
mod pipeline;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use brainscale::classify::FeatureKind;
use brainscale::data::NetworkId;
use brainscale::embedding::TauMode;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};
use crate::report::{ReportFormat, ReportTable};

/// Two-scale fMRI time-series analysis: recurrence dynamics per ROI and
/// partial-correlation graphs per network, classified with bagged trees.
#[derive(Debug, Parser)]
#[command(name = "brainscale", version)]
struct Cli {
    /// Log progress to stderr (RUST_LOG overrides)
    #[arg(short, long, global = true)]
    verbose: bool,

    /// Worker threads for per-subject and per-ROI work
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort in the on-disk dataset layout
    Synth(SynthArgs),
    /// Check a dataset and print a JSON report
    Validate(ValidateArgs),
    /// ReHo map of a voxel block and its representative series
    Reho(RehoArgs),
    /// Delay and Cao dimension of one series
    Embed(EmbedArgs),
    /// Recurrence quantification for every ROI of a dataset
    Rqa(RqaArgs),
    /// Render recurrence plots as PGM images
    RpRender(RpRenderArgs),
    /// Partial-correlation graphs, spectral features and top-ROI frequencies
    Graph(GraphArgs),
    /// Cross-validated bagged-tree classification of one feature table
    Classify(ClassifyArgs),
    /// Full pipeline into a resumable run directory
    Run(RunArgs),
    /// Summarize a finished run directory
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    #[value(name = "two_class_cohort")]
    TwoClassCohort,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "two_class_cohort")]
    pub kind: SynthKind,
    /// Fractional reduction of the hub's connections in class 1
    #[arg(long, default_value_t = 1.0)]
    pub sep: f64,
    /// Subjects per class
    #[arg(long, default_value_t = 50)]
    pub subjects: usize,
    /// ROIs in the structured network; must match the network's atlas size
    #[arg(long)]
    pub n: Option<usize>,
    /// Timepoints per series
    #[arg(long = "N", default_value_t = 190)]
    pub n_timepoints: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Network carrying the class difference; the others are noise
    #[arg(long, default_value = "default_mode")]
    pub network: NetworkId,
    /// 1-based hub ROI (default: the middle ROI)
    #[arg(long)]
    pub hub: Option<usize>,
    /// Number of ROIs connected to the hub
    #[arg(long)]
    pub leaves: Option<usize>,
    /// Magnitude of the hub's precision entries in class 0
    #[arg(long)]
    pub hub_weight: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root containing manifest.csv
    #[arg(long)]
    pub data: PathBuf,
    /// Manifest path (default: <data>/manifest.csv)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl DataArgs {
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.data.join("manifest.csv"))
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct RehoArgs {
    /// Voxel block CSV: x,y,z then one column per timepoint
    #[arg(long)]
    pub block: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub region_id: usize,
    #[arg(long, default_value = "default_mode")]
    pub network: NetworkId,
    /// Label given to the representative series
    #[arg(long, default_value = "roi")]
    pub label: String,
    /// Rank only the 26 neighbors, not the center voxel
    #[arg(long)]
    pub neighbors_only: bool,
    /// Write the ReHo map here
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Write the representative series here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One series from a plain CSV, or series picked out of a dataset.
#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// CSV with a header row and one series per column
    #[arg(long, conflicts_with_all = ["data", "subject", "roi"], required_unless_present = "data")]
    pub series: Option<PathBuf>,
    /// Column of --series: header name or 1-based index (default: every column)
    #[arg(long, requires = "series")]
    pub column: Option<String>,
    /// Dataset root containing manifest.csv
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub subject: Option<String>,
    #[arg(long)]
    pub network: Option<NetworkId>,
    /// 1-based ROI number within the network
    #[arg(long, requires = "data")]
    pub roi: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    /// Delay: `auto` for the autocorrelation rule, or a fixed positive integer
    #[arg(long, default_value = "auto")]
    pub tau: TauMode,
    /// Largest dimension evaluated by Cao's method
    #[arg(long, default_value_t = 20)]
    pub dmax: usize,
    /// Saturation tolerance on successive E1 values
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct RqaOptions {
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
    /// Target recurrence rate
    #[arg(long, default_value_t = 0.1)]
    pub rr: f64,
    #[arg(long, default_value_t = 2)]
    pub lmin: usize,
    #[arg(long, default_value_t = 2)]
    pub vmin: usize,
    /// Keep only the first K embedded states of every series
    #[arg(long)]
    pub force_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
    /// Write the Cao curve (d,e1,e2) here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RqaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Restrict to one network (default: all)
    #[arg(long)]
    pub network: Option<NetworkId>,
    #[arg(long)]
    pub subject: Option<String>,
    #[command(flatten)]
    pub rqa: RqaOptions,
    /// Write the per-ROI table here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the chosen delay and dimension per ROI here
    #[arg(long)]
    pub embedding_out: Option<PathBuf>,
    /// Write classifier feature tables (rqa_<network>.csv) into this directory
    #[arg(long)]
    pub features_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RpRenderArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub rqa: RqaOptions,
    /// Image side in pixels
    #[arg(long, default_value_t = 224)]
    pub size: usize,
    /// Render the thresholded plot (recurrences black) instead of distances
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Restrict to one network (default: all)
    #[arg(long)]
    pub network: Option<NetworkId>,
    /// Covariance shrinkage toward its diagonal
    #[arg(long, default_value_t = 0.1)]
    pub shrinkage: f64,
    /// Edge threshold on partial correlation for degree counting
    #[arg(long, default_value_t = 0.2)]
    pub edge_threshold: f64,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Count only positive partial correlations above the threshold
    #[arg(long)]
    pub signed: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub features: FeatureKind,
    #[arg(long, default_value = "default_mode")]
    pub network: NetworkId,
    /// Feature table written by `graph`, `rqa --features-out` or `run`
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub table: Option<PathBuf>,
    /// Compute the features from a dataset with default settings
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 400)]
    pub trees: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Average per-fold metrics instead of pooling confusion counts
    #[arg(long)]
    pub per_fold_mean: bool,
    /// Write metrics.json and metrics.csv into this directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Restrict the run, e.g. `network=default_mode`
    #[arg(long, value_name = "KEY=VALUE")]
    pub only: Vec<String>,
    /// Dataset root
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated feature families (eigval, eigvec, rqa)
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trees per forest
    #[arg(long)]
    pub trees: Option<usize>,
    /// Cross-validation folds
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory written by `run`
    pub run: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    /// Table emitted with `--format csv`
    #[arg(long, value_enum, default_value = "metrics")]
    pub table: ReportTable,
}

fn with_workers(jobs: Option<usize>, f: impl FnOnce() -> CliResult<()> + Send) -> CliResult<()> {
    match jobs {
        None => f(),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Run(args) => {
            let cfg = commands::run_config(&args, jobs)?;
            with_workers(cfg.jobs, || commands::run(&cfg))
        }
        Command::Synth(args) => with_workers(jobs, || commands::synth(&args)),
        Command::Validate(args) => commands::validate(&args),
        Command::Reho(args) => with_workers(jobs, || commands::reho(&args)),
        Command::Embed(args) => commands::embed(&args),
        Command::Rqa(args) => with_workers(jobs, || commands::rqa(&args)),
        Command::RpRender(args) => with_workers(jobs, || commands::rp_render(&args)),
        Command::Graph(args) => with_workers(jobs, || commands::graph(&args)),
        Command::Classify(args) => with_workers(jobs, || commands::classify(&args)),
        Command::Report(args) => commands::report(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
