//! `loskit`: generate, featurize, analyze, train, evaluate and report.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "loskit", version, about = "Length-of-stay analytics on hospitalization records")]
struct Cli {
    /// Worker threads; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Progress messages on standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic record CSV (and optionally its code tables).
    Generate(GenerateArgs),
    /// Compute the feature matrix of a record CSV.
    Featurize(FeaturizeArgs),
    /// Grouped descriptives, Kruskal-Wallis tests and mixed models.
    Analyze(AnalyzeArgs),
    /// Grid-search one model family on a feature file.
    Train(TrainArgs),
    /// Run the feature-ablation experiment, or score a saved model.
    Evaluate(EvaluateArgs),
    /// Render an evaluation directory as text plus histogram data.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_records: Option<usize>,
    /// Also write the synthetic GEM, DRG, Elixhauser and embedding tables here.
    #[arg(long)]
    pub maps_out: Option<PathBuf>,
    /// Also write per-category record counts and LoS summaries (CSV) here.
    #[arg(long)]
    pub marginals: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A or B; without it every record gets the train role.
    #[arg(long)]
    pub split_scenario: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Schema sidecar path; defaults to `<out>.schema.json`.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Abort on the first malformed record.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub family: String,
    /// Inline grid such as `n_rounds=100,300;max_depth=4,6`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "mae")]
    pub metric: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_model: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score this saved model on the test rows of `--features` instead.
    #[arg(long, requires = "features")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub eval_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("ConfigInvalid", "--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime("Threads", e.to_string()))?;
    }
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Generate(a) => commands::generate(&a, verbose),
        Command::Featurize(a) => commands::featurize(&a, verbose),
        Command::Analyze(a) => commands::analyze(&a, verbose),
        Command::Train(a) => commands::train(&a, verbose),
        Command::Evaluate(a) => commands::evaluate(&a, verbose),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("ERROR usage: {}", e.kind());
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit)
        }
    }
}
