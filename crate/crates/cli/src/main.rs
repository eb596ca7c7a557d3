mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::BackendKind;

#[derive(Parser, Debug)]
#[command(name = "mallm-gan", version, about = "Adversarial LLM-driven synthetic tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a starting causal structure by hill climbing and write it as a pair list.
    InitStructure(InitArgs),
    /// Run the adversarial optimization loop and write a run directory.
    Train(TrainArgs),
    /// Sample rows from a saved data generation process.
    Generate(GenerateArgs),
    /// Score synthetic data for utility (mle) or privacy (dcr).
    Evaluate(EvaluateArgs),
    /// Draw rows from a mock world's ground-truth network.
    MockSample(MockSampleArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Training data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON schema sidecar; inferred from the CSV when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct BackendArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// World spec JSON for the mock backend.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n_examples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output pair-list file.
    #[arg(long)]
    pub out: PathBuf,
    /// Pair-list file to report the graph edit distance against.
    #[arg(long)]
    pub reference_dag: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitMethod {
    HillClimb,
    Empty,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Run directory to create.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Starting structure; a pair-list file given with --init-dag overrides this.
    #[arg(long, value_enum)]
    pub init: Option<InitMethod>,
    #[arg(long)]
    pub init_dag: Option<PathBuf>,
    #[arg(long)]
    pub reference_dag: Option<PathBuf>,
    /// Rows in the final synthetic CSV; defaults to the training size.
    #[arg(long)]
    pub final_rows: Option<usize>,
    /// Condition for the final sample, e.g. "sex = Female" or "age > 40".
    #[arg(long)]
    pub condition: Option<String>,
    /// Disable the early-stopping rule.
    #[arg(long)]
    pub no_convergence: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// theta.json from a run directory.
    #[arg(long)]
    pub theta: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub condition: Option<String>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Mle,
    Dcr,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub synthetic: PathBuf,
    /// Real training rows; the schema is taken from here unless --schema is given.
    #[arg(long)]
    pub train: PathBuf,
    /// Real rows never shown to the generator: the test set for mle, the holdout for dcr.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Seeds for the downstream learners.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MockSampleArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::InitStructure(a) => commands::init_structure(&a),
        Command::Train(a) => commands::train(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::MockSample(a) => commands::mock_sample(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
