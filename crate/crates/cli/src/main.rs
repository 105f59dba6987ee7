use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use csi_src::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "csi-src", version, about = "Complex-valued sparse representation classification of CSI activity data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a multipath scenario.
    Generate(GenerateArgs),
    /// Cross-validate classifiers over window sizes and bandwidth windows.
    Evaluate(EvaluateArgs),
    /// Compare SNR-based and CSI-based walking detection.
    Walking(WalkingArgs),
    /// Aggregate class distance per input mode.
    ClassDistance(ClassDistanceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Scenario JSON; the shipped default scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Inject RFI with the shipped default interference config.
    #[arg(long)]
    pub rfi: bool,
    /// RFI JSON (implies --rfi).
    #[arg(long)]
    pub rfi_config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub packets_per_class: Option<usize>,
    /// Write the binary format instead of text.
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Noise level relative to ||y||.
    #[arg(long, default_value_t = 0.1, conflicts_with = "epsilon_abs")]
    pub epsilon: f64,
    /// Absolute noise level.
    #[arg(long)]
    pub epsilon_abs: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PrepArgs {
    /// Skip phase sanitisation.
    #[arg(long)]
    pub no_sanitise: bool,
    /// Exponential smoothing factor in (0, 1].
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Restrict the data to START,WIDTH MHz before sweeping.
    #[arg(long, value_delimiter = ',')]
    pub sub_band: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub ws: Vec<usize>,
    /// Bandwidth window sizes in MHz.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub bands: Vec<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub step: f64,
    #[arg(long, value_delimiter = ',', default_value = "l1-weighting")]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "complex")]
    pub modes: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Neighbours for knn-voting.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Also report walking-vs-rest detection metrics.
    #[arg(long)]
    pub walking_metrics: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Test hook: a classifier that always answers the true label.
    #[arg(long)]
    pub stub_oracle: bool,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WalkingArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Bandwidth window sizes in MHz, one output row each.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    pub bands: Vec<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub step: f64,
    /// CSI classifier window size.
    #[arg(long, default_value_t = 5)]
    pub ws: usize,
    /// SNR feature window length; defaults to ws times the number of band offsets.
    #[arg(long)]
    pub snr_window: Option<usize>,
    #[arg(long, default_value = "l1-weighting")]
    pub method: String,
    #[arg(long, default_value = "complex")]
    pub mode: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassDistanceArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "complex,real-amplitude")]
    pub modes: Vec<String>,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    category: &'a str,
    message: String,
}

fn report(category: &str, message: String) {
    let json = serde_json::to_string(&ErrorReport { category, message }).expect("error report serialises");
    eprintln!("{json}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.kind().to_string());
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let result: Result<(), Error> = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Walking(a) => commands::walking(&a),
        Command::ClassDistance(a) => commands::class_distance(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.category(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
