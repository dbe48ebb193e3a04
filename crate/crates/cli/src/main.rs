use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gcnn_cli::commands::{self, EvalInputs, EvalKind};
use gcnn_cli::config::ModelConfig;
use gcnn_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "gcnn", version, about = "Geodesic CNN pipeline on triangle meshes")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured model with a preset.
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Gcnn1,
    Gcnn2,
    Gcnn3,
    Retrieval,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cmc,
    Roc,
    Princeton,
    Pr,
}

#[derive(Subcommand)]
enum Command {
    /// Eigensystems, geometry vectors and patch operators for every shape.
    Precompute,
    /// Trains the configured model; writes checkpoints and the loss CSV.
    Train,
    /// Runs a model on one shape.
    Apply {
        #[arg(long)]
        shape: String,
        /// Model record; the freshly initialized configured model if omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Writes an evaluation curve as CSV.
    Eval {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Query descriptors (DENSE record).
        #[arg(long)]
        query: Option<PathBuf>,
        /// Reference descriptors (DENSE record).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// One reference index per query, one per line.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Correspondence CSV from `apply` or one predicted index per line.
        #[arg(long)]
        prediction: Option<PathBuf>,
        /// Shape whose mesh measures Princeton distances.
        #[arg(long)]
        reference_shape: Option<String>,
        /// Per-shape retrieval descriptors.
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Class label per retrieval input, one per line.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, CliError> {
    let Some(path) = &cli.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.preset {
        let name = match p {
            PresetArg::Gcnn1 => "gcnn1",
            PresetArg::Gcnn2 => "gcnn2",
            PresetArg::Gcnn3 => "gcnn3",
            PresetArg::Retrieval => "retrieval",
        };
        cfg.model = ModelConfig {
            preset: Some(name.into()),
            layers: None,
        };
    }
    Ok(Some(cfg))
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    let need = || cfg.as_ref().ok_or_else(|| CliError::Usage("this command needs --config".into()));
    match cli.command {
        Command::Precompute => commands::precompute(need()?),
        Command::Train => commands::train(need()?),
        Command::Apply { shape, checkpoint, output } => {
            commands::apply(need()?, &shape, checkpoint.as_deref(), output.as_deref())
        }
        Command::Eval {
            kind,
            query,
            reference,
            ground_truth,
            prediction,
            reference_shape,
            inputs,
            labels,
            output,
        } => {
            let kind = match kind {
                KindArg::Cmc => EvalKind::Cmc,
                KindArg::Roc => EvalKind::Roc,
                KindArg::Princeton => EvalKind::Princeton,
                KindArg::Pr => EvalKind::Pr,
            };
            let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let inputs = EvalInputs {
                query,
                reference,
                ground_truth,
                prediction,
                reference_shape,
                inputs,
                labels,
                output,
            };
            commands::eval(cfg.as_ref(), seed, kind, &inputs)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::Usage(e.to_string().trim().to_string()).to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
