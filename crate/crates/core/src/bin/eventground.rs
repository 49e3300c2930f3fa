use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use eventground::dataset::Split;
use eventground::encoder::LanguageMode;
use eventground::pipeline::{self, Command, ExperimentConfig, Overrides, OUTPUT_DIR_ENV};
use eventground::training::Strategy;

/// Hierarchical event grounding: ingest, split, train, retrieve, rerank,
/// evaluate and discover parent events.
#[derive(Parser, Debug)]
#[command(name = "eventground", version)]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config and the environment variable).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    events: Option<PathBuf>,
    #[arg(long, global = true)]
    relations: Option<PathBuf>,
    #[arg(long, global = true)]
    mentions: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// multilingual or crosslingual
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<LanguageMode>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// BASELINE, HP, HJL or HP_HJL
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Hashed feature dimension.
    #[arg(long)]
    features: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Validate the KB and mentions; write forest.json and stats.json.
    Ingest,
    /// Zero-shot train/dev/test split; write splits.json.
    Split,
    /// Generate a synthetic corpus into the output directory.
    Synth,
    /// Train the bi-encoder; write model.ckpt and train_log.jsonl.
    Train(TrainArgs),
    /// Retrieve candidates for one split.
    Retrieve {
        #[arg(long, default_value = "dev")]
        split: Split,
        #[command(flatten)]
        model: TrainArgs,
    },
    /// Train the reranker on train retrievals and pick its threshold on dev.
    RerankTrain {
        #[command(flatten)]
        model: TrainArgs,
    },
    /// Score one split; write report.json and predictions.jsonl.
    Evaluate {
        #[arg(long, default_value = "dev")]
        split: Split,
        /// Also report recall of the atomic event alone.
        #[arg(long)]
        atomic_only: bool,
        #[command(flatten)]
        model: TrainArgs,
    },
    /// Rank candidate parents from retrieval overlap; write parents.jsonl.
    Relext {
        #[arg(long, default_value = "test")]
        split: Split,
        #[command(flatten)]
        model: TrainArgs,
    },
    /// Compare analytic and finite-difference gradients of both losses.
    GradCheck,
}

fn parse_mode(s: &str) -> Result<LanguageMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "multilingual" => Ok(LanguageMode::Multilingual),
        "crosslingual" => Ok(LanguageMode::Crosslingual),
        _ => Err(format!("unknown mode `{s}`")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let (command, model) = match cli.command {
        Cmd::Ingest => (Command::Ingest, TrainArgs::default()),
        Cmd::Split => (Command::Split, TrainArgs::default()),
        Cmd::Synth => (Command::Synth, TrainArgs::default()),
        Cmd::Train(args) => (Command::Train, args),
        Cmd::Retrieve { split, model } => (Command::Retrieve { split }, model),
        Cmd::RerankTrain { model } => (Command::RerankTrain, model),
        Cmd::Evaluate {
            split,
            atomic_only,
            model,
        } => (Command::Evaluate { split, atomic_only }, model),
        Cmd::Relext { split, model } => (Command::Relext { split }, model),
        Cmd::GradCheck => (Command::GradCheck, TrainArgs::default()),
    };
    let overrides = Overrides {
        output_dir: cli.output_dir,
        events: cli.events,
        relations: cli.relations,
        mentions: cli.mentions,
        seed: cli.seed,
        mode: cli.mode,
        strategy: model.strategy,
        epochs: model.epochs,
        learning_rate: model.learning_rate,
        features: model.features,
    };
    let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);

    let result = ExperimentConfig::resolve(cli.config.as_deref(), env_dir, &overrides)
        .and_then(|config| pipeline::run(command, &config));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let record = json!({
                "command": command.name(),
                "error": err.kind(),
                "message": err.to_string(),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
