use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forge_cli::evaluate::{cmd_evaluate, EvaluateArgs};
use forge_cli::human::cmd_human_eval;
use forge_cli::lora_verify::cmd_lora_verify;
use forge_cli::pipeline::{cmd_curate, cmd_expand, cmd_formulate};
use forge_cli::{cmd_verify, exit_code, BackendKind, Context};

/// Build, expand, curate and evaluate an e-commerce instruction dataset.
///
/// Exit status: 0 clean, 2 finished with skipped items (see diagnostics),
/// 1 failed.
#[derive(Parser)]
#[command(name = "forge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "http")]
    backend: BackendKind,
    /// Override a config value, e.g. `--set pipeline.target_total=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest interactions and Q&A pairs, split them and write the seed set.
    Formulate(Common),
    /// Expand the seeds with the teacher model.
    Expand(Common),
    /// Deduplicate, balance and emit the dataset and held-out packs.
    Curate(Common),
    /// Score generations against the held-out split, or replay stored rows.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory of `<task>.jsonl` files with `{id, generation}` lines.
        #[arg(long, conflicts_with = "replay", required_unless_present = "replay")]
        generations: Option<PathBuf>,
        /// JSONL of `{model, values[18], reported_gm}` rows.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Row label in the report.
        #[arg(long)]
        model_name: Option<String>,
    },
    /// Check the adapter mathematics and the reference adapter sizes.
    LoraVerify(Common),
    /// Summarize human A/B/C/D ratings.
    HumanEval {
        #[command(flatten)]
        common: Common,
        /// Ratings JSONL; defaults to `paths.ratings_in`.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Recheck every output listed in the run manifests of out_dir.
    Verify(Common),
}

fn context(c: &Common) -> Result<Context, forge_cli::CliError> {
    Context::load(&c.config, &c.overrides, c.backend)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Formulate(c) => context(&c).and_then(|ctx| cmd_formulate(&ctx)),
        Command::Expand(c) => context(&c).and_then(|ctx| cmd_expand(&ctx)),
        Command::Curate(c) => context(&c).and_then(|ctx| cmd_curate(&ctx)),
        Command::Evaluate { common, generations, replay, model_name } => context(&common)
            .and_then(|ctx| cmd_evaluate(&ctx, &EvaluateArgs { generations, replay, model_name })),
        Command::LoraVerify(c) => context(&c).and_then(|ctx| cmd_lora_verify(&ctx)),
        Command::HumanEval { common, ratings } => context(&common).and_then(|ctx| cmd_human_eval(&ctx, ratings)),
        Command::Verify(c) => context(&c).and_then(|ctx| cmd_verify(&ctx)),
    };
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
