//! `ahm` — the command-line front end of the head-movement literature
//! toolkit: dual-backend extraction plus the reliability, severity,
//! classification, validation, and bridge analyses, all as reproducible
//! commands with run manifests.

mod cmd_analyze;
mod cmd_extract;
mod runctx;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};

use cmd_analyze::{
    AgreementArgs, BridgeArgs, ClassifyArgs, HnsiArgs, ValidateArgs, DEFAULT_CONDITION,
};
use cmd_extract::ExtractArgs;
use runctx::RunConfig;

/// Categorized failure: the category token is machine-parsable from stderr.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(source: anyhow::Error) -> CliError {
        CliError { category: "usage", source }
    }
    pub fn config(source: anyhow::Error) -> CliError {
        CliError { category: "config", source }
    }
    pub fn data(source: anyhow::Error) -> CliError {
        CliError { category: "data", source }
    }
    pub fn prerequisite(source: anyhow::Error) -> CliError {
        CliError { category: "prerequisite", source }
    }
    pub fn pipeline(source: anyhow::Error) -> CliError {
        CliError { category: "pipeline", source }
    }
}

#[derive(Parser)]
#[command(
    name = "ahm",
    about = "Literature-derived abnormal-head-movement dataset toolkit",
    version
)]
struct Cli {
    /// Optional JSON run-config; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dataset manifest (`role=path` lines).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Enable checks that need the published dataset.
    #[arg(long, global = true)]
    with_published_data: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dual-backend extraction pipeline over paper files.
    Extract(ExtractCli),
    /// Per-field inter-extractor reliability over two parallel corpora.
    Agreement(AgreementCli),
    /// Head-neck severity index per paper plus the band distribution.
    Hnsi(HnsiCli),
    /// Train and cross-validate the movement-type classifiers.
    Classify(ClassifyCli),
    /// Correlate severity with movement-type probabilities by paper.
    Bridge(BridgeCli),
    /// Compare the literature band distribution against an external cohort.
    Validate(ValidateCli),
}

#[derive(Args)]
struct ExtractCli {
    /// Backend pair configuration (JSON).
    #[arg(long)]
    backend_config: Option<PathBuf>,
    /// Paper markdown files or directories of `*.md`.
    #[arg(long, required = true, num_args = 1..)]
    papers: Vec<PathBuf>,
    /// Refinement round budget.
    #[arg(long, default_value_t = 3)]
    max_rounds: usize,
}

#[derive(Args)]
struct AgreementCli {
    /// First extraction corpus (JSON or JSONL).
    #[arg(long)]
    corpus_a: PathBuf,
    /// Second extraction corpus (JSON or JSONL).
    #[arg(long)]
    corpus_b: PathBuf,
    /// Semantic similarity matrix CSV (term_a,term_b,score).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Similarity level counted as agreement for movement terms.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct HnsiCli {
    /// Condition name to filter on.
    #[arg(long)]
    condition: Option<String>,
    /// Scale registry CSV (scale,hn_max,keywords,scope).
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyCli {
    #[arg(long)]
    condition: Option<String>,
    /// Probability cut for label assignment.
    #[arg(long)]
    threshold: Option<f64>,
    /// Grid-search the decision threshold instead of using the fixed one.
    #[arg(long)]
    optimize_threshold: bool,
}

#[derive(Args)]
struct BridgeCli {
    /// Probability export from `ahm classify`.
    #[arg(long)]
    probabilities: PathBuf,
    /// Per-paper severity export from `ahm hnsi`.
    #[arg(long)]
    hnsi: PathBuf,
    /// Model label written into the report.
    #[arg(long, default_value = "lr")]
    model: String,
}

#[derive(Args)]
struct ValidateCli {
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// External cohort file, one severity score per line.
    #[arg(long)]
    external: PathBuf,
    /// Treat external scores as raw TWSTRS values (divide by 35).
    #[arg(long)]
    raw_twstrs: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {:#}", e.category, e.source);
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::config)?,
        None => RunConfig::default(),
    };

    let out = cli
        .out
        .clone()
        .or(config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.or(config.seed).unwrap_or(42);
    let published_checks = cli.with_published_data || config.with_published_data.unwrap_or(false);
    let dataset = |needed_by: &str| -> Result<PathBuf, CliError> {
        cli.dataset
            .clone()
            .or(config.dataset.clone())
            .ok_or_else(|| {
                CliError::usage(anyhow!("`ahm {needed_by}` needs --dataset (or config.dataset)"))
            })
    };
    let condition = |flag: &Option<String>| -> String {
        flag.clone()
            .or(config.condition.clone())
            .unwrap_or_else(|| DEFAULT_CONDITION.to_string())
    };

    match cli.command {
        Command::Extract(args) => {
            let backend_config = args
                .backend_config
                .or(config.backend_config.clone())
                .ok_or_else(|| {
                    CliError::usage(anyhow!("`ahm extract` needs --backend-config"))
                })?;
            cmd_extract::run(ExtractArgs {
                backend_config,
                papers: args.papers,
                out,
                max_rounds: args.max_rounds,
            })
        }
        Command::Agreement(args) => cmd_analyze::agreement(AgreementArgs {
            corpus_a: args.corpus_a,
            corpus_b: args.corpus_b,
            matrix: args.matrix,
            threshold: args
                .threshold
                .or(config.similarity_threshold)
                .unwrap_or(0.7),
            out,
        }),
        Command::Hnsi(args) => cmd_analyze::hnsi(HnsiArgs {
            dataset: dataset("hnsi")?,
            condition: condition(&args.condition),
            registry: args.registry,
            published_checks,
            out,
        }),
        Command::Classify(args) => cmd_analyze::classify(ClassifyArgs {
            dataset: dataset("classify")?,
            condition: condition(&args.condition),
            seed,
            threshold: args
                .threshold
                .or(config.prediction_threshold)
                .unwrap_or(0.5),
            optimize_threshold: args.optimize_threshold,
            published_checks,
            out,
        }),
        Command::Bridge(args) => cmd_analyze::bridge(BridgeArgs {
            probabilities: args.probabilities,
            hnsi: args.hnsi,
            model_name: args.model,
            published_checks,
            out,
        }),
        Command::Validate(args) => cmd_analyze::validate(ValidateArgs {
            dataset: dataset("validate")?,
            condition: condition(&args.condition),
            registry: args.registry,
            external: args.external,
            raw_twstrs: args.raw_twstrs,
            published_checks,
            out,
        }),
    }
}
