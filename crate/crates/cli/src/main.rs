//! `opsum`: command-line front end for the opinion summarization pipeline.
//!
//! Every subcommand loads the JSON run configuration (defaults when omitted),
//! applies flag overrides, and calls the matching pipeline operation. Exit
//! codes: 0 success, 1 bad input (flags, config, missing upstream artifacts),
//! 2 runtime failure. Logs go to standard error; artifacts and manifests land
//! in the configured output directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opsum_core::eval::AblationVariant;
use opsum_core::pipeline::{
    cmd_ablate, cmd_alpha_study, cmd_evaluate, cmd_gen_corpus, cmd_pipeline, cmd_summarize,
    cmd_synthesize, cmd_train_induce, cmd_train_sum, PipelineError, RunConfig, RunManifest,
};

#[derive(Parser)]
#[command(name = "opsum", version, about = "Unsupervised opinion summarization pipeline")]
struct Cli {
    /// JSON run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run seed; drives every stage's RNG stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory all artifacts are written to and read from.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the desk corpus, held-out references, and vocabulary.
    GenCorpus,
    /// Train the content plan induction model and write per-review plans.
    TrainInduce,
    /// Build the synthetic summary/review training set.
    Synthesize {
        /// Number of synthetic instances to draw.
        #[arg(long)]
        size: Option<usize>,
        /// Dirichlet concentration over aspects.
        #[arg(long)]
        alpha_a: Option<f64>,
        /// Dirichlet concentration over sentiments.
        #[arg(long)]
        alpha_s: Option<f64>,
    },
    /// Train the plan-conditioned generator.
    TrainSum,
    /// Summarize each held-out entity's reviews.
    Summarize,
    /// Score summaries against references, plus a random-review baseline.
    Evaluate,
    /// Sweep the Dirichlet concentration and report input/summary overlap.
    AlphaStudy {
        /// Comma-separated concentration values.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Synthetic instances per concentration value.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train and score reduced variants against the full configuration.
    Ablate {
        /// Comma-separated seeds; each variant trains once per seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated variant names, e.g. full,no_content_plan.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
    /// Run the whole chain from corpus generation through evaluation.
    Pipeline,
}

fn parse_variant(name: &str) -> Result<AblationVariant, PipelineError> {
    AblationVariant::ALL
        .into_iter()
        .find(|v| v.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = AblationVariant::ALL.iter().map(|v| v.name()).collect();
            PipelineError::Validation(format!(
                "unknown ablation variant {name:?}; expected one of {}",
                known.join(", ")
            ))
        })
}

/// Builds the effective config: file (or defaults), then flag overrides.
fn effective_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    match &cli.command {
        Command::Synthesize { size, alpha_a, alpha_s } => {
            if let Some(size) = size {
                cfg.synthesis.dataset_size = *size;
            }
            if let Some(a) = alpha_a {
                cfg.synthesis.alpha_a = *a;
            }
            if let Some(s) = alpha_s {
                cfg.synthesis.alpha_s = *s;
            }
        }
        Command::AlphaStudy { alphas, samples } => {
            if let Some(alphas) = alphas {
                cfg.eval.alphas = alphas.clone();
            }
            if let Some(samples) = samples {
                cfg.eval.samples = *samples;
            }
        }
        Command::Ablate { seeds, variants } => {
            if let Some(seeds) = seeds {
                cfg.ablation.seeds = seeds.clone();
            }
            if let Some(names) = variants {
                cfg.ablation.variants =
                    names.iter().map(|n| parse_variant(n)).collect::<Result<_, _>>()?;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<RunManifest, PipelineError> {
    let cfg = effective_config(cli)?;
    match cli.command {
        Command::GenCorpus => cmd_gen_corpus(&cfg),
        Command::TrainInduce => cmd_train_induce(&cfg),
        Command::Synthesize { .. } => cmd_synthesize(&cfg),
        Command::TrainSum => cmd_train_sum(&cfg),
        Command::Summarize => cmd_summarize(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::AlphaStudy { .. } => cmd_alpha_study(&cfg),
        Command::Ablate { .. } => cmd_ablate(&cfg),
        Command::Pipeline => cmd_pipeline(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    // Bad flags are input errors, same exit class as bad config values.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.command);
            for artifact in &manifest.artifacts {
                println!("  {artifact}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            log::error!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
