//! `vld`: generate problem corpora, run capacity grids, train and evaluate
//! reasoning models, and aggregate run manifests into tables.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 1 when a
//! run itself fails (generation, divergence, IO).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vld_core::experiment::{
    build_report, capacity_experiment, load_toml, reason_eval, reason_train, CapacityGridConfig, GenIgsmConfig,
    ReasonConfig,
};
use vld_core::igsm::{generate_corpus, read_corpus, write_corpus, Corpus};
use vld_core::{Error, Result};

const EXIT_RUN_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "vld", version, about = "Virtual logical depth experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the root seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a train/validation problem corpus.
    GenIgsm {
        #[command(flatten)]
        common: Common,
    },
    /// Train a grid of models on a random token sequence and measure absorbed entropy.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// Overrides `train.max_steps`.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Train a model on a problem corpus.
    ReasonTrain {
        #[command(flatten)]
        common: Common,
        /// Corpus directory written by `gen-igsm`.
        #[arg(long)]
        corpus: PathBuf,
        /// Overrides `train.max_steps`.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Evaluate a checkpoint on a corpus validation split.
    ReasonEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Aggregate run manifests into scaling tables and plot series.
    Report {
        /// Directory searched recursively for run manifests.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    read_corpus(dir).map_err(|e| match e {
        Error::Io { path, source } => Error::Usage(format!("cannot read corpus file {}: {source}", path.display())),
        other => other,
    })
}

fn gen_igsm(common: &Common) -> Result<bool> {
    let mut cfg: GenIgsmConfig = load_toml(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.generator.seed = seed;
    }
    let corpus = generate_corpus(&cfg.generator, cfg.sizes, common.threads)?;
    write_corpus(&common.out, &corpus)?;
    println!(
        "wrote {} train and {} validation problems to {}",
        corpus.train.len(),
        corpus.val.len(),
        common.out.display()
    );
    Ok(true)
}

fn capacity(common: &Common, max_steps: Option<usize>) -> Result<bool> {
    let mut cfg: CapacityGridConfig = load_toml(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
        cfg.model_seeds = vec![seed];
    }
    if let Some(steps) = max_steps {
        cfg.train.max_steps = steps;
    }
    let result = capacity_experiment(&cfg, &common.out, common.threads, &log)?;
    for m in &result.manifests {
        match (&m.failure, m.metrics.metric) {
            (None, Some(dh)) => println!("{}: {} params, delta_h {dh:.1} bits", m.label, m.metrics.param_count),
            (failure, _) => println!("{}: failed: {}", m.label, failure.as_deref().unwrap_or("no metric")),
        }
    }
    Ok(result.failures() == 0)
}

fn apply_reason_overrides(cfg: &mut ReasonConfig, seed: Option<u64>, max_steps: Option<usize>) {
    if let Some(seed) = seed {
        cfg.model_seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(steps) = max_steps {
        cfg.train.max_steps = steps;
    }
}

fn reason_train_cmd(common: &Common, corpus: &Path, max_steps: Option<usize>) -> Result<bool> {
    let mut cfg: ReasonConfig = load_toml(&common.config)?;
    apply_reason_overrides(&mut cfg, common.seed, max_steps);
    let corpus = load_corpus(corpus)?;
    let (_, manifest) = reason_train(&cfg, &corpus, &common.out, &log)?;
    match &manifest.failure {
        None => {
            println!(
                "{}: trained, final interval loss {:?}",
                manifest.label, manifest.metrics.metric
            );
            Ok(true)
        }
        Some(f) => {
            println!("{}: failed: {f}", manifest.label);
            Ok(false)
        }
    }
}

fn reason_eval_cmd(common: &Common, corpus: &Path, checkpoint: &Path) -> Result<bool> {
    let mut cfg: ReasonConfig = load_toml(&common.config)?;
    apply_reason_overrides(&mut cfg, common.seed, None);
    let corpus = load_corpus(corpus)?;
    if !checkpoint.exists() {
        return Err(Error::Usage(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let (report, _) = reason_eval(&cfg, &corpus, checkpoint, &common.out, common.threads)?;
    println!(
        "{}: accuracy {} ({}/{}, {} forced)",
        cfg.label(),
        report.accuracy,
        report.n_correct,
        report.n_eval,
        report.n_forced
    );
    Ok(true)
}

fn report_cmd(runs: &Path, out: &Path) -> Result<bool> {
    if !runs.is_dir() {
        return Err(Error::Usage(format!("{} is not a directory", runs.display())));
    }
    let report = build_report(runs)?;
    for (path, reason) in &report.skipped {
        eprintln!("warning: skipping {}: {reason}", path.display());
    }
    report.write(out)?;
    println!(
        "{} capacity rows, {} reasoning rows written to {}",
        report.capacity.rows.len(),
        report.reasoning.rows.len(),
        out.display()
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenIgsm { common } => gen_igsm(common),
        Command::Capacity { common, max_steps } => capacity(common, *max_steps),
        Command::ReasonTrain {
            common,
            corpus,
            max_steps,
        } => reason_train_cmd(common, corpus, *max_steps),
        Command::ReasonEval {
            common,
            corpus,
            checkpoint,
        } => reason_eval_cmd(common, corpus, checkpoint),
        Command::Report { runs, out } => report_cmd(runs, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_RUN_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUN_FAILURE })
        }
    }
}
