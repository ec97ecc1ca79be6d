use std::io::Write as _;
use std::path::Path;

use crate::error::{config_err, Error, Result};
use crate::igsm::Corpus;
use crate::model::{checkpoint, make_schedule, TransformerModel};
use crate::train::{evaluate_accuracy, train, DocumentSource, EvalReport, StopReason, Tokenizer};

use super::config::ReasonConfig;
use super::manifest::{Convergence, MetricUnit, RunKind, RunManifest, RunMetrics};
use super::report::REASONING_TABLE;
use super::table::{ScalingRow, ScalingTable};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.csv";
pub const EVAL_RECORDS_FILE: &str = "eval_records.jsonl";

fn seeds(manifest: &mut RunManifest, config: &ReasonConfig, corpus: &Corpus) {
    manifest.seeds.insert("corpus".into(), corpus.manifest.config.seed);
    manifest.seeds.insert("model".into(), config.model_seed);
    manifest.seeds.insert("train".into(), config.train.seed);
}

/// Trains a fresh model on the corpus training split, checkpointing to
/// `out/model.ckpt` every interval and at the end.
pub fn reason_train(
    config: &ReasonConfig,
    corpus: &Corpus,
    out: &Path,
    log: &dyn Fn(&str),
) -> Result<(TransformerModel<f32>, RunManifest)> {
    let tok = Tokenizer::for_igsm(&corpus.manifest.config)?;
    let model_config = config.model_config(tok.vocab_size())?;
    config.train.validate(model_config.context_length)?;
    let mut source = DocumentSource::new(&tok, &corpus.train, config.train.context_length, config.loss_targets)?;
    let mut manifest = RunManifest::new(
        RunKind::ReasonTrain,
        config.label(),
        &serde_json::json!({ "run": config, "model": model_config, "corpus": corpus.manifest.config }),
        RunMetrics::for_model(&model_config, MetricUnit::Nats),
    )?;
    seeds(&mut manifest, config, corpus);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if out.join(super::manifest::RUN_MANIFEST_FILE).exists() {
        return Err(Error::Usage(format!("{} already holds a run", out.display())));
    }

    let ckpt = out.join(CHECKPOINT_FILE);
    let mut model = TransformerModel::<f32>::build(&model_config)?;
    let outcome = train(&mut model, &mut source, &config.train, |step, loss, m| {
        log(&format!("{}: step {step} loss {loss:.4}", config.label()));
        checkpoint::save(m, &ckpt)
    })?;
    checkpoint::save(&model, &ckpt)?;
    manifest.convergence = Some(Convergence::from(&outcome));
    manifest.metrics.metric = outcome.final_interval_loss().or(outcome.losses.last().copied());
    manifest.metrics.values.insert("steps".into(), outcome.steps as f64);
    if outcome.stop == StopReason::Diverged {
        manifest.failure = outcome.failure.clone().or(Some("diverged".into()));
    }
    manifest.write_new(out)?;
    Ok((model, manifest))
}

/// Refuses checkpoints whose architecture, schedule or vocabulary disagree
/// with the run config and corpus.
pub fn check_checkpoint(config: &ReasonConfig, tok: &Tokenizer, path: &Path) -> Result<()> {
    let header = checkpoint::load_header(path)?;
    if header.config.vocab_size != tok.vocab_size() {
        return Err(config_err!(
            "checkpoint vocabulary has {} tokens, corpus vocabulary has {}",
            header.config.vocab_size,
            tok.vocab_size()
        ));
    }
    let expected = config.model_config(tok.vocab_size())?;
    let mut found = header.config.clone();
    found.seed = expected.seed;
    if found != expected {
        return Err(config_err!(
            "checkpoint model {:?} does not match config {:?}",
            header.config,
            expected
        ));
    }
    if header.schedule != make_schedule(expected.pattern, expected.base_depth, expected.factor)? {
        return Err(config_err!("checkpoint layer schedule does not match config"));
    }
    Ok(())
}

/// Scores a model on the corpus validation split and records the run.
pub fn record_eval(
    config: &ReasonConfig,
    corpus: &Corpus,
    model: &TransformerModel<f32>,
    out: &Path,
    threads: usize,
) -> Result<(EvalReport, RunManifest)> {
    let tok = Tokenizer::for_igsm(&corpus.manifest.config)?;
    let mut manifest = RunManifest::new(
        RunKind::ReasonEval,
        config.label(),
        &serde_json::json!({ "run": config, "model": model.config(), "corpus": corpus.manifest.config }),
        RunMetrics::for_model(model.config(), MetricUnit::Accuracy),
    )?;
    seeds(&mut manifest, config, corpus);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if out.join(super::manifest::RUN_MANIFEST_FILE).exists() {
        return Err(Error::Usage(format!("{} already holds a run", out.display())));
    }
    let report = evaluate_accuracy(model, &tok, &corpus.val, &config.eval, threads)?;
    manifest.metrics.metric = Some(report.accuracy);
    let v = &mut manifest.metrics.values;
    v.insert("n_eval".into(), report.n_eval as f64);
    v.insert("n_correct".into(), report.n_correct as f64);
    v.insert("n_forced".into(), report.n_forced as f64);
    v.insert("n_correct_unforced".into(), report.n_correct_unforced as f64);

    let write = |name: &str, body: &str| {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write(EVAL_SUMMARY_FILE, &report.summary_csv())?;
    write(EVAL_RECORDS_FILE, &report.records_jsonl()?)?;
    manifest.write_new(out)?;

    let row = ScalingRow::from_manifest(&manifest).expect("evaluation always yields an accuracy");
    let table = ScalingTable::new(MetricUnit::Accuracy, [row])?.to_csv()?;
    let path = out.join(REASONING_TABLE);
    let body = if path.exists() {
        table
            .split_once('\n')
            .map_or(String::new(), |(_, rows)| rows.to_string())
    } else {
        table
    };
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    file.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok((report, manifest))
}

/// Loads a checkpoint after the consistency checks and evaluates it.
pub fn reason_eval(
    config: &ReasonConfig,
    corpus: &Corpus,
    checkpoint_path: &Path,
    out: &Path,
    threads: usize,
) -> Result<(EvalReport, RunManifest)> {
    let tok = Tokenizer::for_igsm(&corpus.manifest.config)?;
    check_checkpoint(config, &tok, checkpoint_path)?;
    let model = checkpoint::load::<f32>(checkpoint_path)?;
    record_eval(config, corpus, &model, out, threads)
}
