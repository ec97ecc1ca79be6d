use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::model::TransformerModel;
use crate::numerics::{AdamConfig, AdamState, Real, Tape};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Longest training row; must not exceed the model context.
    pub context_length: usize,
    pub max_steps: usize,
    /// Steps per loss-averaging interval for the plateau check.
    pub eval_interval: usize,
    /// Relative improvement of the interval mean loss below which an
    /// interval counts as flat.
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
    /// Consecutive flat intervals that end training.
    #[serde(default = "default_patience")]
    pub convergence_patience: usize,
    #[serde(default)]
    pub warmup_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> f64 {
    1e-3
}

fn default_patience() -> usize {
    3
}

impl TrainConfig {
    pub fn validate(&self, model_context: usize) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(config_err!("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.eval_interval == 0 || self.convergence_patience == 0 {
            return Err(config_err!(
                "batch_size, eval_interval and convergence_patience must be positive"
            ));
        }
        if self.context_length < 2 || self.context_length > model_context {
            return Err(config_err!(
                "training context {} must lie in [2, {model_context}]",
                self.context_length
            ));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64
        } else {
            self.learning_rate
        }
    }
}

/// One padded training batch: `rows` sequences of `seq` tokens; targets that
/// are `None` (padding) are not scored.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub tokens: Vec<usize>,
    pub targets: Vec<Option<usize>>,
    pub rows: usize,
    pub seq: usize,
}

impl Batch {
    /// Packs `(input, target)` rows, right-padding to the longest row.
    pub fn from_rows(rows: &[(&[usize], &[usize])], pad: usize) -> Batch {
        let seq = rows.iter().map(|(x, _)| x.len()).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(rows.len() * seq);
        let mut targets = Vec::with_capacity(rows.len() * seq);
        for (x, y) in rows {
            tokens.extend_from_slice(x);
            targets.extend(y.iter().copied().map(Some));
            tokens.extend(std::iter::repeat_n(pad, seq - x.len()));
            targets.extend(std::iter::repeat_n(None, seq - y.len()));
        }
        Batch {
            tokens,
            targets,
            rows: rows.len(),
            seq,
        }
    }
}

/// Supplies training batches; the trainer owns the shuffling rng.
pub trait BatchSource {
    fn next_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Batch;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxSteps,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub steps: usize,
    pub stop: StopReason,
    /// Loss of every step, nats per scored token.
    pub losses: Vec<f64>,
    /// Mean loss of each completed interval.
    pub interval_means: Vec<f64>,
    pub failure: Option<String>,
}

impl TrainOutcome {
    pub fn final_interval_loss(&self) -> Option<f64> {
        self.interval_means.last().copied()
    }
}

/// Plateau detector over interval-mean losses.
#[derive(Clone, Debug)]
pub struct Plateau {
    threshold: f64,
    patience: usize,
    best: Option<f64>,
    flat: usize,
}

impl Plateau {
    pub fn new(threshold: f64, patience: usize) -> Self {
        Plateau {
            threshold,
            patience,
            best: None,
            flat: 0,
        }
    }

    /// Feeds one interval mean; returns true once training has plateaued.
    pub fn observe(&mut self, mean: f64) -> bool {
        match self.best {
            Some(best) if best > 0.0 && (best - mean) / best >= self.threshold => {
                self.flat = 0;
                self.best = Some(mean);
            }
            Some(best) => {
                self.flat += 1;
                self.best = Some(best.min(mean));
            }
            None => self.best = Some(mean),
        }
        self.flat >= self.patience
    }
}

/// Minimizes next-token cross-entropy with Adam until the plateau rule or the
/// step cap fires. `on_interval` sees the step, the interval mean loss and the
/// model after every `eval_interval` steps (e.g. to checkpoint). A non-finite
/// loss stops the run and is reported in the outcome rather than as an error,
/// so callers can record the failed run.
pub fn train<T: Real, S: BatchSource>(
    model: &mut TransformerModel<T>,
    source: &mut S,
    config: &TrainConfig,
    mut on_interval: impl FnMut(usize, f64, &TransformerModel<T>) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate(model.config().context_length)?;
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(config.learning_rate))?;
    let mut rng = rng::stream(config.seed, "batches", 0);
    let mut plateau = Plateau::new(config.convergence_threshold, config.convergence_patience);
    let mut losses = Vec::new();
    let mut interval_means = Vec::new();
    let mut running = 0.0;
    model.params.zero_grads();

    for step in 0..config.max_steps {
        let batch = source.next_batch(config.batch_size, &mut rng);
        if batch.seq > config.context_length {
            return Err(config_err!(
                "batch row of {} tokens exceeds training context {}",
                batch.seq,
                config.context_length
            ));
        }
        let result = (|| -> Result<f64> {
            let mut tape = Tape::new();
            let loss = model.loss(&mut tape, &batch.tokens, &batch.targets, batch.rows, batch.seq)?;
            let value = tape.value(loss).item().as_f64();
            tape.backward(loss, &mut model.params)?;
            adam.config.learning_rate = config.lr_at(step);
            adam.step(&mut model.params)?;
            Ok(value)
        })();
        let loss = match result {
            Ok(v) => v,
            Err(Error::NonFinite { context }) => {
                return Ok(TrainOutcome {
                    steps: step,
                    stop: StopReason::Diverged,
                    losses,
                    interval_means,
                    failure: Some(format!("non-finite value in {context} at step {step}")),
                });
            }
            Err(e) => return Err(e),
        };
        losses.push(loss);
        running += loss;
        if (step + 1) % config.eval_interval == 0 {
            let mean = running / config.eval_interval as f64;
            running = 0.0;
            interval_means.push(mean);
            on_interval(step + 1, mean, model)?;
            if plateau.observe(mean) {
                return Ok(TrainOutcome {
                    steps: step + 1,
                    stop: StopReason::Converged,
                    losses,
                    interval_means,
                    failure: None,
                });
            }
        }
    }
    Ok(TrainOutcome {
        steps: config.max_steps,
        stop: StopReason::MaxSteps,
        losses,
        interval_means,
        failure: None,
    })
}
