use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ModelConfig, TransformerModel};
use crate::train::{train, StopReason, TrainConfig, TrainOutcome};

use super::{measure_absorbed_entropy, EntropyReport, RandomSequenceDataset, WindowSource};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityOutcome {
    /// Absent when training diverged.
    pub report: Option<EntropyReport>,
    pub training: TrainOutcome,
}

/// Trains a fresh model from `config` on the dataset (windows of
/// `train.context_length` tokens) and measures absorbed entropy.
pub fn run_capacity(
    config: &ModelConfig,
    dataset: &RandomSequenceDataset,
    train_config: &TrainConfig,
    on_interval: impl FnMut(usize, f64, &TransformerModel<f32>) -> Result<()>,
) -> Result<(TransformerModel<f32>, CapacityOutcome)> {
    let mut model = TransformerModel::<f32>::build(config)?;
    let window = train_config.context_length;
    let mut source = WindowSource::new(dataset, window);
    let training = train(&mut model, &mut source, train_config, on_interval)?;
    let report = if training.stop == StopReason::Diverged {
        None
    } else {
        Some(measure_absorbed_entropy(&model, dataset, window)?)
    };
    Ok((model, CapacityOutcome { report, training }))
}
