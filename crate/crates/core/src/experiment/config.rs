use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::capacity::DatasetSpec;
use crate::error::{config_err, Error, Result};
use crate::igsm::{CorpusSizes, GenConfig};
use crate::model::{ModelConfig, VldPattern};
use crate::train::{EvalConfig, LossTargets, TrainConfig};

/// Reads a TOML config; unreadable or malformed files are configuration errors.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| config_err!("{}: {e}", path.display()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Serde(e.to_string()))
}

/// Architecture without the vocabulary, which comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub embed_dim: usize,
    pub head_count: usize,
    pub mlp_hidden_dim: usize,
    pub base_depth: usize,
    /// Defaults to the training context.
    #[serde(default)]
    pub context_length: Option<usize>,
}

impl ModelSpec {
    pub fn resolve(
        &self,
        vocab_size: usize,
        train_context: usize,
        pattern: VldPattern,
        factor: usize,
        seed: u64,
    ) -> ModelConfig {
        ModelConfig {
            vocab_size,
            context_length: self.context_length.unwrap_or(train_context),
            embed_dim: self.embed_dim,
            head_count: self.head_count,
            mlp_hidden_dim: self.mlp_hidden_dim,
            base_depth: self.base_depth,
            pattern,
            factor,
            seed,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            format!(
                "c{}h{}m{}d{}",
                self.embed_dim, self.head_count, self.mlp_hidden_dim, self.base_depth
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenIgsmConfig {
    pub generator: GenConfig,
    pub sizes: CorpusSizes,
}

/// Grid of capacity runs sharing one random dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityGridConfig {
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_patterns")]
    pub patterns: Vec<VldPattern>,
    #[serde(default = "default_factors")]
    pub factors: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub model_seeds: Vec<u64>,
}

fn default_patterns() -> Vec<VldPattern> {
    vec![VldPattern::None]
}

fn default_factors() -> Vec<usize> {
    vec![1]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// One resolved grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    pub model_label: String,
    pub model: ModelConfig,
}

impl CapacityGridConfig {
    /// Expands the grid. Factor 1 runs the base layers once under every
    /// pattern, so all factor-1 points collapse into one `none` run.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.models.is_empty() || self.patterns.is_empty() || self.factors.is_empty() || self.model_seeds.is_empty()
        {
            return Err(config_err!("capacity grid is empty"));
        }
        let mut points: Vec<GridPoint> = Vec::new();
        for spec in &self.models {
            for &seed in &self.model_seeds {
                for &pattern in &self.patterns {
                    for &factor in &self.factors {
                        if pattern == VldPattern::None && factor != 1 {
                            return Err(config_err!("pattern none only admits factor 1"));
                        }
                        let pattern = if factor == 1 { VldPattern::None } else { pattern };
                        let model = spec.resolve(self.dataset.n, self.train.context_length, pattern, factor, seed);
                        model.validate()?;
                        let label = format!("{}-{}x{}-s{seed}", spec.label(), pattern, factor);
                        if !points.iter().any(|p| p.label == label) {
                            points.push(GridPoint {
                                label,
                                model_label: spec.label(),
                                model,
                            });
                        }
                    }
                }
            }
        }
        Ok(points)
    }
}

/// Training (and evaluation) of one model on a problem corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasonConfig {
    pub model: ModelSpec,
    #[serde(default = "default_pattern")]
    pub pattern: VldPattern,
    #[serde(default = "default_factor")]
    pub factor: usize,
    #[serde(default)]
    pub model_seed: u64,
    pub train: TrainConfig,
    #[serde(default)]
    pub loss_targets: LossTargets,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_pattern() -> VldPattern {
    VldPattern::None
}

fn default_factor() -> usize {
    1
}

impl ReasonConfig {
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let m = self.model.resolve(
            vocab_size,
            self.train.context_length,
            self.pattern,
            self.factor,
            self.model_seed,
        );
        m.validate()?;
        crate::model::make_schedule(m.pattern, m.base_depth, m.factor)?;
        Ok(m)
    }

    pub fn label(&self) -> String {
        format!(
            "{}-{}x{}-s{}",
            self.model.label(),
            self.pattern,
            self.factor,
            self.model_seed
        )
    }
}
