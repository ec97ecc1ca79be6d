use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

use super::VldPattern;

fn default_factor() -> usize {
    1
}

fn default_pattern() -> VldPattern {
    VldPattern::None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_length: usize,
    pub embed_dim: usize,
    pub head_count: usize,
    pub mlp_hidden_dim: usize,
    pub base_depth: usize,
    #[serde(default = "default_pattern")]
    pub pattern: VldPattern,
    #[serde(default = "default_factor")]
    pub factor: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("context_length", self.context_length),
            ("embed_dim", self.embed_dim),
            ("head_count", self.head_count),
            ("mlp_hidden_dim", self.mlp_hidden_dim),
            ("base_depth", self.base_depth),
            ("factor", self.factor),
        ] {
            if v == 0 {
                return Err(config_err!("{name} must be positive"));
            }
        }
        if !self.embed_dim.is_multiple_of(self.head_count) {
            return Err(config_err!(
                "embed_dim {} is not divisible by head_count {}",
                self.embed_dim,
                self.head_count
            ));
        }
        Ok(())
    }

    pub fn effective_depth(&self) -> usize {
        self.base_depth * self.factor
    }

    /// Parameter count implied by the configuration alone.
    pub fn param_count(&self) -> usize {
        let (v, t, c, h) = (
            self.vocab_size,
            self.context_length,
            self.embed_dim,
            self.mlp_hidden_dim,
        );
        let block = 2 * c + (c * 3 * c + 3 * c) + (c * c + c) + 2 * c + (c * h + h) + (h * c + c);
        v * c + t * c + self.base_depth * block + 2 * c + (c * v + v)
    }

    /// Same model with a different reuse pattern.
    pub fn with_reuse(&self, pattern: VldPattern, factor: usize) -> Self {
        ModelConfig {
            pattern,
            factor,
            ..self.clone()
        }
    }

    pub fn label(&self) -> String {
        format!(
            "d{}-c{}-m{}-{}x{}",
            self.base_depth, self.embed_dim, self.mlp_hidden_dim, self.pattern, self.factor
        )
    }
}
