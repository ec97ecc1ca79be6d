use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// How base layers are re-executed to add depth without adding parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VldPattern {
    None,
    /// Each layer runs `factor` times back to back: `0 0 1 1 2 2`.
    Sequence,
    /// The whole stack runs `factor` times: `0 1 2 0 1 2`.
    Cycle,
    /// The stack runs `factor` times, alternating direction: `0 1 2 2 1 0`.
    InverseCycle,
}

impl VldPattern {
    pub const ALL: [VldPattern; 4] = [
        VldPattern::None,
        VldPattern::Sequence,
        VldPattern::Cycle,
        VldPattern::InverseCycle,
    ];

    pub const REUSE: [VldPattern; 3] = [VldPattern::Sequence, VldPattern::Cycle, VldPattern::InverseCycle];

    pub fn as_str(self) -> &'static str {
        match self {
            VldPattern::None => "none",
            VldPattern::Sequence => "sequence",
            VldPattern::Cycle => "cycle",
            VldPattern::InverseCycle => "inverse_cycle",
        }
    }
}

impl fmt::Display for VldPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VldPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VldPattern::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| config_err!("unknown pattern {s:?}"))
    }
}

/// Execution order of base layers for one forward pass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub base_depth: usize,
    pub factor: usize,
    pub order: Vec<usize>,
}

impl LayerSchedule {
    pub fn effective_depth(&self) -> usize {
        self.order.len()
    }

    pub fn virtual_depth(&self) -> usize {
        self.order.len() - self.base_depth
    }
}

pub fn make_schedule(pattern: VldPattern, base_depth: usize, factor: usize) -> Result<LayerSchedule> {
    if base_depth == 0 || factor == 0 {
        return Err(config_err!(
            "schedule needs base_depth ≥ 1 and factor ≥ 1 (got {base_depth}, {factor})"
        ));
    }
    if pattern == VldPattern::None && factor != 1 {
        return Err(config_err!("pattern none only admits factor 1, got {factor}"));
    }
    let order = match pattern {
        VldPattern::None => (0..base_depth).collect(),
        VldPattern::Sequence => (0..base_depth).flat_map(|i| std::iter::repeat_n(i, factor)).collect(),
        VldPattern::Cycle => (0..factor).flat_map(|_| 0..base_depth).collect(),
        VldPattern::InverseCycle => (0..factor)
            .flat_map(|rep| {
                let forward = rep % 2 == 0;
                (0..base_depth).map(move |i| if forward { i } else { base_depth - 1 - i })
            })
            .collect(),
    };
    Ok(LayerSchedule {
        base_depth,
        factor,
        order,
    })
}
