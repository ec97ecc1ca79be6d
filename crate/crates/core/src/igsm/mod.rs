//! Synthetic grade-school math problems over a dependency graph of
//! quantities, with every operation reduced mod 23.
//!
//! A problem states one sentence per item quantity, asks for one target, and
//! carries a step-by-step solution. Location totals ("Music Room's
//! Backpack") are implicit sums of the items present at that location.

mod corpus;
mod graph;
mod hash;
mod render;
mod verify;

pub use corpus::{
    generate_corpus, generate_problem, read_corpus, write_corpus, Census, Corpus, CorpusManifest, CorpusSizes,
    MANIFEST_FILE, TRAIN_FILE, VAL_FILE,
};
pub use graph::{
    evaluate_graph, generate_graph, mod_add, mod_mul, mod_sub, Def, DependencyGraph, GraphNode, NodeId, Quantity,
    LETTERS, MODULUS,
};
pub use hash::{skeleton, skeleton_digest, template_hash, HASH_BUCKETS};
pub use render::{fixture_graph, render_problem, render_with, Problem, FIXTURE_LETTERS};
pub use verify::{parse_solution, verify_problem, BinOp, Clause, Expr, Operand, SolutionStep, VerifyFailure};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub max_ops: usize,
    #[serde(default = "default_max_edges")]
    pub max_edges: usize,
    /// Rounds of adjacent-transposition shuffling over question sentences.
    #[serde(default = "default_permutation_level")]
    pub permutation_level: usize,
    /// Problems whose template hash is at or above this value are dropped.
    #[serde(default = "default_hash_filter_max")]
    pub hash_filter_max: u32,
    #[serde(default = "default_modulus")]
    pub modulus: u32,
    #[serde(default = "default_locations")]
    pub locations: Vec<String>,
    #[serde(default = "default_items")]
    pub items: Vec<String>,
    /// Item family whose per-location total is named `<location>'s <category>`.
    #[serde(default = "default_category")]
    pub category: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_edges() -> usize {
    20
}

fn default_permutation_level() -> usize {
    5
}

fn default_hash_filter_max() -> u32 {
    17
}

fn default_modulus() -> u32 {
    MODULUS
}

fn default_category() -> String {
    "Backpack".into()
}

fn default_locations() -> Vec<String> {
    [
        "Music Room",
        "Anthropology Classroom",
        "Literature Classroom",
        "Photography Studio",
        "Chemistry Lab",
        "Art Studio",
        "Dance Studio",
        "History Classroom",
        "Computer Lab",
        "Biology Lab",
        "Geography Classroom",
        "Drama Room",
    ]
    .map(String::from)
    .to_vec()
}

fn default_items() -> Vec<String> {
    [
        "Clear Backpack",
        "Toy Backpack",
        "Musical Instrument Backpack",
        "Diaper Backpack",
        "Hiking Backpack",
        "Laptop Backpack",
        "School Backpack",
        "Camera Backpack",
    ]
    .map(String::from)
    .to_vec()
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_ops: 15,
            max_edges: default_max_edges(),
            permutation_level: default_permutation_level(),
            hash_filter_max: default_hash_filter_max(),
            modulus: MODULUS,
            locations: default_locations(),
            items: default_items(),
            category: default_category(),
            seed: 0,
        }
    }
}

/// Fragments that would make rendered text ambiguous to parse.
const RESERVED: &[&str] = &["'s", " and ", " as ", "Define", ".", ";", ":", "=", "+", "×"];

impl GenConfig {
    pub fn with_max_ops(max_ops: usize) -> Self {
        GenConfig {
            max_ops,
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_ops == 0 {
            return Err(config_err!("max_ops must be at least 1"));
        }
        if self.modulus != MODULUS {
            return Err(config_err!("modulus is fixed at {MODULUS}, got {}", self.modulus));
        }
        if self.hash_filter_max == 0 || self.hash_filter_max > HASH_BUCKETS {
            return Err(config_err!("hash_filter_max must lie in [1, {HASH_BUCKETS}]"));
        }
        if self.locations.is_empty() || self.items.is_empty() {
            return Err(config_err!("vocabulary needs at least one location and one item"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for word in self.locations.iter().chain(&self.items).chain([&self.category]) {
            let clean = !word.is_empty()
                && word.trim() == word
                && !word.contains("  ")
                && !word.chars().any(|c| c.is_ascii_digit() || c == '-')
                && !RESERVED.iter().any(|r| word.contains(r));
            if !clean {
                return Err(config_err!(
                    "vocabulary entry {word:?} is empty or contains reserved text"
                ));
            }
        }
        for word in self.locations.iter().chain(&self.items) {
            if !seen.insert(word) {
                return Err(config_err!("duplicate vocabulary entry {word:?}"));
            }
        }
        if self.items.contains(&self.category) {
            return Err(config_err!("item names must differ from the category name"));
        }
        Ok(())
    }
}
