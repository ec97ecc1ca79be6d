//! Experiments on virtual logical depth: adding effective depth to a small
//! transformer by re-executing its layers with shared weights, then measuring
//! what that does to memorization capacity and to multi-step arithmetic
//! reasoning.
//!
//! * [`numerics`]: tensors, reverse-mode tape, Adam.
//! * [`model`]: layer schedules, the transformer, checkpoints.
//! * [`capacity`]: random-token memorization and entropy accounting.
//! * [`igsm`]: synthetic dependency-graph math problems.
//! * [`train`]: tokenizer, training loop, greedy decoding, scoring.
//! * [`experiment`]: configs, run manifests, scaling tables and reports.

pub mod capacity;
pub mod error;
pub mod experiment;
pub mod igsm;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
