//! Decoder-only transformer with weight-shared layer repetition.

pub mod checkpoint;
mod config;
mod decoder;
mod schedule;
mod transformer;

pub use config::ModelConfig;
pub use decoder::Decoder;
pub use schedule::{make_schedule, LayerSchedule, VldPattern};
pub use transformer::TransformerModel;
