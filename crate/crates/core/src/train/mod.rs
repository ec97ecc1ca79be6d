//! Next-token training, greedy decoding and answer scoring.

mod documents;
mod eval;
mod tokenizer;
mod trainer;

pub use documents::{DocumentSource, LossTargets};
pub use eval::{evaluate_accuracy, extract_answer, greedy_decode, EvalConfig, EvalRecord, EvalReport};
pub use tokenizer::{Tokenizer, TokenizerMode, ANSWER, EOS, PAD, SOLUTION};
pub use trainer::{train, Batch, BatchSource, Plateau, StopReason, TrainConfig, TrainOutcome};
