//! Knowledge capacity as absorbed entropy: train on a uniform random token
//! sequence, then compare the data entropy with the model's summed softmax
//! entropy over the same positions.

mod dataset;
mod entropy;
mod run;

pub use dataset::{generate_random_dataset, DatasetSpec, RandomSequenceDataset, WindowSource};
pub use entropy::{
    dataset_entropy, entropy_bits, measure_absorbed_entropy, report_from_entropies, softmax_entropy_bits, EntropyReport,
};
pub use run::{run_capacity, CapacityOutcome};
