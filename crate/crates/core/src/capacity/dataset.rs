use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::rng::{self, Rng};
use crate::train::{Batch, BatchSource};

/// Uniform i.i.d. token sequence; each value is exactly one token id.
/// Persisted as `(n, k, seed)` only; the values regenerate bit-identically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSequenceDataset {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    #[serde(skip)]
    values: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

pub fn generate_random_dataset(n: usize, k: usize, seed: u64) -> Result<RandomSequenceDataset> {
    if n < 2 || k < 2 {
        return Err(config_err!("random dataset needs n ≥ 2 and k ≥ 2 (got {n}, {k})"));
    }
    let mut r = rng::stream(seed, "random-sequence", 0);
    let values = (0..k).map(|_| r.random_range(0..n)).collect();
    Ok(RandomSequenceDataset { n, k, seed, values })
}

impl RandomSequenceDataset {
    pub fn from_spec(spec: DatasetSpec) -> Result<Self> {
        generate_random_dataset(spec.n, spec.k, spec.seed)
    }

    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            n: self.n,
            k: self.k,
            seed: self.seed,
        }
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    /// Consecutive non-overlapping windows of `window` tokens (the last may
    /// be shorter). Windows shorter than two tokens score nothing and are
    /// dropped.
    pub fn windows(&self, window: usize) -> Vec<&[usize]> {
        self.values.chunks(window.max(2)).filter(|w| w.len() >= 2).collect()
    }

    /// Positions that are scored under `window`: all but the first token of
    /// each window.
    pub fn predicted_positions(&self, window: usize) -> usize {
        self.windows(window).iter().map(|w| w.len() - 1).sum()
    }
}

/// Serves shuffled windows epoch by epoch.
pub struct WindowSource<'d> {
    windows: Vec<&'d [usize]>,
    order: Vec<usize>,
    cursor: usize,
}

impl<'d> WindowSource<'d> {
    pub fn new(dataset: &'d RandomSequenceDataset, window: usize) -> Self {
        let windows = dataset.windows(window);
        let order = (0..windows.len()).collect();
        WindowSource {
            windows,
            order,
            cursor: usize::MAX,
        }
    }
}

impl BatchSource for WindowSource<'_> {
    fn next_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Batch {
        let mut rows = Vec::with_capacity(batch_size);
        for _ in 0..batch_size.min(self.windows.len()) {
            if self.cursor >= self.order.len() {
                rand::seq::SliceRandom::shuffle(self.order.as_mut_slice(), rng);
                self.cursor = 0;
            }
            let w = self.windows[self.order[self.cursor]];
            self.cursor += 1;
            rows.push((&w[..w.len() - 1], &w[1..]));
        }
        Batch::from_rows(&rows, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_identical() {
        let a = generate_random_dataset(4, 10, 7).unwrap();
        let b = generate_random_dataset(4, 10, 7).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().all(|&v| v < 4));
        assert_ne!(a.values(), generate_random_dataset(4, 10, 8).unwrap().values());
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(generate_random_dataset(1, 10, 0).is_err());
        assert!(generate_random_dataset(4, 1, 0).is_err());
    }

    #[test]
    fn windowing_excludes_first_position_of_each_window() {
        let d = generate_random_dataset(5, 10, 1).unwrap();
        // windows of 4: [4, 4, 2] -> 3 + 3 + 1 scored
        assert_eq!(d.predicted_positions(4), 7);
        // a trailing single token is not scored
        let d = generate_random_dataset(5, 9, 1).unwrap();
        assert_eq!(d.windows(4).len(), 2);
        assert_eq!(d.predicted_positions(4), 6);
    }
}
