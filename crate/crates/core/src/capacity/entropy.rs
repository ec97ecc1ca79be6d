use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::model::TransformerModel;
use crate::numerics::{Real, Tape};

use super::RandomSequenceDataset;

/// Absorbed-entropy accounting for one model on one random dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h1_bits: f64,
    pub h2_bits: f64,
    pub delta_h_bits: f64,
    pub predicted_positions: usize,
    pub param_count: usize,
    pub bits_per_param: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_window_entropy: Option<Vec<f64>>,
}

/// Entropy of the data over `predicted_positions` scored tokens.
pub fn dataset_entropy(n: usize, predicted_positions: usize) -> f64 {
    predicted_positions as f64 * (n as f64).log2()
}

/// Shannon entropy in bits of one distribution, with `0 log 0 = 0`.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

/// Softmax of `logits` in 64-bit and its entropy in bits.
pub fn softmax_entropy_bits<T: Real>(logits: &[T], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(logits.iter().map(|v| v.as_f64()));
    let max = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in scratch.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in scratch.iter_mut() {
        *v /= sum;
    }
    entropy_bits(scratch)
}

/// Builds the report from per-position entropies (bits), checking that none
/// exceeds `log2 n` beyond float tolerance.
pub fn report_from_entropies(
    n: usize,
    position_entropies: impl IntoIterator<Item = f64>,
    param_count: usize,
) -> Result<EntropyReport> {
    let cap = (n as f64).log2();
    let mut h2 = 0.0;
    let mut positions = 0usize;
    for h in position_entropies {
        if h > cap * (1.0 + 1e-9) + 1e-12 {
            return Err(config_err!(
                "position entropy {h} exceeds log2({n}) = {cap}; distribution is not over {n} values"
            ));
        }
        h2 += h;
        positions += 1;
    }
    let h1 = dataset_entropy(n, positions);
    let delta = h1 - h2;
    Ok(EntropyReport {
        h1_bits: h1,
        h2_bits: h2,
        delta_h_bits: delta,
        predicted_positions: positions,
        param_count,
        bits_per_param: if param_count > 0 {
            delta / param_count as f64
        } else {
            0.0
        },
        per_window_entropy: None,
    })
}

/// Feeds the dataset through the model window by window (the training
/// windowing) and sums the full softmax entropy at every scored position.
pub fn measure_absorbed_entropy<T: Real>(
    model: &TransformerModel<T>,
    dataset: &RandomSequenceDataset,
    window: usize,
) -> Result<EntropyReport> {
    let cfg = model.config();
    if cfg.vocab_size != dataset.n {
        return Err(config_err!(
            "model vocabulary {} differs from dataset alphabet {}",
            cfg.vocab_size,
            dataset.n
        ));
    }
    if window < 2 || window - 1 > cfg.context_length {
        return Err(config_err!(
            "window {window} does not fit context {}",
            cfg.context_length
        ));
    }
    const GROUP: usize = 16;
    let windows = dataset.windows(window);
    let mut per_window = Vec::with_capacity(windows.len());
    let mut all = Vec::with_capacity(dataset.k);
    let mut scratch = Vec::new();
    let v = cfg.vocab_size;
    let mut i = 0;
    while i < windows.len() {
        // group equal-length windows into one batch
        let len = windows[i].len();
        let mut j = i;
        while j < windows.len() && j - i < GROUP && windows[j].len() == len {
            j += 1;
        }
        let seq = len - 1;
        let tokens: Vec<usize> = windows[i..j].iter().flat_map(|w| w[..seq].iter().copied()).collect();
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &tokens, j - i, seq)?;
        for row_block in tape.value(logits).data().chunks(seq * v) {
            let mut sum = 0.0;
            for row in row_block.chunks(v) {
                let h = softmax_entropy_bits(row, &mut scratch);
                all.push(h);
                sum += h;
            }
            per_window.push(sum);
        }
        i = j;
    }
    let mut report = report_from_entropies(dataset.n, all, model.param_count())?;
    report.per_window_entropy = Some(per_window);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_entropy_cases() {
        assert_eq!(dataset_entropy(4, 10), 20.0);
        assert_eq!(dataset_entropy(2, 1), 1.0);
        let paper = dataset_entropy(50257, 640_000);
        assert!((paper - 9.99e6).abs() / 9.99e6 < 1e-3, "{paper}");
    }

    #[test]
    fn analytic_distributions() {
        let uniform = vec![0.25; 4];
        let r = report_from_entropies(4, (0..10).map(|_| entropy_bits(&uniform)), 1).unwrap();
        assert_eq!(r.h2_bits, r.h1_bits);
        assert_eq!(r.delta_h_bits, 0.0);

        let onehot = [0.0, 1.0, 0.0, 0.0];
        let r = report_from_entropies(4, (0..10).map(|_| entropy_bits(&onehot)), 1).unwrap();
        assert_eq!(r.h2_bits, 0.0);
        assert_eq!(r.delta_h_bits, r.h1_bits);

        let coin = [0.5, 0.5, 0.0, 0.0];
        let r = report_from_entropies(4, (0..10).map(|_| entropy_bits(&coin)), 1).unwrap();
        assert_eq!(r.h2_bits, 10.0);
        assert_eq!(r.h1_bits, 20.0);
    }

    #[test]
    fn entropy_above_alphabet_bound_is_rejected() {
        assert!(report_from_entropies(2, [1.5], 1).is_err());
    }
}
