//! Incremental inference with a key/value cache per schedule position.

use crate::error::{data_err, Result};
use crate::numerics::kernels::{axpy, dot, gelu, normalize_row, softmax_row};
use crate::numerics::{ParamId, Real};

use super::transformer::LN_EPS;
use super::TransformerModel;

struct Cache<T> {
    keys: Vec<T>,
    values: Vec<T>,
}

/// Feeds tokens one at a time, reusing cached keys and values. Each schedule
/// position keeps its own cache even when it executes a shared block.
pub struct Decoder<'m, T> {
    model: &'m TransformerModel<T>,
    caches: Vec<Cache<T>>,
    len: usize,
}

fn affine_norm<T: Real>(x: &[T], g: &[T], b: &[T], out: &mut [T]) {
    normalize_row(x, out, T::from_f64(LN_EPS));
    for j in 0..out.len() {
        out[j] = out[j] * g[j] + b[j];
    }
}

/// `out = bias + x · w` for a row vector `x` and `w` of shape `[x.len(), out.len()]`.
fn linear<T: Real>(x: &[T], w: &[T], bias: &[T], out: &mut [T]) {
    let n = out.len();
    out.copy_from_slice(bias);
    for (k, &xk) in x.iter().enumerate() {
        axpy(xk, &w[k * n..(k + 1) * n], out);
    }
}

impl<'m, T: Real> Decoder<'m, T> {
    pub fn new(model: &'m TransformerModel<T>) -> Self {
        let caches = model
            .schedule()
            .order
            .iter()
            .map(|_| Cache {
                keys: Vec::new(),
                values: Vec::new(),
            })
            .collect();
        Decoder { model, caches, len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn model_context(&self) -> usize {
        self.model.config().context_length
    }

    fn p(&self, id: ParamId) -> &'m [T] {
        self.model.params.value(id).data()
    }

    /// Appends one token and returns the next-token logits.
    pub fn push(&mut self, token: usize) -> Result<Vec<T>> {
        let cfg = self.model.config();
        if self.len >= cfg.context_length {
            return Err(data_err!("decoder context of {} is full", cfg.context_length));
        }
        if token >= cfg.vocab_size {
            return Err(data_err!("token id {token} outside vocabulary of {}", cfg.vocab_size));
        }
        let (c, heads) = (cfg.embed_dim, cfg.head_count);
        let d = c / heads;
        let l = &self.model.layout;
        let t = self.len;
        let scale = T::from_f64(1.0 / (d as f64).sqrt());

        let mut x: Vec<T> = self.p(l.tok_emb)[token * c..(token + 1) * c].to_vec();
        axpy(T::one(), &self.p(l.pos_emb)[t * c..(t + 1) * c], &mut x);

        let mut h = vec![T::zero(); c];
        let mut qkv = vec![T::zero(); 3 * c];
        let mut att = vec![T::zero(); c];
        let mut y = vec![T::zero(); c];
        let mut scores = vec![T::zero(); t + 1];
        let mut hidden = vec![T::zero(); cfg.mlp_hidden_dim];

        for (pos, &layer) in self.model.schedule().order.iter().enumerate() {
            let b = &l.blocks[layer];
            affine_norm(&x, self.p(b.ln1_g), self.p(b.ln1_b), &mut h);
            linear(&h, self.p(b.qkv_w), self.p(b.qkv_b), &mut qkv);
            let cache = &mut self.caches[pos];
            cache.keys.extend_from_slice(&qkv[c..2 * c]);
            cache.values.extend_from_slice(&qkv[2 * c..]);
            att.iter_mut().for_each(|v| *v = T::zero());
            for hd in 0..heads {
                let q = &qkv[hd * d..(hd + 1) * d];
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(q, &cache.keys[j * c + hd * d..j * c + (hd + 1) * d]) * scale;
                }
                softmax_row(&mut scores, t + 1);
                let out = &mut att[hd * d..(hd + 1) * d];
                for (j, &pj) in scores.iter().enumerate() {
                    axpy(pj, &cache.values[j * c + hd * d..j * c + (hd + 1) * d], out);
                }
            }
            linear(&att, self.p(b.proj_w), self.p(b.proj_b), &mut y);
            axpy(T::one(), &y, &mut x);

            affine_norm(&x, self.p(b.ln2_g), self.p(b.ln2_b), &mut h);
            linear(&h, self.p(b.fc_w), self.p(b.fc_b), &mut hidden);
            hidden.iter_mut().for_each(|v| *v = gelu(*v));
            linear(&hidden, self.p(b.out_w), self.p(b.out_b), &mut y);
            axpy(T::one(), &y, &mut x);
        }
        affine_norm(&x, self.p(l.lnf_g), self.p(l.lnf_b), &mut h);
        let mut logits = vec![T::zero(); cfg.vocab_size];
        linear(&h, self.p(l.head_w), self.p(l.head_b), &mut logits);
        self.len += 1;
        Ok(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, VldPattern};

    #[test]
    fn cached_decoding_matches_full_forward() {
        for pattern in [VldPattern::None, VldPattern::Sequence, VldPattern::InverseCycle] {
            let factor = if pattern == VldPattern::None { 1 } else { 3 };
            let cfg = ModelConfig {
                vocab_size: 13,
                context_length: 10,
                embed_dim: 12,
                head_count: 3,
                mlp_hidden_dim: 20,
                base_depth: 2,
                pattern,
                factor,
                seed: 9,
            };
            let m = TransformerModel::<f64>::build(&cfg).unwrap();
            let toks = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3];
            let full = m.logits(&toks).unwrap();
            let mut dec = Decoder::new(&m);
            for (i, &tok) in toks.iter().enumerate() {
                let row = dec.push(tok).unwrap();
                for (a, b) in row.iter().zip(&full.data()[i * 13..(i + 1) * 13]) {
                    assert!((a - b).abs() < 1e-10, "{pattern} pos {i}: {a} vs {b}");
                }
            }
            assert!(dec.push(0).is_err());
        }
    }
}
