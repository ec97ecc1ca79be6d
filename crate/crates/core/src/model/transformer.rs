use rand_distr::{Distribution, Normal};

use crate::error::{config_err, data_err, Result};
use crate::numerics::{ParamId, ParameterStore, Real, Tape, Tensor, Var};
use crate::rng;

use super::{make_schedule, LayerSchedule, ModelConfig, VldPattern};

pub(crate) const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug)]
pub(crate) struct BlockParams {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub qkv_w: ParamId,
    pub qkv_b: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub fc_w: ParamId,
    pub fc_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub blocks: Vec<BlockParams>,
    pub lnf_g: ParamId,
    pub lnf_b: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

/// Pre-norm decoder-only transformer whose blocks run in the order given by
/// its [`LayerSchedule`]. Blocks that appear several times in the schedule
/// share one set of parameters.
#[derive(Clone, Debug)]
pub struct TransformerModel<T> {
    config: ModelConfig,
    schedule: LayerSchedule,
    pub params: ParameterStore<T>,
    pub(crate) layout: Layout,
}

impl<T: Real> TransformerModel<T> {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let schedule = make_schedule(config.pattern, config.base_depth, config.factor)?;
        let (v, t, c, h) = (
            config.vocab_size,
            config.context_length,
            config.embed_dim,
            config.mlp_hidden_dim,
        );
        let resid_std = INIT_STD / (2.0 * config.base_depth as f64).sqrt();
        let mut params = ParameterStore::new();
        let mut index = 0u64;
        let mut add = |name: String, shape: &[usize], init: Init| -> Result<ParamId> {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Normal(std) => {
                    let mut r = rng::stream(config.seed, "init", index);
                    let dist = Normal::new(0.0, std).expect("positive std");
                    (0..n).map(|_| dist.sample(&mut r)).collect()
                }
            };
            index += 1;
            params.register(&name, Tensor::from_f64(shape, &data)?)
        };

        let tok_emb = add("tok_emb".into(), &[v, c], Init::Normal(INIT_STD))?;
        let pos_emb = add("pos_emb".into(), &[t, c], Init::Normal(INIT_STD))?;
        let mut blocks = Vec::with_capacity(config.base_depth);
        for i in 0..config.base_depth {
            let p = |s: &str| format!("blocks.{i}.{s}");
            blocks.push(BlockParams {
                ln1_g: add(p("ln1.g"), &[c], Init::Ones)?,
                ln1_b: add(p("ln1.b"), &[c], Init::Zeros)?,
                qkv_w: add(p("attn.qkv.w"), &[c, 3 * c], Init::Normal(INIT_STD))?,
                qkv_b: add(p("attn.qkv.b"), &[3 * c], Init::Zeros)?,
                proj_w: add(p("attn.proj.w"), &[c, c], Init::Normal(resid_std))?,
                proj_b: add(p("attn.proj.b"), &[c], Init::Zeros)?,
                ln2_g: add(p("ln2.g"), &[c], Init::Ones)?,
                ln2_b: add(p("ln2.b"), &[c], Init::Zeros)?,
                fc_w: add(p("mlp.fc.w"), &[c, h], Init::Normal(INIT_STD))?,
                fc_b: add(p("mlp.fc.b"), &[h], Init::Zeros)?,
                out_w: add(p("mlp.proj.w"), &[h, c], Init::Normal(resid_std))?,
                out_b: add(p("mlp.proj.b"), &[c], Init::Zeros)?,
            });
        }
        let lnf_g = add("ln_f.g".into(), &[c], Init::Ones)?;
        let lnf_b = add("ln_f.b".into(), &[c], Init::Zeros)?;
        let head_w = add("head.w".into(), &[c, v], Init::Normal(INIT_STD))?;
        let head_b = add("head.b".into(), &[v], Init::Zeros)?;
        Ok(TransformerModel {
            config: config.clone(),
            schedule,
            params,
            layout: Layout {
                tok_emb,
                pos_emb,
                blocks,
                lnf_g,
                lnf_b,
                head_w,
                head_b,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schedule(&self) -> &LayerSchedule {
        &self.schedule
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn effective_depth(&self) -> usize {
        self.schedule.effective_depth()
    }

    pub fn virtual_depth(&self) -> usize {
        self.schedule.virtual_depth()
    }

    /// Names of the parameters owned by base block `i`.
    pub fn block_param_names(&self, i: usize) -> Vec<String> {
        let prefix = format!("blocks.{i}.");
        self.params
            .iter()
            .filter(|p| p.name.starts_with(&prefix))
            .map(|p| p.name.clone())
            .collect()
    }

    /// Records the forward pass for a `[batch, seq]` block of token ids and
    /// returns logits of shape `[batch, seq, vocab]`.
    pub fn forward(&self, tape: &mut Tape<T>, tokens: &[usize], batch: usize, seq: usize) -> Result<Var> {
        let cfg = &self.config;
        if seq == 0 || batch == 0 || tokens.len() != batch * seq {
            return Err(config_err!(
                "forward: {} tokens do not form a [{batch}, {seq}] batch",
                tokens.len()
            ));
        }
        if seq > cfg.context_length {
            return Err(data_err!(
                "sequence of {seq} tokens exceeds context length {}",
                cfg.context_length
            ));
        }
        let l = &self.layout;
        let p = |tape: &mut Tape<T>, id: ParamId| tape.param(&self.params, id);

        let tok = p(tape, l.tok_emb)?;
        let tok = tape.embed(tok, tokens, &[batch, seq])?;
        let pos_ids: Vec<usize> = (0..seq).collect();
        let pos = p(tape, l.pos_emb)?;
        let pos = tape.embed(pos, &pos_ids, &[seq])?;
        let mut x = tape.add(tok, pos)?;

        let heads = cfg.head_count;
        let att_scale = 1.0 / ((cfg.embed_dim / heads) as f64).sqrt();
        for &layer in &self.schedule.order {
            let b = &l.blocks[layer];
            let (g, bb) = (p(tape, b.ln1_g)?, p(tape, b.ln1_b)?);
            let h = tape.layer_norm(x, g, bb, LN_EPS)?;
            let (w, bias) = (p(tape, b.qkv_w)?, p(tape, b.qkv_b)?);
            let qkv = tape.matmul(h, w)?;
            let qkv = tape.add(qkv, bias)?;
            let q = tape.split_heads(qkv, heads, 3, 0)?;
            let k = tape.split_heads(qkv, heads, 3, 1)?;
            let v = tape.split_heads(qkv, heads, 3, 2)?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, att_scale)?;
            let att = tape.causal_softmax(scores)?;
            let y = tape.matmul(att, v)?;
            let y = tape.merge_heads(y)?;
            let (w, bias) = (p(tape, b.proj_w)?, p(tape, b.proj_b)?);
            let y = tape.matmul(y, w)?;
            let y = tape.add(y, bias)?;
            x = tape.add(x, y)?;

            let (g, bb) = (p(tape, b.ln2_g)?, p(tape, b.ln2_b)?);
            let h = tape.layer_norm(x, g, bb, LN_EPS)?;
            let (w, bias) = (p(tape, b.fc_w)?, p(tape, b.fc_b)?);
            let h = tape.matmul(h, w)?;
            let h = tape.add(h, bias)?;
            let h = tape.gelu(h)?;
            let (w, bias) = (p(tape, b.out_w)?, p(tape, b.out_b)?);
            let h = tape.matmul(h, w)?;
            let h = tape.add(h, bias)?;
            x = tape.add(x, h)?;
        }
        let (g, bb) = (p(tape, l.lnf_g)?, p(tape, l.lnf_b)?);
        let x = tape.layer_norm(x, g, bb, LN_EPS)?;
        let (w, bias) = (p(tape, l.head_w)?, p(tape, l.head_b)?);
        let logits = tape.matmul(x, w)?;
        tape.add(logits, bias)
    }

    /// Logits `[seq, vocab]` for one sequence, without keeping the tape.
    pub fn logits(&self, tokens: &[usize]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, tokens, 1, tokens.len())?;
        let v = self.config.vocab_size;
        tape.value(out).clone().reshape(&[tokens.len(), v])
    }

    /// Mean cross-entropy of a batch; `None` targets are not scored.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        tokens: &[usize],
        targets: &[Option<usize>],
        batch: usize,
        seq: usize,
    ) -> Result<Var> {
        let logits = self.forward(tape, tokens, batch, seq)?;
        tape.cross_entropy_masked(logits, targets)
    }

    /// Equivalent model in which every schedule position owns a private copy
    /// of the parameters it executes. Its forward pass is identical; its
    /// per-position gradients sum to the shared model's gradients.
    pub fn unshare(&self) -> Result<TransformerModel<T>> {
        let eff = self.effective_depth();
        let config = ModelConfig {
            base_depth: eff,
            pattern: VldPattern::None,
            factor: 1,
            ..self.config.clone()
        };
        let mut out = TransformerModel::<T>::build(&config)?;
        for dst in out.params.iter_mut() {
            let src_name = match dst.name.strip_prefix("blocks.") {
                Some(rest) => {
                    let (pos, tail) = rest.split_once('.').expect("block param name");
                    let pos: usize = pos.parse().expect("block index");
                    format!("blocks.{}.{}", self.schedule.order[pos], tail)
                }
                None => dst.name.clone(),
            };
            dst.value = self
                .params
                .by_name(&src_name)
                .expect("parameter present in source")
                .value
                .clone();
        }
        Ok(out)
    }

    /// Same model at another precision.
    pub fn cast<U: Real>(&self) -> TransformerModel<U> {
        TransformerModel {
            config: self.config.clone(),
            schedule: self.schedule.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }
}
