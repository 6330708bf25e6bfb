//! Sequence risk models over summed channel embeddings: a pre-norm
//! transformer encoder read out at the [CLS] position, and a stacked LSTM
//! read out at its last hidden state.

use admitsim_autograd::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqenc::{TokenSequenceBatch, NULL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig { layers: 2, hidden: 64, heads: 4, dropout: 0.1 }
    }
}

impl TransformerConfig {
    pub fn paper_scale() -> Self {
        TransformerConfig { layers: 8, hidden: 512, heads: 8, dropout: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmConfig {
    pub hidden: usize,
    pub input: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig { hidden: 128, input: 128, layers: 2, dropout: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum SequenceArch {
    Lstm(LstmConfig),
    Transformer(TransformerConfig),
}

impl SequenceArch {
    pub fn name(&self) -> &'static str {
        match self {
            SequenceArch::Lstm(_) => "lstm",
            SequenceArch::Transformer(_) => "transformer",
        }
    }

    /// Width of the embedding table.
    pub fn embed_dim(&self) -> usize {
        match self {
            SequenceArch::Lstm(c) => c.input,
            SequenceArch::Transformer(c) => c.hidden,
        }
    }

    pub fn default_batch_size(&self) -> usize {
        match self {
            SequenceArch::Lstm(_) => 128,
            SequenceArch::Transformer(_) => 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match *self {
            SequenceArch::Transformer(c) => {
                if c.layers == 0 || c.hidden == 0 || c.heads == 0 {
                    return bad(format!("transformer sizes must be positive: {c:?}"));
                }
                if c.hidden % c.heads != 0 {
                    return bad(format!("hidden size {} is not divisible by {} heads", c.hidden, c.heads));
                }
                if !(0.0..1.0).contains(&c.dropout) {
                    return bad(format!("dropout {} outside [0, 1)", c.dropout));
                }
            }
            SequenceArch::Lstm(c) => {
                if c.layers == 0 || c.hidden == 0 || c.input == 0 {
                    return bad(format!("LSTM sizes must be positive: {c:?}"));
                }
                if !(0.0..1.0).contains(&c.dropout) {
                    return bad(format!("dropout {} outside [0, 1)", c.dropout));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AttnLayer {
    ln1: (ParamId, ParamId),
    wqkv: ParamId,
    bqkv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2: (ParamId, ParamId),
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct LstmLayer {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
enum Body {
    Transformer { layers: Vec<AttnLayer>, ln_f: (ParamId, ParamId) },
    Lstm { layers: Vec<LstmLayer> },
}

/// Parameters and structure of one sequence network.
#[derive(Debug, Clone)]
pub struct SequenceNet<F: Real> {
    pub arch: SequenceArch,
    pub channels: usize,
    pub vocab_size: usize,
    pub vocab_hash: u64,
    pub store: ParamStore<F>,
    embed: ParamId,
    body: Body,
    head_w: ParamId,
    head_b: ParamId,
}

fn glorot<F: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<F> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let u = Uniform::new_inclusive(-a, a).expect("finite bound");
    let data: Vec<f64> = (0..rows * cols).map(|_| u.sample(rng)).collect();
    Tensor::from_f64(vec![rows, cols], &data).expect("shape")
}

fn filled<F: Real>(cols: usize, v: f64) -> Tensor<F> {
    Tensor::from_f64(vec![1, cols], &vec![v; cols]).expect("shape")
}

impl<F: Real> SequenceNet<F> {
    /// Freshly initialized network. The [Null] embedding row is pinned to 0.
    pub fn new<R: Rng>(arch: SequenceArch, channels: usize, vocab_size: usize, vocab_hash: u64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        if vocab_size <= NULL as usize || channels == 0 {
            return Err(Error::Config(format!("vocabulary of {vocab_size} tokens or {channels} channels is too small")));
        }
        let mut store = ParamStore::new();
        let e = arch.embed_dim();
        let normal = Normal::new(0.0, 0.02).expect("finite sd");
        let table: Vec<f64> = (0..vocab_size * e).map(|_| normal.sample(rng)).collect();
        let embed = store.add("embedding", Tensor::from_f64(vec![vocab_size, e], &table)?);
        store.freeze_row(embed, NULL as usize)?;
        let (body, out_dim) = match arch {
            SequenceArch::Transformer(c) => {
                let h = c.hidden;
                let mut layers = Vec::with_capacity(c.layers);
                for l in 0..c.layers {
                    let p = |s: &str| format!("transformer.{l}.{s}");
                    layers.push(AttnLayer {
                        ln1: (store.add(p("ln1.gain"), filled(h, 1.0)), store.add(p("ln1.bias"), filled(h, 0.0))),
                        wqkv: store.add(p("attn.wqkv"), glorot(rng, h, 3 * h)),
                        bqkv: store.add(p("attn.bqkv"), filled(3 * h, 0.0)),
                        wo: store.add(p("attn.wo"), glorot(rng, h, h)),
                        bo: store.add(p("attn.bo"), filled(h, 0.0)),
                        ln2: (store.add(p("ln2.gain"), filled(h, 1.0)), store.add(p("ln2.bias"), filled(h, 0.0))),
                        w1: store.add(p("ffn.w1"), glorot(rng, h, 4 * h)),
                        b1: store.add(p("ffn.b1"), filled(4 * h, 0.0)),
                        w2: store.add(p("ffn.w2"), glorot(rng, 4 * h, h)),
                        b2: store.add(p("ffn.b2"), filled(h, 0.0)),
                    });
                }
                let ln_f = (store.add("final_ln.gain", filled(h, 1.0)), store.add("final_ln.bias", filled(h, 0.0)));
                (Body::Transformer { layers, ln_f }, h)
            }
            SequenceArch::Lstm(c) => {
                let h = c.hidden;
                let mut layers = Vec::with_capacity(c.layers);
                for l in 0..c.layers {
                    let input = if l == 0 { c.input } else { h };
                    // forget-gate bias starts at 1
                    let mut bias = vec![0.0; 4 * h];
                    bias[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
                    layers.push(LstmLayer {
                        w_ih: store.add(format!("lstm.{l}.w_ih"), glorot(rng, input, 4 * h)),
                        w_hh: store.add(format!("lstm.{l}.w_hh"), glorot(rng, h, 4 * h)),
                        b: store.add(format!("lstm.{l}.bias"), Tensor::from_f64(vec![1, 4 * h], &bias)?),
                    });
                }
                (Body::Lstm { layers }, h)
            }
        };
        let head_w = store.add("head.weight", glorot(rng, out_dim, 1));
        let head_b = store.add("head.bias", filled(1, 0.0));
        Ok(SequenceNet { arch, channels, vocab_size, vocab_hash, store, embed, body, head_w, head_b })
    }

    pub fn embedding(&self) -> ParamId {
        self.embed
    }

    pub fn head(&self) -> (ParamId, ParamId) {
        (self.head_w, self.head_b)
    }

    pub fn check_batch(&self, batch: &TokenSequenceBatch) -> Result<()> {
        if batch.vocab_hash != self.vocab_hash {
            return Err(Error::VocabMismatch { expected: self.vocab_hash, found: batch.vocab_hash });
        }
        if batch.channels != self.channels {
            return Err(Error::Input(format!("batch has {} channels, model expects {}", batch.channels, self.channels)));
        }
        Ok(())
    }

    /// Summed channel embeddings, `positions x H`; `tokens` is position-major.
    pub fn embed(&self, g: &mut Graph<F>, tokens: Vec<u32>) -> Result<Var> {
        Ok(g.embed_sum(self.embed, tokens, self.channels)?)
    }

    /// Logit (1 x 1) from embedded positions. `valid[p]` marks non-padding
    /// positions; the transformer masks the rest out of attention and the
    /// LSTM stops after the last valid position.
    pub fn logit_from_embedded<R: Rng>(&self, g: &mut Graph<F>, x: Var, valid: &[bool], rng: &mut R) -> Result<Var> {
        let features = match (&self.body, self.arch) {
            (Body::Transformer { layers, ln_f }, SequenceArch::Transformer(c)) => {
                let mut x = g.dropout(x, c.dropout, rng)?;
                for (l, layer) in layers.iter().enumerate() {
                    let last = l + 1 == layers.len();
                    x = self.attn_block(g, layer, x, valid, c, last, rng)?;
                }
                let (gain, bias) = (g.param(ln_f.0), g.param(ln_f.1));
                let x = g.layer_norm(x, gain, bias, F::from_f64(1e-5))?;
                g.slice_rows(x, 0, 1)?
            }
            (Body::Lstm { layers }, SequenceArch::Lstm(c)) => {
                let n = valid.iter().take_while(|&&v| v).count().max(1);
                let mut x = g.slice_rows(x, 0, n)?;
                let mut last = x;
                for (l, layer) in layers.iter().enumerate() {
                    if l > 0 {
                        x = g.dropout(x, c.dropout, rng)?;
                    }
                    let (seq, h) = self.lstm_layer(g, layer, x, c.hidden)?;
                    x = seq;
                    last = h;
                }
                last
            }
            _ => unreachable!("body matches arch by construction"),
        };
        let (w, b) = (g.param(self.head_w), g.param(self.head_b));
        let z = g.matmul(features, w)?;
        Ok(g.add(z, b)?)
    }

    #[allow(clippy::too_many_arguments)]
    fn attn_block<R: Rng>(
        &self,
        g: &mut Graph<F>,
        p: &AttnLayer,
        x: Var,
        valid: &[bool],
        c: TransformerConfig,
        only_first: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let h = c.hidden;
        let dh = h / c.heads;
        let (g1, b1) = (g.param(p.ln1.0), g.param(p.ln1.1));
        let normed = g.layer_norm(x, g1, b1, F::from_f64(1e-5))?;
        let w = g.param(p.wqkv);
        let qkv = g.matmul(normed, w)?;
        let bq = g.param(p.bqkv);
        let qkv = g.add_row(qkv, bq)?;
        // in the last block only the [CLS] row feeds the head
        let (q_src, resid) = if only_first { (g.slice_rows(qkv, 0, 1)?, g.slice_rows(x, 0, 1)?) } else { (qkv, x) };
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(c.heads);
        for a in 0..c.heads {
            let q = g.slice_cols(q_src, a * dh, dh)?;
            let k = g.slice_cols(qkv, h + a * dh, dh)?;
            let v = g.slice_cols(qkv, 2 * h + a * dh, dh)?;
            let s = g.matmul_nt(q, k)?;
            let s = g.scale(s, scale);
            let att = g.masked_softmax(s, Some(valid))?;
            heads.push(g.matmul(att, v)?);
        }
        let o = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        let wo = g.param(p.wo);
        let o = g.matmul(o, wo)?;
        let bo = g.param(p.bo);
        let o = g.add_row(o, bo)?;
        let o = g.dropout(o, c.dropout, rng)?;
        let x = g.add(resid, o)?;

        let (g2, b2) = (g.param(p.ln2.0), g.param(p.ln2.1));
        let normed = g.layer_norm(x, g2, b2, F::from_f64(1e-5))?;
        let w1 = g.param(p.w1);
        let f = g.matmul(normed, w1)?;
        let b1 = g.param(p.b1);
        let f = g.add_row(f, b1)?;
        let f = g.gelu(f);
        let w2 = g.param(p.w2);
        let f = g.matmul(f, w2)?;
        let b2 = g.param(p.b2);
        let f = g.add_row(f, b2)?;
        let f = g.dropout(f, c.dropout, rng)?;
        Ok(g.add(x, f)?)
    }

    /// Runs one layer over all rows of `x`; returns (hidden states, last state).
    fn lstm_layer(&self, g: &mut Graph<F>, p: &LstmLayer, x: Var, h: usize) -> Result<(Var, Var)> {
        let steps = g.value(x).rows();
        let w_ih = g.param(p.w_ih);
        let w_hh = g.param(p.w_hh);
        let b = g.param(p.b);
        let xw = g.matmul(x, w_ih)?;
        let xw = g.add_row(xw, b)?;
        let mut hs = Vec::with_capacity(steps);
        let mut state: Option<(Var, Var)> = None;
        for t in 0..steps {
            let mut z = g.slice_rows(xw, t, 1)?;
            if let Some((hp, _)) = state {
                let r = g.matmul(hp, w_hh)?;
                z = g.add(z, r)?;
            }
            let i = g.slice_cols(z, 0, h)?;
            let i = g.sigmoid(i);
            let f = g.slice_cols(z, h, h)?;
            let f = g.sigmoid(f);
            let gg = g.slice_cols(z, 2 * h, h)?;
            let gg = g.tanh(gg);
            let o = g.slice_cols(z, 3 * h, h)?;
            let o = g.sigmoid(o);
            let ig = g.mul(i, gg)?;
            let c = match state {
                Some((_, cp)) => {
                    let fc = g.mul(f, cp)?;
                    g.add(fc, ig)?
                }
                None => ig,
            };
            let tc = g.tanh(c);
            let hn = g.mul(o, tc)?;
            hs.push(hn);
            state = Some((hn, c));
        }
        let last = state.expect("at least one step").0;
        let seq = if hs.len() == 1 { hs[0] } else { g.concat_rows(&hs)? };
        Ok((seq, last))
    }

    /// Logit of student `i` of `batch`, run on the valid prefix only.
    pub fn logit<R: Rng>(&self, g: &mut Graph<F>, batch: &TokenSequenceBatch, i: usize, rng: &mut R) -> Result<Var> {
        let n = batch.valid_len(i).max(1);
        let mut tokens = batch.position_major(i);
        tokens.truncate(n * batch.channels);
        let x = self.embed(g, tokens)?;
        self.logit_from_embedded(g, x, &vec![true; n], rng)
    }

    /// Logit of student `i` over the full padded grid with an attention mask.
    pub fn logit_padded<R: Rng>(&self, g: &mut Graph<F>, batch: &TokenSequenceBatch, i: usize, rng: &mut R) -> Result<Var> {
        let n = batch.valid_len(i).max(1);
        let valid: Vec<bool> = (0..batch.seq_len).map(|p| p < n).collect();
        let x = self.embed(g, batch.position_major(i))?;
        self.logit_from_embedded(g, x, &valid, rng)
    }

    /// Logits in evaluation mode.
    pub fn logits(&self, batch: &TokenSequenceBatch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let mut rng = crate::rng::substream(0, "eval");
        let mut out = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let mut g = Graph::new(&self.store);
            let z = self.logit(&mut g, batch, i, &mut rng)?;
            out.push(g.value(z).item().as_f64());
        }
        Ok(out)
    }

    /// Completion probabilities in evaluation mode.
    pub fn predict(&self, batch: &TokenSequenceBatch) -> Result<Vec<f64>> {
        Ok(self.logits(batch)?.into_iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect())
    }
}
