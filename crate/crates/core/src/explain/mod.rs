//! Input-times-gradient saliency for the sequence models.
//!
//! Tokens are discrete, so attributions are taken at the embedding layer.
//! Each position's input is the sum of its channel embeddings, so every
//! channel embedding receives the gradient of that summed row. The score of
//! channel `c` at position `i` is the l2 norm of `E_ic * grad_i` over the
//! embedding dimensions, and an event's score is the sum over its channels.

use std::io::Write;

use admitsim_autograd::{Gradients, Graph, ParamId, ParamStore, Real, Var};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::SequenceNet;
use crate::seqenc::{TokenSequenceBatch, Vocabulary};

/// Per-position, per-channel attributions of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub index: usize,
    pub channels: usize,
    /// Number of non-padding positions, [CLS] included.
    pub valid_len: usize,
    /// Token ids, position-major, over the full padded length.
    pub tokens: Vec<u32>,
    /// `attr[p][c]`; padding positions are all zero.
    pub attr: Vec<Vec<f64>>,
}

impl SaliencyMap {
    pub fn positions(&self) -> usize {
        self.attr.len()
    }

    /// Sum over channels at position `p`.
    pub fn event_attr(&self, p: usize) -> f64 {
        self.attr[p].iter().sum()
    }

    pub fn token(&self, p: usize, c: usize) -> u32 {
        self.tokens[p * self.channels + c]
    }

    /// Rows (sequence, position, channel, token, attribution) for every
    /// non-padding cell.
    pub fn write_csv<W: Write>(maps: &[SaliencyMap], vocab: Option<&Vocabulary>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sequence", "position", "channel", "token", "attr"])?;
        for m in maps {
            for p in 0..m.valid_len {
                for c in 0..m.channels {
                    let t = m.token(p, c);
                    let name = vocab.and_then(|v| v.token(t)).map_or_else(|| t.to_string(), str::to_string);
                    w.write_record([m.index.to_string(), p.to_string(), c.to_string(), name, format!("{:.10e}", m.attr[p][c])])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Input-times-gradient over an arbitrary differentiable head.
///
/// `tokens` is position-major with `channels` tokens per position; `head`
/// maps the summed embeddings (`positions x H`) to a 1 x 1 output. Returns
/// `attr[p][c]`.
pub fn inputxgrad_with<F: Real>(
    store: &ParamStore<F>,
    table: ParamId,
    tokens: &[u32],
    channels: usize,
    head: impl FnOnce(&mut Graph<F>, Var) -> Result<Var>,
) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new(store);
    let x = g.embed_sum(table, tokens.to_vec(), channels)?;
    let z = head(&mut g, x)?;
    let mut grads = Gradients::for_store(store);
    g.backward(z, &mut grads)?;
    let positions = tokens.len() / channels;
    let h = g.value(x).cols();
    let emb = store.value(table);
    let attr = match g.grad(x) {
        None => vec![vec![0.0; channels]; positions],
        Some(gx) => (0..positions)
            .map(|p| {
                let gp = &gx[p * h..(p + 1) * h];
                (0..channels)
                    .map(|c| {
                        let e = emb.row(tokens[p * channels + c] as usize);
                        e.iter().zip(gp).map(|(&a, &b)| (a * b).as_f64().powi(2)).sum::<f64>().sqrt()
                    })
                    .collect()
            })
            .collect(),
    };
    Ok(attr)
}

/// Saliency of sequence `i` of `batch` with respect to the model logit.
pub fn inputxgrad<F: Real>(net: &SequenceNet<F>, batch: &TokenSequenceBatch, i: usize) -> Result<SaliencyMap> {
    net.check_batch(batch)?;
    if i >= batch.len() {
        return Err(Error::Input(format!("sequence {i} out of range for {} sequences", batch.len())));
    }
    let n = batch.valid_len(i).max(1);
    let all = batch.position_major(i);
    let mut rng = crate::rng::substream(0, "saliency");
    let valid = vec![true; n];
    let mut attr = inputxgrad_with(&net.store, net.embedding(), &all[..n * batch.channels], batch.channels, |g, x| {
        net.logit_from_embedded(g, x, &valid, &mut rng)
    })?;
    attr.resize(batch.seq_len, vec![0.0; batch.channels]);
    Ok(SaliencyMap { index: i, channels: batch.channels, valid_len: n, tokens: all, attr })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    /// Events from the start (forward) or from the end (reverse), from 0.
    pub offset: usize,
    pub mean_attr: f64,
    pub count: usize,
}

/// Mean event saliency by position, aligned at the first and at the last
/// event. The [CLS] slot and padding are excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyProfile {
    pub sequences: usize,
    pub forward: Vec<ProfilePoint>,
    pub reverse: Vec<ProfilePoint>,
}

impl SaliencyProfile {
    pub fn from_maps(maps: &[SaliencyMap]) -> Self {
        let longest = maps.iter().map(|m| m.valid_len.saturating_sub(1)).max().unwrap_or(0);
        let mut fwd = vec![(0.0, 0usize); longest];
        let mut rev = vec![(0.0, 0usize); longest];
        for m in maps {
            let events = m.valid_len.saturating_sub(1);
            for k in 0..events {
                let a = m.event_attr(1 + k);
                fwd[k].0 += a;
                fwd[k].1 += 1;
                rev[events - 1 - k].0 += a;
                rev[events - 1 - k].1 += 1;
            }
        }
        let points = |v: Vec<(f64, usize)>| {
            v.into_iter()
                .enumerate()
                .map(|(offset, (s, count))| ProfilePoint { offset, mean_attr: s / count as f64, count })
                .collect()
        };
        SaliencyProfile { sequences: maps.len(), forward: points(fwd), reverse: points(rev) }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alignment", "offset", "mean_attr", "count"])?;
        for (name, pts) in [("forward", &self.forward), ("reverse", &self.reverse)] {
            for p in pts {
                w.write_record([name.to_string(), p.offset.to_string(), format!("{:.10e}", p.mean_attr), p.count.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Saliency maps of the first `n` sequences and their profile.
pub fn saliency_profile<F: Real>(
    net: &SequenceNet<F>,
    batch: &TokenSequenceBatch,
    n: usize,
) -> Result<(Vec<SaliencyMap>, SaliencyProfile)> {
    let take = if n > batch.len() {
        warn!("requested {n} sequences but only {} are available; using all", batch.len());
        batch.len()
    } else {
        n
    };
    let maps = (0..take).map(|i| inputxgrad(net, batch, i)).collect::<Result<Vec<_>>>()?;
    let profile = SaliencyProfile::from_maps(&maps);
    Ok((maps, profile))
}
