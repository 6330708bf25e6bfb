//! Minibatch training of sequence networks with early stopping, and the
//! `RiskModel` wrapper bundling a network with its encoder.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use admitsim_autograd::{lr_schedule, read_checkpoint, write_checkpoint, AdamW, AdamWConfig, Checkpoint, Gradients, Graph, Real};
use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::{validation_split, Cohort, Student};
use crate::error::{Error, Result};
use crate::models::sequence::{SequenceArch, SequenceNet};
use crate::models::RiskModel;
use crate::policy::auc;
use crate::rng::substream;
use crate::seqenc::{SequenceEncoder, TokenSequenceBatch};
use crate::variant::InputVariant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    /// Falls back to the architecture default (512 transformer, 128 LSTM).
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            patience: 3,
            batch_size: None,
            learning_rate: 5e-4,
            warmup_steps: 100,
            weight_decay: 0.01,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.patience >= self.epochs {
            return bad(format!("patience {} must be below epochs {}", self.patience, self.epochs));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation fraction {} outside (0, 1)", self.validation_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn bce_from_logits(z: &[f64], y: &[bool]) -> f64 {
    let s: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| z.max(0.0) - if t { z } else { 0.0 } + (-z.abs()).exp().ln_1p())
        .sum();
    s / z.len() as f64
}

/// Trains a fresh network on `train`, early-stopping on validation loss.
pub fn train_sequence_model<F: Real>(
    arch: SequenceArch,
    vocab_size: usize,
    train: &TokenSequenceBatch,
    labels: &[bool],
    validation: Option<(&TokenSequenceBatch, &[bool])>,
    cfg: &TrainConfig,
) -> Result<(SequenceNet<F>, TrainingHistory)> {
    cfg.validate()?;
    if train.len() != labels.len() || train.is_empty() {
        return Err(Error::Input(format!("{} sequences but {} labels", train.len(), labels.len())));
    }
    let mut net = SequenceNet::<F>::new(arch, train.channels, vocab_size, train.vocab_hash, &mut substream(cfg.seed, "init"))?;
    if let Some((vb, vy)) = validation {
        net.check_batch(vb)?;
        if vb.len() != vy.len() {
            return Err(Error::Input("validation sequences and labels differ in length".into()));
        }
    }
    let base = labels.iter().filter(|&&v| v).count() as f64 / labels.len() as f64;
    if base > 0.0 && base < 1.0 {
        let (_, hb) = net.head();
        net.store.get_mut(hb).value.data_mut()[0] = F::from_f64((base / (1.0 - base)).ln());
    }
    let batch = cfg.batch_size.unwrap_or(arch.default_batch_size());
    let n = train.len();
    let per_epoch = n.div_ceil(batch) as u64;
    let total = per_epoch * cfg.epochs as u64;
    let mut opt = AdamW::new(AdamWConfig { weight_decay: cfg.weight_decay, ..Default::default() }, &net.store);
    let mut shuffle = substream(cfg.seed, "shuffle");
    let mut dropout = substream(cfg.seed, "dropout");
    let mut grads = Gradients::for_store(&net.store);
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, admitsim_autograd::ParamStore<F>)> = None;
    let mut bad_epochs = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            grads.zero();
            for &i in chunk {
                let mut g = Graph::new(&net.store).with_training(true);
                let z = net.logit(&mut g, train, i, &mut dropout)?;
                let loss = g.bce_with_logits(z, &[if labels[i] { F::one() } else { F::zero() }])?;
                let l = g.value(loss).item().as_f64();
                if !l.is_finite() {
                    return Err(Error::Numerical(format!("non-finite training loss in epoch {epoch}")));
                }
                loss_sum += l;
                g.backward(loss, &mut grads)?;
            }
            grads.scale(F::from_f64(1.0 / chunk.len() as f64));
            let lr = lr_schedule(opt.steps_taken() + 1, cfg.warmup_steps, total + 1, cfg.learning_rate)?;
            opt.step(&mut net.store, &grads, lr)?;
        }
        let train_loss = loss_sum / n as f64;
        let (val_loss, val_auc) = match validation {
            Some((vb, vy)) => {
                let z = net.logits(vb)?;
                let a = auc(&z, vy).ok();
                (Some(bce_from_logits(&z, vy)), a)
            }
            None => (None, None),
        };
        info!(
            "{} epoch {epoch}: train loss {train_loss:.5}, validation loss {:?}, validation AUC {:?}",
            arch.name(),
            val_loss,
            val_auc
        );
        history.epochs.push(EpochLog { epoch, train_loss, val_loss, val_auc });
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss after epoch {epoch}")));
        }
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, net.store.clone()));
            history.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if validation.is_some() && bad_epochs >= cfg.patience {
                history.stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    if validation.is_some() {
        if let Some((_, store)) = best {
            net.store = store;
        }
    } else {
        history.best_epoch = history.epochs.len();
    }
    Ok((net, history))
}

/// A trained sequence network with the encoder it was trained against.
#[derive(Debug, Clone)]
pub struct SequenceModel<F: Real> {
    pub name: String,
    pub encoder: SequenceEncoder,
    pub net: SequenceNet<F>,
    pub history: TrainingHistory,
}

#[derive(Serialize, Deserialize)]
struct SequenceMeta {
    name: String,
    arch: SequenceArch,
    channels: usize,
    vocab_size: usize,
    precision_bytes: usize,
    history: TrainingHistory,
}

const META_FILE: &str = "model.json";
const ENCODER_FILE: &str = "encoder.json";
const WEIGHTS_FILE: &str = "weights.ckpt";

impl<F: Real> SequenceModel<F> {
    /// Holds out a validation part of `train`, fits the encoder on the rest
    /// and trains the network.
    pub fn fit(train: &Cohort, variant: InputVariant, arch: SequenceArch, cfg: &TrainConfig, min_count: usize) -> Result<Self> {
        cfg.validate()?;
        let (fit, val) = validation_split(train, cfg.validation_fraction, &mut substream(cfg.seed, "validation"))?;
        let encoder = SequenceEncoder::fit(&fit, variant, min_count)?;
        let tb = encoder.encode(&fit, &fit.students)?;
        let vb = encoder.encode(&val, &val.students)?;
        let ty: Vec<bool> = fit.students.iter().map(|s| s.completed).collect();
        let vy: Vec<bool> = val.students.iter().map(|s| s.completed).collect();
        let (net, history) = train_sequence_model::<F>(arch, encoder.vocab.len(), &tb, &ty, Some((&vb, &vy)), cfg)?;
        Ok(SequenceModel { name: format!("{}:{variant}", arch.name()), encoder, net, history })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = SequenceMeta {
            name: self.name.clone(),
            arch: self.net.arch,
            channels: self.net.channels,
            vocab_size: self.net.vocab_size,
            precision_bytes: F::BYTES,
            history: self.history.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join(META_FILE))?), &meta)?;
        self.encoder.save(&dir.join(ENCODER_FILE))?;
        let ckpt = Checkpoint { vocab_hash: self.net.vocab_hash, tensors: self.net.store.named_tensors() };
        let mut w = BufWriter::new(File::create(dir.join(WEIGHTS_FILE))?);
        write_checkpoint(&mut w, &ckpt)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: SequenceMeta = serde_json::from_reader(BufReader::new(File::open(dir.join(META_FILE))?))?;
        if meta.precision_bytes != F::BYTES {
            return Err(Error::Config(format!(
                "checkpoint holds {}-byte floats, loader expects {}",
                meta.precision_bytes,
                F::BYTES
            )));
        }
        let encoder = SequenceEncoder::load(&dir.join(ENCODER_FILE))?;
        let ckpt: Checkpoint<F> = read_checkpoint(&mut BufReader::new(File::open(dir.join(WEIGHTS_FILE))?))?;
        if ckpt.vocab_hash != encoder.vocab.hash() {
            return Err(Error::VocabMismatch { expected: ckpt.vocab_hash, found: encoder.vocab.hash() });
        }
        let mut net = SequenceNet::new(meta.arch, meta.channels, meta.vocab_size, ckpt.vocab_hash, &mut substream(0, "init"))?;
        net.store.load_named(&ckpt.tensors)?;
        Ok(SequenceModel { name: meta.name, encoder, net, history: meta.history })
    }
}

impl<F: Real> RiskModel for SequenceModel<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, cohort: &Cohort, students: &[Student]) -> Result<Vec<f64>> {
        let batch = self.encoder.encode(cohort, students)?;
        let p = self.net.predict(&batch)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{} produced a non-finite probability", self.name)));
        }
        Ok(p)
    }
}
