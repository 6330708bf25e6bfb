use admitsim_autograd::{Gradients, Graph, ParamStore};
use admitsim_core::cohort::{generate_cohort, temporal_split, GeneratorConfig};
use admitsim_core::models::*;
use admitsim_core::policy::auc;
use admitsim_core::seqenc::{TokenSequenceBatch, CLS, NULL, PAD};
use admitsim_core::{Error, InputVariant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 14;

/// Random well-formed grid: [CLS] column, events with some [Null] cells,
/// then padding.
fn random_batch(rng: &mut ChaCha8Rng, n: usize, channels: usize, seq_len: usize) -> TokenSequenceBatch {
    let mut tokens = Vec::with_capacity(n * channels * seq_len);
    for _ in 0..n {
        let valid = rng.random_range(2..=seq_len);
        for c in 0..channels {
            for p in 0..seq_len {
                let t = match (c, p) {
                    (0, 0) => CLS,
                    (0, _) => NULL,
                    (_, 0) => NULL,
                    (_, p) if p >= valid => PAD,
                    (c, _) if c > 1 && rng.random_bool(0.3) => NULL,
                    _ => rng.random_range(4..VOCAB as u32),
                };
                tokens.push(t);
            }
        }
    }
    TokenSequenceBatch { channels, seq_len, vocab_hash: 42, tokens }
}

fn tiny_transformer() -> SequenceArch {
    SequenceArch::Transformer(TransformerConfig { layers: 2, hidden: 8, heads: 2, dropout: 0.1 })
}

fn tiny_lstm() -> SequenceArch {
    SequenceArch::Lstm(LstmConfig { hidden: 5, input: 6, layers: 2, dropout: 0.2 })
}

fn loss_of(net: &SequenceNet<f64>, store: &ParamStore<f64>, batch: &TokenSequenceBatch, i: usize, y: f64) -> f64 {
    let mut g = Graph::new(store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = net.embed(&mut g, batch.position_major(i)[..batch.valid_len(i) * batch.channels].to_vec()).unwrap();
    let z = net.logit_from_embedded(&mut g, x, &vec![true; batch.valid_len(i)], &mut rng).unwrap();
    let l = g.bce_with_logits(z, &[y]).unwrap();
    g.value(l).item()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn is_key_bias(net: &SequenceNet<f64>, id: admitsim_autograd::ParamId, k: usize) -> bool {
    let h = net.arch.embed_dim();
    net.store.get(id).name.ends_with("attn.bqkv") && (h..2 * h).contains(&k)
}

/// Worst relative error between analytic and central-difference gradients of
/// the full loss, over a random subset of parameter coordinates.
fn full_model_gradcheck(arch: SequenceArch, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let channels = rng.random_range(2..=4);
        let seq_len = rng.random_range(3..=7);
        let batch = random_batch(&mut rng, 1, channels, seq_len);
        let mut net = SequenceNet::<f64>::new(arch, channels, VOCAB, 42, &mut rng).unwrap();
        // larger weights than the initializer so every path carries signal
        for id in net.store.ids().collect::<Vec<_>>() {
            let frozen = net.store.get(id).frozen_rows.clone();
            let cols = net.store.value(id).cols();
            for (k, v) in net.store.get_mut(id).value.data_mut().iter_mut().enumerate() {
                if !frozen.contains(&(k / cols)) {
                    *v += rng.random_range(-0.3..0.3);
                }
            }
        }
        let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let mut grads = Gradients::for_store(&net.store);
        {
            let mut g = Graph::new(&net.store);
            let z = net.logit(&mut g, &batch, 0, &mut rng).unwrap();
            let l = g.bce_with_logits(z, &[y]).unwrap();
            g.backward(l, &mut grads).unwrap();
        }
        let ids: Vec<_> = net.store.ids().collect();
        for _ in 0..48 {
            let id = ids[rng.random_range(0..ids.len())];
            let len = net.store.value(id).len();
            let cols = net.store.value(id).cols();
            let k = rng.random_range(0..len);
            if net.store.get(id).frozen_rows.contains(&(k / cols)) {
                continue;
            }
            let h = 1e-5;
            let mut store = net.store.clone();
            let orig = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + h;
            let up = loss_of(&net, &store, &batch, 0, y);
            store.get_mut(id).value.data_mut()[k] = orig - h;
            let down = loss_of(&net, &store, &batch, 0, y);
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g[k]);
            if is_key_bias(&net, id, k) {
                // scores shift by a constant per query row; softmax ignores it
                assert!(analytic.abs() < 1e-12 && numeric.abs() < 1e-9);
                continue;
            }
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    worst
}

#[test]
fn transformer_loss_gradients_match_finite_differences() {
    let worst = full_model_gradcheck(tiny_transformer(), 100, 1);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn lstm_loss_gradients_match_finite_differences() {
    let worst = full_model_gradcheck(tiny_lstm(), 100, 2);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn null_embedding_stays_zero_through_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = random_batch(&mut rng, 100, 3, 6);
    let labels: Vec<bool> = (0..100).map(|_| rng.random_bool(0.6)).collect();
    let cfg = TrainConfig { epochs: 100, patience: 1, batch_size: Some(100), learning_rate: 1e-2, warmup_steps: 5, ..Default::default() };
    for arch in [tiny_transformer(), tiny_lstm()] {
        let (net, hist) = train_sequence_model::<f64>(arch, VOCAB, &batch, &labels, None, &cfg).unwrap();
        assert_eq!(hist.epochs.len(), 100);
        let table = net.store.value(net.embedding());
        assert!(table.row(NULL as usize).iter().all(|&v| v == 0.0));
        assert!(table.row(5).iter().any(|&v| v != 0.0));
    }
}

#[test]
fn transformer_ignores_padding_amount() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let short = random_batch(&mut rng, 20, 3, 6);
    // same events, four extra padding columns
    let mut tokens = Vec::new();
    for i in 0..short.len() {
        for c in 0..3 {
            for p in 0..10 {
                tokens.push(if p < 6 { short.get(i, c, p) } else if c == 0 { NULL } else { PAD });
            }
        }
    }
    let long = TokenSequenceBatch { channels: 3, seq_len: 10, vocab_hash: 42, tokens };
    let net = SequenceNet::<f64>::new(tiny_transformer(), 3, VOCAB, 42, &mut rng).unwrap();
    let a = net.logits(&short).unwrap();
    let b = net.logits(&long).unwrap();
    for i in 0..short.len() {
        let mut g = Graph::new(&net.store);
        let z = net.logit_padded(&mut g, &long, i, &mut rng).unwrap();
        let padded = g.value(z).item();
        assert!((a[i] - b[i]).abs() < 1e-5);
        assert!((a[i] - padded).abs() < 1e-5, "{} vs {padded}", a[i]);
    }
}

#[test]
fn predictions_follow_batch_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = random_batch(&mut rng, 12, 3, 6);
    for arch in [tiny_transformer(), tiny_lstm()] {
        let net = SequenceNet::<f64>::new(arch, 3, VOCAB, 42, &mut rng).unwrap();
        let p = net.predict(&batch).unwrap();
        let perm: Vec<usize> = (0..12).rev().collect();
        let q = net.predict(&batch.select(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(q[k], p[i]);
        }
    }
}

#[test]
fn untrained_predictions_center_on_head_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch = random_batch(&mut rng, 200, 3, 6);
    let mut net = SequenceNet::<f64>::new(tiny_transformer(), 3, VOCAB, 42, &mut rng).unwrap();
    let (hw, hb) = net.head();
    net.store.get_mut(hb).value.data_mut()[0] = 1.2;
    net.store.get_mut(hw).value.data_mut().iter_mut().for_each(|v| *v *= 0.01);
    let p = net.predict(&batch).unwrap();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let target = 1.0 / (1.0 + (-1.2f64).exp());
    assert!((mean - target).abs() < 0.01, "{mean} vs {target}");
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut batch = random_batch(&mut rng, 5, 3, 6);
    let net = SequenceNet::<f64>::new(tiny_lstm(), 3, VOCAB, 42, &mut rng).unwrap();
    batch.vocab_hash = 43;
    assert!(matches!(net.predict(&batch), Err(Error::VocabMismatch { .. })));
}

#[test]
fn configuration_errors() {
    let bad = SequenceArch::Transformer(TransformerConfig { layers: 1, hidden: 10, heads: 3, dropout: 0.1 });
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    let cfg = TrainConfig { epochs: 3, patience: 3, ..Default::default() };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

fn toy_split() -> (admitsim_core::cohort::Cohort, admitsim_core::cohort::Cohort) {
    let cfg = GeneratorConfig { n_students: 2000, first_year: 2012, ..Default::default() };
    let c = generate_cohort(&cfg, 11).unwrap();
    temporal_split(&c, 2017).unwrap()
}

#[test]
fn planted_signal_is_learned_and_runs_are_reproducible() {
    let (train, test) = toy_split();
    let arch = SequenceArch::Transformer(TransformerConfig { layers: 1, hidden: 16, heads: 2, dropout: 0.1 });
    let cfg = TrainConfig { epochs: 10, patience: 3, batch_size: Some(32), learning_rate: 2e-3, warmup_steps: 20, seed: 9, ..Default::default() };
    let m = SequenceModel::<f64>::fit(&train, InputVariant::Academic, arch, &cfg, 5).unwrap();
    let y: Vec<bool> = test.students.iter().map(|s| s.completed).collect();
    let p = m.predict(&test, &test.students).unwrap();
    let a = auc(&p, &y).unwrap();
    assert!(a > 0.60, "held-out AUC {a}");

    let again = SequenceModel::<f64>::fit(&train, InputVariant::Academic, arch, &cfg, 5).unwrap();
    assert_eq!(again.predict(&test, &test.students).unwrap(), p);

    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let loaded = SequenceModel::<f64>::load(dir.path()).unwrap();
    assert_eq!(loaded.predict(&test, &test.students).unwrap(), p);
    assert!(SequenceModel::<f32>::load(dir.path()).is_err());
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let (train, _) = toy_split();
    let arch = SequenceArch::Lstm(LstmConfig { hidden: 8, input: 8, layers: 1, dropout: 0.0 });
    let cfg = TrainConfig { epochs: 6, patience: 2, batch_size: Some(16), learning_rate: 3e-2, warmup_steps: 1, seed: 1, ..Default::default() };
    let m = SequenceModel::<f64>::fit(&train, InputVariant::GpaBaseline, arch, &cfg, 5).unwrap();
    let h = &m.history;
    let best = h.epochs.iter().map(|e| e.val_loss.unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(h.epochs[h.best_epoch - 1].val_loss.unwrap(), best);
    if h.stopped_early {
        let tail = &h.epochs[h.best_epoch..];
        assert_eq!(tail.len(), cfg.patience);
        assert!(tail.iter().all(|e| e.val_loss.unwrap() >= best));
    }
}
