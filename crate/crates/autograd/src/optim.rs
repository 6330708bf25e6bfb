use crate::error::{AutogradError, Result};
use crate::params::{Gradients, ParamStore};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay: the decay multiplies the weights
/// directly and never enters the moment estimates.
#[derive(Clone, Debug)]
pub struct AdamW<F> {
    config: AdamWConfig,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
    step: u64,
}

impl<F: Real> AdamW<F> {
    pub fn new(config: AdamWConfig, store: &ParamStore<F>) -> Self {
        let zeros = |_| Vec::new();
        Self {
            config,
            first: (0..store.len()).map(zeros).collect(),
            second: (0..store.len()).map(zeros).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`. Parameters without a gradient only
    /// receive weight decay. Frozen rows are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Gradients<F>, lr: f64) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(AutogradError::LearningRate(lr));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::from_f64(c.beta1), F::from_f64(c.beta2));
        let decay = F::from_f64(1.0 - lr * c.weight_decay);
        let lr_f = F::from_f64(lr);
        let eps = F::from_f64(c.eps);
        let (bc1, bc2) = (F::from_f64(bc1), F::from_f64(bc2));

        for id in store.ids().collect::<Vec<_>>() {
            let idx = id.index();
            let param = store.get_mut(id);
            if !param.trainable {
                continue;
            }
            let cols = param.value.cols();
            let frozen = param.frozen_rows.clone();
            let is_frozen = |k: usize| !frozen.is_empty() && frozen.contains(&(k / cols));
            let n = param.value.len();
            if self.first[idx].len() != n {
                self.first[idx] = vec![F::zero(); n];
                self.second[idx] = vec![F::zero(); n];
            }
            let grad = grads.get(id);
            let (m, v) = (&mut self.first[idx], &mut self.second[idx]);
            for (k, w) in param.value.data_mut().iter_mut().enumerate() {
                if is_frozen(k) {
                    continue;
                }
                *w *= decay;
                let gk = grad.map_or(F::zero(), |g| g[k]);
                m[k] = b1 * m[k] + (F::one() - b1) * gk;
                v[k] = b2 * v[k] + (F::one() - b2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= lr_f * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay to
/// 0 at `total`.
pub fn lr_schedule(step: u64, warmup: u64, total: u64, peak: f64) -> Result<f64> {
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(AutogradError::LearningRate(peak));
    }
    if step >= total {
        return Ok(0.0);
    }
    if step < warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    let span = (total - warmup) as f64;
    let progress = (step - warmup) as f64 / span;
    Ok(peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
