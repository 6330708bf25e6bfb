//! Penalized logistic regression by accelerated proximal gradient.
//!
//! Objective, on median-imputed and standardized features:
//! mean log-loss + (1 / (n C)) * ((1 - r) / 2 * |w|^2 + r * |w|_1),
//! with r = 0 for l2, 1 for l1 and `l1_ratio` for the elastic net. The
//! intercept is not penalized.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::models::tabular::FeatureMatrix;

pub const LOGREG_TOLERANCE: f64 = 1e-8;
pub const LOGREG_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    None,
    L2,
    L1,
    Elasticnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogregParams {
    pub c: f64,
    pub penalty: Penalty,
    pub l1_ratio: f64,
}

impl Default for LogregParams {
    fn default() -> Self {
        LogregParams { c: 1.0, penalty: Penalty::L2, l1_ratio: 0.5 }
    }
}

impl LogregParams {
    /// (l2 weight, l1 weight) per unit of mean loss.
    fn strengths(&self, n: usize) -> (f64, f64) {
        let scale = 1.0 / (n as f64 * self.c);
        match self.penalty {
            Penalty::None => (0.0, 0.0),
            Penalty::L2 => (scale, 0.0),
            Penalty::L1 => (0.0, scale),
            Penalty::Elasticnet => ((1.0 - self.l1_ratio) * scale, self.l1_ratio * scale),
        }
    }
}

/// Per-column median imputation followed by standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let mut medians = Vec::with_capacity(x.n_cols);
        let mut means = Vec::with_capacity(x.n_cols);
        let mut scales = Vec::with_capacity(x.n_cols);
        for j in 0..x.n_cols {
            let mut col: Vec<f64> = x.column(j).into_iter().filter(|v| !v.is_nan()).collect();
            col.sort_by(f64::total_cmp);
            let med = match col.len() {
                0 => 0.0,
                n if n % 2 == 1 => col[n / 2],
                n => (col[n / 2 - 1] + col[n / 2]) / 2.0,
            };
            let filled: Vec<f64> = x.column(j).into_iter().map(|v| if v.is_nan() { med } else { v }).collect();
            let m = filled.iter().sum::<f64>() / filled.len().max(1) as f64;
            let sd = (filled.iter().map(|v| (v - m).powi(2)).sum::<f64>() / filled.len().max(1) as f64).sqrt();
            medians.push(med);
            means.push(m);
            scales.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Standardizer { medians, means, scales }
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.data.len());
        for i in 0..x.n_rows {
            for (j, &v) in x.row(i).iter().enumerate() {
                let v = if v.is_nan() { self.medians[j] } else { v };
                out.push((v - self.means[j]) / self.scales[j]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregModel {
    pub params: LogregParams,
    pub standardizer: Standardizer,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    n: usize,
    d: usize,
    l2: f64,
    l1: f64,
}

impl Problem<'_> {
    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| b + self.x[i * self.d..(i + 1) * self.d].iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    /// Smooth part value and gradient.
    fn smooth(&self, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
        let z = self.margins(w, b);
        let mut loss = 0.0;
        let mut gw = vec![0.0; self.d];
        let mut gb = 0.0;
        for i in 0..self.n {
            loss += log1p_exp(z[i]) - self.y[i] * z[i];
            let r = sigmoid(z[i]) - self.y[i];
            gb += r;
            for (g, a) in gw.iter_mut().zip(&self.x[i * self.d..(i + 1) * self.d]) {
                *g += r * a;
            }
        }
        let inv = 1.0 / self.n as f64;
        let mut value = loss * inv;
        for (g, wj) in gw.iter_mut().zip(w) {
            *g = *g * inv + self.l2 * wj;
        }
        value += 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();
        (value, gw, gb * inv)
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        self.smooth(w, b).0 + self.l1 * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Largest eigenvalue of [X 1]^T [X 1] / n by power iteration.
    fn gram_norm(&self) -> f64 {
        let mut v = vec![1.0; self.d + 1];
        let mut lambda = 1.0;
        for _ in 0..100 {
            let mut xv = vec![0.0; self.n];
            for (i, o) in xv.iter_mut().enumerate() {
                *o = v[self.d]
                    + self.x[i * self.d..(i + 1) * self.d].iter().zip(&v).map(|(a, c)| a * c).sum::<f64>();
            }
            let mut u = vec![0.0; self.d + 1];
            for (i, &s) in xv.iter().enumerate() {
                for (uj, a) in u.iter_mut().zip(&self.x[i * self.d..(i + 1) * self.d]) {
                    *uj += a * s;
                }
                u[self.d] += s;
            }
            let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm / self.n as f64;
            v = u.into_iter().map(|a| a / norm).collect();
        }
        lambda
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

pub fn train_logreg(x: &FeatureMatrix, y: &[bool], params: LogregParams) -> Result<LogregModel> {
    if x.n_rows != y.len() || x.n_rows == 0 {
        return input_err("feature rows and labels differ or are empty");
    }
    if !(params.c > 0.0) || !(0.0..=1.0).contains(&params.l1_ratio) {
        return input_err(format!("invalid logistic regression parameters {params:?}"));
    }
    let standardizer = Standardizer::fit(x);
    let xs = standardizer.apply(x);
    let yf: Vec<f64> = y.iter().map(|&v| v as u8 as f64).collect();
    let (l2, l1) = params.strengths(x.n_rows);
    let p = Problem { x: &xs, y: &yf, n: x.n_rows, d: x.n_cols, l2, l1 };
    // safety margin over the power-iteration estimate
    let lip = 0.25 * p.gram_norm() * 1.05 + l2;
    let step = 1.0 / lip.max(1e-12);

    let base = yf.iter().sum::<f64>() / yf.len() as f64;
    let b0 = if base > 0.0 && base < 1.0 { (base / (1.0 - base)).ln() } else { 0.0 };
    let (mut w, mut b) = (vec![0.0; p.d], b0);
    let (mut vw, mut vb) = (w.clone(), b);
    let mut t = 1.0f64;
    let mut f_prev = p.objective(&w, b);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=LOGREG_MAX_ITER {
        iterations = it;
        let (_, gw, gb) = p.smooth(&vw, vb);
        let nw: Vec<f64> = vw.iter().zip(&gw).map(|(v, g)| soft_threshold(v - step * g, step * l1)).collect();
        let nb = vb - step * gb;
        let f = p.objective(&nw, nb);
        if f > f_prev {
            // adaptive restart: drop momentum and take a plain step from w
            t = 1.0;
            let (_, gw, gb) = p.smooth(&w, b);
            let pw: Vec<f64> = w.iter().zip(&gw).map(|(v, g)| soft_threshold(v - step * g, step * l1)).collect();
            let pb = b - step * gb;
            let fp = p.objective(&pw, pb);
            let done = (f_prev - fp).abs() <= LOGREG_TOLERANCE * f_prev.abs().max(1.0);
            w = pw;
            b = pb;
            vw = w.clone();
            vb = b;
            f_prev = fp;
            if done {
                converged = true;
                break;
            }
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        vw = nw.iter().zip(&w).map(|(a, o)| a + mom * (a - o)).collect();
        vb = nb + mom * (nb - b);
        let done = (f_prev - f).abs() <= LOGREG_TOLERANCE * f_prev.abs().max(1.0);
        w = nw;
        b = nb;
        t = t_next;
        f_prev = f;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("logistic regression did not converge in {iterations} iterations ({params:?})");
    }
    Ok(LogregModel { params, standardizer, weights: w, intercept: b, iterations, converged })
}

impl LogregModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        let xs = self.standardizer.apply(x);
        let d = self.weights.len();
        (0..x.n_rows)
            .map(|i| {
                let z = self.intercept + xs[i * d..(i + 1) * d].iter().zip(&self.weights).map(|(a, c)| a * c).sum::<f64>();
                sigmoid(z)
            })
            .collect()
    }
}
