//! Second-order gradient boosting on the logistic loss.
//!
//! Trees grow level by level with exact greedy splits. Each split learns a
//! default direction for missing values by trying both. Leaf weights are
//! -T(G) / (H + lambda), where T soft-thresholds the gradient sum by alpha.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::models::tabular::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub n_estimators: usize,
    pub min_child_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            learning_rate: 0.1,
            max_depth: 4,
            subsample: 1.0,
            colsample_bytree: 1.0,
            lambda: 1.0,
            alpha: 0.0,
            n_estimators: 100,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, missing_left, left, right } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() { *missing_left } else { v < *threshold };
                    k = if go_left { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub base_margin: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

/// Gradient sum after L1 shrinkage.
pub fn shrink(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

/// Optimal leaf weight before the learning rate.
pub fn leaf_weight(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    -shrink(g, alpha) / (h + lambda)
}

fn score(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let t = shrink(g, alpha);
    t * t / (h + lambda)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    missing_left: bool,
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    /// Per feature, (row, value) for rows with a value, ascending by value.
    sorted: &'a [Vec<(u32, f64)>],
    /// Per feature, rows where the value is missing.
    missing: &'a [Vec<u32>],
    p: GbtParams,
}

const NONE: u32 = u32::MAX;

impl Builder<'_> {
    fn leaf(&self, g: f64, h: f64) -> TreeNode {
        TreeNode::Leaf { value: self.p.learning_rate * leaf_weight(g, h, self.p.lambda, self.p.alpha) }
    }

    fn grow(&self, grad: &[f64], hess: &[f64], rows: &[usize], features: &[usize]) -> Tree {
        let n = self.x.n_rows;
        let (lambda, alpha, mcw) = (self.p.lambda, self.p.alpha, self.p.min_child_weight);
        // slot of each row among the open nodes of the current depth
        let mut slot_of = vec![NONE; n];
        for &r in rows {
            slot_of[r] = 0;
        }
        let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
        let (g0, h0) = rows.iter().fold((0.0, 0.0), |a, &r| (a.0 + grad[r], a.1 + hess[r]));
        // open nodes: (tree index, G, H)
        let mut open: Vec<(usize, f64, f64)> = vec![(0, g0, h0)];
        for _depth in 0..self.p.max_depth {
            if open.is_empty() {
                break;
            }
            let k = open.len();
            let parent: Vec<f64> = open.iter().map(|o| score(o.1, o.2, lambda, alpha)).collect();
            let mut best: Vec<Option<Candidate>> = vec![None; k];
            let mut gl = vec![0.0; k];
            let mut hl = vec![0.0; k];
            let mut gm = vec![0.0; k];
            let mut hm = vec![0.0; k];
            let mut last = vec![f64::NAN; k];
            for &f in features {
                gm.fill(0.0);
                hm.fill(0.0);
                for &r in &self.missing[f] {
                    let s = slot_of[r as usize];
                    if s != NONE {
                        gm[s as usize] += grad[r as usize];
                        hm[s as usize] += hess[r as usize];
                    }
                }
                let any_missing = !self.missing[f].is_empty();
                gl.fill(0.0);
                hl.fill(0.0);
                last.fill(f64::NAN);
                for &(r, v) in &self.sorted[f] {
                    let r = r as usize;
                    let s = slot_of[r];
                    if s == NONE {
                        continue;
                    }
                    let s = s as usize;
                    if v != last[s] && !last[s].is_nan() {
                        let (_, g, h) = open[s];
                        let threshold = last[s] + (v - last[s]) / 2.0;
                        let dirs: &[bool] = if any_missing { &[false, true] } else { &[false] };
                        for &missing_left in dirs {
                            let (g_l, h_l) = if missing_left { (gl[s] + gm[s], hl[s] + hm[s]) } else { (gl[s], hl[s]) };
                            let (g_r, h_r) = (g - g_l, h - h_l);
                            if h_l < mcw || h_r < mcw {
                                continue;
                            }
                            let gain = 0.5 * (score(g_l, h_l, lambda, alpha) + score(g_r, h_r, lambda, alpha) - parent[s]);
                            if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate { gain, feature: f, threshold, missing_left });
                            }
                        }
                    }
                    gl[s] += grad[r];
                    hl[s] += hess[r];
                    last[s] = v;
                }
            }
            // children get consecutive slots at the next depth
            let mut child_slot: Vec<Option<(u32, Candidate)>> = vec![None; k];
            let mut next: Vec<(usize, f64, f64)> = Vec::new();
            for (s, &(idx, g, h)) in open.iter().enumerate() {
                match best[s] {
                    Some(c) => {
                        let left = nodes.len();
                        nodes.push(TreeNode::Leaf { value: 0.0 });
                        nodes.push(TreeNode::Leaf { value: 0.0 });
                        nodes[idx] = TreeNode::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            missing_left: c.missing_left,
                            left,
                            right: left + 1,
                        };
                        child_slot[s] = Some((next.len() as u32, c));
                        next.push((left, 0.0, 0.0));
                        next.push((left + 1, 0.0, 0.0));
                    }
                    None => nodes[idx] = self.leaf(g, h),
                }
            }
            for &r in rows {
                let s = slot_of[r];
                if s == NONE {
                    continue;
                }
                match child_slot[s as usize] {
                    Some((base, c)) => {
                        let v = self.x.get(r, c.feature);
                        let go_left = if v.is_nan() { c.missing_left } else { v < c.threshold };
                        let child = base + u32::from(!go_left);
                        slot_of[r] = child;
                        next[child as usize].1 += grad[r];
                        next[child as usize].2 += hess[r];
                    }
                    None => slot_of[r] = NONE,
                }
            }
            open = next;
        }
        for (idx, g, h) in open {
            nodes[idx] = self.leaf(g, h);
        }
        Tree { nodes }
    }
}

pub fn train_gbt<R: Rng>(x: &FeatureMatrix, y: &[bool], params: GbtParams, rng: &mut R) -> Result<GbtModel> {
    if params.max_depth < 1 {
        return input_err("max_depth must be at least 1");
    }
    if x.n_rows != y.len() || x.n_rows == 0 {
        return input_err("feature rows and labels differ or are empty");
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) || !(params.colsample_bytree > 0.0 && params.colsample_bytree <= 1.0) {
        return input_err("subsample ratios must lie in (0, 1]");
    }
    if params.learning_rate < 0.0 || params.lambda < 0.0 || params.alpha < 0.0 {
        return input_err("learning rate and regularization must be nonnegative");
    }
    let n = x.n_rows;
    let yf: Vec<f64> = y.iter().map(|&v| v as u8 as f64).collect();
    let base = (yf.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_margin = (base / (1.0 - base)).ln();
    let mut sorted: Vec<Vec<(u32, f64)>> = Vec::with_capacity(x.n_cols);
    let mut missing: Vec<Vec<u32>> = Vec::with_capacity(x.n_cols);
    for f in 0..x.n_cols {
        let (mut present, mut absent) = (Vec::new(), Vec::new());
        for r in 0..n {
            let v = x.get(r, f);
            if v.is_nan() {
                absent.push(r as u32);
            } else {
                present.push((r as u32, v));
            }
        }
        present.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        sorted.push(present);
        missing.push(absent);
    }
    let builder = Builder { x, sorted: &sorted, missing: &missing, p: params };
    let mut margin = vec![base_margin; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let n_rows = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_feat = ((params.colsample_bytree * x.n_cols as f64).round() as usize).clamp(1, x.n_cols.max(1));
    for _ in 0..params.n_estimators {
        let mut rows: Vec<usize> = if n_rows < n { sample(rng, n, n_rows).into_vec() } else { (0..n).collect() };
        rows.sort_unstable();
        let mut features: Vec<usize> = if n_feat < x.n_cols {
            sample(rng, x.n_cols, n_feat).into_vec()
        } else {
            (0..x.n_cols).collect()
        };
        features.sort_unstable();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for &r in &rows {
            let p = sigmoid(margin[r]);
            grad[r] = p - yf[r];
            hess[r] = p * (1.0 - p);
        }
        let tree = builder.grow(&grad, &hess, &rows, &features);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.eval(x.row(i));
        }
        trees.push(tree);
    }
    Ok(GbtModel { params, base_margin, n_features: x.n_cols, trees })
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows).map(|i| sigmoid(self.margin(x.row(i)))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn leaf_formula() {
        assert_eq!(leaf_weight(4.0, 2.0, 1.0, 1.0), -1.0);
        assert_eq!(leaf_weight(0.5, 2.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn one_stump_separates() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 7) as f64, i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 8).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let p = GbtParams { max_depth: 1, n_estimators: 1, learning_rate: 0.3, ..Default::default() };
        let m = train_gbt(&x, &y, p, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
        let acc = m.predict(&x).iter().zip(&y).filter(|(p, &t)| (**p > 0.5) == t).count();
        assert_eq!(acc, 20);
    }

    #[test]
    fn missing_values_take_learned_direction() {
        let mut rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let mut y: Vec<bool> = (0..30).map(|i| i >= 15).collect();
        for _ in 0..10 {
            rows.push(vec![f64::NAN]);
            y.push(true);
        }
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let p = GbtParams { max_depth: 1, n_estimators: 1, ..Default::default() };
        let m = train_gbt(&x, &y, p, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
        match &m.trees[0].nodes[0] {
            TreeNode::Split { missing_left, threshold, .. } => {
                assert!(!missing_left);
                assert_eq!(*threshold, 14.5);
            }
            other => panic!("expected a split, got {other:?}"),
        }
    }
}
