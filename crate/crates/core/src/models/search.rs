//! Randomized hyperparameter search with stratified k-fold cross-validation.

use std::io::Write;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::models::gbt::{train_gbt, GbtParams};
use crate::models::logreg::{train_logreg, LogregParams, Penalty};
use crate::models::tabular::FeatureMatrix;
use crate::policy::auc;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabularFamily {
    Logreg,
    Gbt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TabularHyper {
    Logreg(LogregParams),
    Gbt(GbtParams),
}

impl TabularHyper {
    pub fn family(&self) -> TabularFamily {
        match self {
            TabularHyper::Logreg(_) => TabularFamily::Logreg,
            TabularHyper::Gbt(_) => TabularFamily::Gbt,
        }
    }
}

/// Sampling distributions, `scipy.stats` style: `Uniform(loc, scale)` covers
/// `[loc, loc + scale]`, `RandInt(lo, hi)` excludes `hi`, `LogUniform(a, b)`
/// covers `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub max_depth: (usize, usize),
    pub subsample: (f64, f64),
    pub colsample_bytree: (f64, f64),
    pub lambda: (f64, f64),
    pub alpha: (f64, f64),
    pub n_estimators: (usize, usize),
    pub c: (f64, f64),
    pub l1_ratio: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            learning_rate: (0.01, 0.99),
            max_depth: (2, 13),
            subsample: (0.01, 0.99),
            colsample_bytree: (0.01, 0.99),
            lambda: (1e-9, 100.0),
            alpha: (1e-9, 100.0),
            n_estimators: (50, 5001),
            c: (1e-6, 1e6),
            l1_ratio: (0.01, 0.99),
        }
    }
}

fn scipy_uniform<R: Rng>(rng: &mut R, (loc, scale): (f64, f64)) -> f64 {
    Uniform::new_inclusive(loc, loc + scale).expect("finite bounds").sample(rng)
}

impl SearchSpace {
    pub fn sample<R: Rng>(&self, family: TabularFamily, rng: &mut R) -> TabularHyper {
        match family {
            TabularFamily::Logreg => {
                let (lo, hi) = self.c;
                let c = Uniform::new_inclusive(lo.ln(), hi.ln()).expect("finite bounds").sample(rng).exp();
                let penalty = [Penalty::None, Penalty::L2, Penalty::L1, Penalty::Elasticnet][rng.random_range(0..4)];
                let l1_ratio = scipy_uniform(rng, self.l1_ratio).min(1.0);
                TabularHyper::Logreg(LogregParams { c, penalty, l1_ratio })
            }
            TabularFamily::Gbt => TabularHyper::Gbt(GbtParams {
                learning_rate: scipy_uniform(rng, self.learning_rate),
                max_depth: rng.random_range(self.max_depth.0..self.max_depth.1),
                subsample: scipy_uniform(rng, self.subsample).min(1.0),
                colsample_bytree: scipy_uniform(rng, self.colsample_bytree).min(1.0),
                lambda: scipy_uniform(rng, self.lambda),
                alpha: scipy_uniform(rng, self.alpha),
                n_estimators: rng.random_range(self.n_estimators.0..self.n_estimators.1),
                min_child_weight: 1.0,
            }),
        }
    }
}

/// Fold index per row; each class is shuffled and dealt round-robin.
pub fn stratified_folds<R: Rng>(labels: &[bool], k: usize, rng: &mut R) -> Vec<usize> {
    let mut fold = vec![0; labels.len()];
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold[i] = j % k;
        }
    }
    fold
}

pub fn fit_predict(hyper: &TabularHyper, x: &FeatureMatrix, y: &[bool], test: &FeatureMatrix, seed: u64) -> Result<Vec<f64>> {
    match hyper {
        TabularHyper::Logreg(p) => Ok(train_logreg(x, y, *p)?.predict(test)),
        TabularHyper::Gbt(p) => {
            let mut rng = substream(seed, "gbt");
            Ok(train_gbt(x, y, *p, &mut rng)?.predict(test))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub id: usize,
    pub hyper: TabularHyper,
    /// `None` for a skipped fold.
    pub fold_aucs: Vec<Option<f64>>,
    pub mean_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: usize,
    pub candidates: Vec<CandidateResult>,
}

impl SearchResult {
    pub fn best_hyper(&self) -> TabularHyper {
        self.candidates[self.best].hyper
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.candidates.first().map_or(0, |c| c.fold_aucs.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["candidate".to_string(), "hyperparameters".to_string()];
        header.extend((0..k).map(|f| format!("fold{f}_auc")));
        header.push("mean_auc".into());
        w.write_record(&header)?;
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10}"));
        for c in &self.candidates {
            let mut rec = vec![c.id.to_string(), serde_json::to_string(&c.hyper)?];
            rec.extend(c.fold_aucs.iter().map(|&a| fmt(a)));
            rec.push(fmt(c.mean_auc));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the given candidates by k-fold CV; the first candidate with the
/// highest mean fold AUC wins.
pub fn cross_validate(candidates: &[TabularHyper], x: &FeatureMatrix, y: &[bool], k_folds: usize, seed: u64) -> Result<SearchResult> {
    if candidates.is_empty() {
        return input_err("no search candidates");
    }
    if k_folds < 2 || x.n_rows != y.len() || x.n_rows < k_folds {
        return input_err(format!("cannot run {k_folds}-fold CV on {} rows", x.n_rows));
    }
    let fold = stratified_folds(y, k_folds, &mut substream(seed, "cv-folds"));
    let mut splits = Vec::with_capacity(k_folds);
    for f in 0..k_folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
        let ty: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        let ry: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let single = |v: &[bool]| v.iter().all(|&b| b) || v.iter().all(|&b| !b);
        if single(&ty) || single(&ry) {
            warn!("fold {f} has a single outcome class and is skipped");
            splits.push(None);
        } else {
            splits.push(Some((x.select_rows(&train), ry, x.select_rows(&test), ty)));
        }
    }
    let mut results = Vec::with_capacity(candidates.len());
    for (id, hyper) in candidates.iter().enumerate() {
        let mut fold_aucs = Vec::with_capacity(k_folds);
        for (f, split) in splits.iter().enumerate() {
            let a = match split {
                None => None,
                Some((xr, yr, xt, yt)) => {
                    let p = fit_predict(hyper, xr, yr, xt, seed ^ ((id as u64) << 8) ^ f as u64)?;
                    Some(auc(&p, yt)?)
                }
            };
            fold_aucs.push(a);
        }
        let done: Vec<f64> = fold_aucs.iter().flatten().copied().collect();
        let mean_auc = (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64);
        results.push(CandidateResult { id, hyper: *hyper, fold_aucs, mean_auc });
    }
    let mut best: Option<usize> = None;
    for r in &results {
        if let Some(m) = r.mean_auc {
            if best.is_none_or(|b| m > results[b].mean_auc.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(r.id);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Undefined("every fold was skipped".into()))?;
    Ok(SearchResult { best, candidates: results })
}

/// Draws `n_candidates` settings from `space` and cross-validates them.
pub fn random_search_cv(
    family: TabularFamily,
    space: &SearchSpace,
    x: &FeatureMatrix,
    y: &[bool],
    n_candidates: usize,
    k_folds: usize,
    seed: u64,
) -> Result<SearchResult> {
    let mut rng = substream(seed, "search-candidates");
    let candidates: Vec<TabularHyper> = (0..n_candidates).map(|_| space.sample(family, &mut rng)).collect();
    cross_validate(&candidates, x, y, k_folds, seed)
}
