use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::models::RiskTable;
use crate::stats::average_ranks;

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return input_err("correlation inputs differ in length");
    }
    if x.len() < 3 {
        return input_err("correlation needs at least 3 observations");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return input_err("correlation inputs differ in length");
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Pearson correlation between model scores and another per-student measure.
pub fn score_correlation(table: &RiskTable, other: &[f64]) -> Result<f64> {
    pearson(&table.scores(), other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramCorrelation {
    pub program_id: u32,
    pub n: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinProgramCorrelation {
    /// Size-weighted mean of the per-program Spearman correlations.
    pub weighted_mean: f64,
    pub programs: Vec<ProgramCorrelation>,
    /// Programs left out for having fewer than 3 students or a constant series.
    pub skipped: Vec<u32>,
}

/// Spearman correlation between scores and `other` inside every program.
pub fn within_program_rank_corr(table: &RiskTable, other: &[f64]) -> Result<WithinProgramCorrelation> {
    if other.len() != table.len() {
        return input_err("correlation inputs differ in length");
    }
    let mut by_program: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (r, &o) in table.rows.iter().zip(other) {
        let e = by_program.entry(r.program_id).or_default();
        e.0.push(r.score);
        e.1.push(o);
    }
    let mut programs = Vec::new();
    let mut skipped = Vec::new();
    for (id, (s, o)) in by_program {
        match spearman(&s, &o) {
            Ok(rho) => programs.push(ProgramCorrelation { program_id: id, n: s.len(), rho }),
            Err(_) => skipped.push(id),
        }
    }
    let total: usize = programs.iter().map(|p| p.n).sum();
    if total == 0 {
        return Err(Error::Undefined("no program supports a rank correlation".into()));
    }
    let weighted_mean = programs.iter().map(|p| p.rho * p.n as f64).sum::<f64>() / total as f64;
    Ok(WithinProgramCorrelation { weighted_mean, programs, skipped })
}
