use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{input_err, Result};
use crate::models::RiskTable;
use crate::stats::ascending_order;

use super::Attribute;

pub const ALPHA: f64 = 0.05;
pub const SUFFICIENCY_BINS: usize = 5;

/// How binary predictions are cut from scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Predict completion for the top k scores, k = observed completions.
    BaseRateQuantile,
    /// Predict completion when score >= the value.
    Fixed(f64),
}

/// Binary predictions under `rule`; quantile ties go to the lower student id.
pub fn predicted_labels(table: &RiskTable, rule: ThresholdRule) -> Vec<bool> {
    match rule {
        ThresholdRule::Fixed(t) => table.rows.iter().map(|r| r.score >= t).collect(),
        ThresholdRule::BaseRateQuantile => {
            let k = table.rows.iter().filter(|r| r.outcome).count();
            let n = table.len();
            let order = ascending_order(n, |i| -table.rows[i].score, |i| table.rows[i].student_id);
            let mut out = vec![false; n];
            for &i in order.iter().take(k) {
                out[i] = true;
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub cell: String,
    pub n_a: usize,
    pub n_b: usize,
    pub rate_a: f64,
    pub rate_b: f64,
    /// None when a group is empty or the pooled rate is 0 or 1.
    pub z: Option<f64>,
    pub p_value: Option<f64>,
}

/// Pooled two-proportion z-test of group a against group b.
pub fn two_proportion_z(cell: &str, hits_a: usize, n_a: usize, hits_b: usize, n_b: usize) -> ZTest {
    let rate = |h: usize, n: usize| if n == 0 { f64::NAN } else { h as f64 / n as f64 };
    let (ra, rb) = (rate(hits_a, n_a), rate(hits_b, n_b));
    let mut test = ZTest {
        cell: cell.to_string(),
        n_a,
        n_b,
        rate_a: ra,
        rate_b: rb,
        z: None,
        p_value: None,
    };
    if n_a == 0 || n_b == 0 {
        return test;
    }
    let pooled = (hits_a + hits_b) as f64 / (n_a + n_b) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64);
    if var <= 0.0 {
        return test;
    }
    let z = (ra - rb) / var.sqrt();
    test.z = Some(z);
    test.p_value = Some(erfc(z.abs() / std::f64::consts::SQRT_2));
    test
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Independence,
    SeparationTpr,
    SeparationFpr,
    Sufficiency,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Independence => "independence",
            Criterion::SeparationTpr => "separation_tpr",
            Criterion::SeparationFpr => "separation_fpr",
            Criterion::Sufficiency => "sufficiency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessVerdict {
    pub criterion: Criterion,
    pub attribute: Attribute,
    pub tests: Vec<ZTest>,
    /// Per-test level after any Bonferroni correction.
    pub alpha_per_test: f64,
    pub reject: bool,
    /// Sign of rate_a - rate_b in the test with the largest |z| (0 if none).
    pub direction: i8,
}

impl FairnessVerdict {
    fn from_tests(criterion: Criterion, attribute: Attribute, tests: Vec<ZTest>, alpha: f64) -> Self {
        let reject = tests.iter().any(|t| t.p_value.is_some_and(|p| p < alpha));
        let direction = tests
            .iter()
            .filter_map(|t| t.z)
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .map_or(0, |z| z.signum() as i8);
        FairnessVerdict {
            criterion,
            attribute,
            tests,
            alpha_per_test: alpha,
            reject,
            direction,
        }
    }

    pub fn computable(&self) -> bool {
        self.tests.iter().any(|t| t.z.is_some())
    }
}

fn check(table: &RiskTable) -> Result<()> {
    if table.is_empty() {
        return input_err("empty risk table");
    }
    Ok(())
}

/// Compares P(hit) between groups over the rows where `keep` holds.
fn test_cell(
    table: &RiskTable,
    attribute: Attribute,
    cell: &str,
    keep: impl Fn(usize) -> bool,
    hit: impl Fn(usize) -> bool,
) -> ZTest {
    let (mut ha, mut na, mut hb, mut nb) = (0, 0, 0, 0);
    for i in (0..table.len()).filter(|&i| keep(i)) {
        if attribute.of(&table.rows[i]) {
            na += 1;
            ha += hit(i) as usize;
        } else {
            nb += 1;
            hb += hit(i) as usize;
        }
    }
    two_proportion_z(cell, ha, na, hb, nb)
}

/// Demographic parity: P(predicted completion) equal across groups.
pub fn independence_test(table: &RiskTable, attribute: Attribute, rule: ThresholdRule) -> Result<FairnessVerdict> {
    check(table)?;
    let yhat = predicted_labels(table, rule);
    let t = test_cell(table, attribute, "all", |_| true, |i| yhat[i]);
    Ok(FairnessVerdict::from_tests(Criterion::Independence, attribute, vec![t], ALPHA))
}

/// Equalized odds, tested separately on true and false positive rates.
pub fn separation_tests(
    table: &RiskTable,
    attribute: Attribute,
    rule: ThresholdRule,
) -> Result<[FairnessVerdict; 2]> {
    check(table)?;
    let yhat = predicted_labels(table, rule);
    let y = table.outcomes();
    let tpr = test_cell(table, attribute, "y=1", |i| y[i], |i| yhat[i]);
    let fpr = test_cell(table, attribute, "y=0", |i| !y[i], |i| yhat[i]);
    Ok([
        FairnessVerdict::from_tests(Criterion::SeparationTpr, attribute, vec![tpr], ALPHA),
        FairnessVerdict::from_tests(Criterion::SeparationFpr, attribute, vec![fpr], ALPHA),
    ])
}

/// Score quintile (0..5) of each row; ties go to the lower student id.
pub fn score_quintiles(table: &RiskTable) -> Vec<usize> {
    let n = table.len();
    let order = ascending_order(n, |i| table.rows[i].score, |i| table.rows[i].student_id);
    let mut bins = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        bins[i] = rank * SUFFICIENCY_BINS / n;
    }
    bins
}

/// Calibration within score quintiles: P(completion | bin) equal across
/// groups, with a Bonferroni-corrected level per bin.
pub fn sufficiency_test(table: &RiskTable, attribute: Attribute) -> Result<FairnessVerdict> {
    check(table)?;
    let bins = score_quintiles(table);
    let y = table.outcomes();
    let tests = (0..SUFFICIENCY_BINS)
        .map(|b| test_cell(table, attribute, &format!("quintile_{}", b + 1), |i| bins[i] == b, |i| y[i]))
        .collect();
    Ok(FairnessVerdict::from_tests(
        Criterion::Sufficiency,
        attribute,
        tests,
        ALPHA / SUFFICIENCY_BINS as f64,
    ))
}

/// All four verdicts for one attribute.
pub fn audit(table: &RiskTable, attribute: Attribute, rule: ThresholdRule) -> Result<Vec<FairnessVerdict>> {
    let [tpr, fpr] = separation_tests(table, attribute, rule)?;
    Ok(vec![
        independence_test(table, attribute, rule)?,
        tpr,
        fpr,
        sufficiency_test(table, attribute)?,
    ])
}
