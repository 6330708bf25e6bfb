//! Group fairness audits: ABROCA and two-proportion z-tests.

mod abroca;
mod ztest;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use abroca::{
    abroca, abroca_between, weighted_abroca, weighted_mean_se, GroupedRoc, ProgramAbroca, WeightedAbroca,
    MIN_GROUP_SIZE,
};
pub use ztest::{
    audit, independence_test, predicted_labels, score_quintiles, separation_tests, sufficiency_test,
    two_proportion_z, Criterion, FairnessVerdict, ThresholdRule, ZTest, ALPHA, SUFFICIENCY_BINS,
};

use crate::error::{Error, Result};
use crate::models::RiskRow;

/// Binary sensitive attribute; group "a" is the rows where it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Native,
    Female,
    Ses,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Native, Attribute::Female, Attribute::Ses];

    pub fn of(self, row: &RiskRow) -> bool {
        match self {
            Attribute::Native => row.danish_origin,
            Attribute::Female => row.female,
            Attribute::Ses => row.ses_high,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Native => "native",
            Attribute::Female => "female",
            Attribute::Ses => "ses",
        }
    }
}

impl std::str::FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attribute {s:?}")))
    }
}

/// One CSV row per (model, attribute, criterion, cell).
pub fn write_verdicts_csv<W: Write>(rows: &[(String, FairnessVerdict)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model", "attribute", "criterion", "cell", "n_a", "n_b", "rate_a", "rate_b", "z", "p_value", "alpha",
        "reject",
    ])?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    for (model, v) in rows {
        for t in &v.tests {
            w.write_record([
                model.as_str(),
                v.attribute.name(),
                v.criterion.name(),
                &t.cell,
                &t.n_a.to_string(),
                &t.n_b.to_string(),
                &format!("{:.6}", t.rate_a),
                &format!("{:.6}", t.rate_b),
                &opt(t.z),
                &opt(t.p_value),
                &format!("{}", v.alpha_per_test),
                &v.reject.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
