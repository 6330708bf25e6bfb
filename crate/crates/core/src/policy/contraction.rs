use std::collections::BTreeMap;
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cohort::Quota;
use crate::error::{input_err, Error, Result};
use crate::models::{RiskRow, RiskTable};
use crate::stats::ascending_order;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    WithinProgram,
    Ungrouped,
    PerField,
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within_program" => Ok(Grouping::WithinProgram),
            "ungrouped" => Ok(Grouping::Ungrouped),
            "per_field" => Ok(Grouping::PerField),
            other => Err(Error::Config(format!("unknown grouping {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    /// 1 = lowest predicted completion.
    pub bin: usize,
    pub count: usize,
    pub completion_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCurve {
    pub grouping: Grouping,
    pub bins: Vec<CurveBin>,
    pub overall_rate: f64,
}

impl ContractionCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["grouping", "bin", "count", "completion_rate", "overall_rate"])?;
        let g = serde_json::to_value(self.grouping)?;
        let g = g.as_str().unwrap_or_default().to_string();
        for b in &self.bins {
            w.write_record([
                g.clone(),
                b.bin.to_string(),
                b.count.to_string(),
                format!("{:.6}", b.completion_rate),
                format!("{:.6}", self.overall_rate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn group_key(row: &RiskRow, grouping: Grouping) -> u64 {
    match grouping {
        Grouping::WithinProgram => row.program_id as u64,
        Grouping::Ungrouped => 0,
        Grouping::PerField => row.isced_field as u64,
    }
}

fn groups(table: &RiskTable, key: impl Fn(&RiskRow) -> u64) -> BTreeMap<u64, Vec<usize>> {
    let mut out: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        out.entry(key(r)).or_default().push(i);
    }
    out
}

/// Bin of each row (1-based): rank r of n within its group goes to floor(r * bins / n) + 1.
pub fn assign_bins(table: &RiskTable, grouping: Grouping, n_bins: usize) -> Result<Vec<usize>> {
    if n_bins == 0 {
        return input_err("n_bins must be positive");
    }
    let mut bins = vec![0; table.len()];
    for (key, members) in groups(table, |r| group_key(r, grouping)) {
        let n = members.len();
        if n < n_bins {
            warn!("group {key} has {n} students, fewer than {n_bins} bins; assigning by rank index");
        }
        let order = ascending_order(n, |k| table.rows[members[k]].score, |k| table.rows[members[k]].student_id);
        for (rank, &k) in order.iter().enumerate() {
            bins[members[k]] = rank * n_bins / n + 1;
        }
    }
    Ok(bins)
}

/// Observed completion rate per ascending predicted-completion bin.
pub fn contraction_curve(table: &RiskTable, grouping: Grouping, n_bins: usize) -> Result<ContractionCurve> {
    if table.is_empty() {
        return input_err("empty risk table");
    }
    let bins = assign_bins(table, grouping, n_bins)?;
    let mut count = vec![0usize; n_bins];
    let mut done = vec![0usize; n_bins];
    for (r, &b) in table.rows.iter().zip(&bins) {
        count[b - 1] += 1;
        done[b - 1] += r.outcome as usize;
    }
    let total_done: usize = done.iter().sum();
    Ok(ContractionCurve {
        grouping,
        bins: (0..n_bins)
            .map(|b| CurveBin {
                bin: b + 1,
                count: count[b],
                completion_rate: if count[b] == 0 { f64::NAN } else { done[b] as f64 / count[b] as f64 },
            })
            .collect(),
        overall_rate: total_done as f64 / table.len() as f64,
    })
}

/// Within-program curves computed separately for each field.
pub fn curves_by_field(table: &RiskTable, n_bins: usize) -> Result<BTreeMap<u8, ContractionCurve>> {
    let mut fields: Vec<u8> = table.rows.iter().map(|r| r.isced_field).collect();
    fields.sort_unstable();
    fields.dedup();
    fields
        .into_iter()
        .map(|f| {
            let sub = table.filter(|r| r.isced_field == f);
            Ok((f, contraction_curve(&sub, Grouping::WithinProgram, n_bins)?))
        })
        .collect()
}

/// Ranking the model is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineRanking {
    Gpa,
    HumanDecile,
    /// GPA for quota-1 admits and the human decile for quota-2 admits.
    AdmissionRule,
}

fn baseline_key(row: &RiskRow, baseline: BaselineRanking) -> Result<f64> {
    let human = || {
        row.human_rank_decile
            .map(f64::from)
            .ok_or_else(|| Error::Input(format!("student {} has no human decile", row.student_id)))
    };
    match baseline {
        BaselineRanking::Gpa => Ok(row.gpa),
        BaselineRanking::HumanDecile => human(),
        BaselineRanking::AdmissionRule => match row.quota {
            Quota::Gpa => Ok(row.gpa),
            Quota::Human => human(),
        },
    }
}

/// Number rejected from a pool of `n`: ceil(fraction * n).
pub fn rejection_count(fraction: f64, n: usize) -> usize {
    // the slack keeps 0.1 * 30 from rounding up to 4
    let k = (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    k.min(n)
}

/// Rejects the bottom `fraction` of each (program, quota) pool by `key`.
fn reject(table: &RiskTable, fraction: f64, key: &dyn Fn(&RiskRow) -> Result<f64>) -> Result<Vec<bool>> {
    let pools = groups(table, |r| ((r.program_id as u64) << 1) | (r.quota == Quota::Human) as u64);
    let mut rejected = vec![false; table.len()];
    for members in pools.values() {
        let keys = members.iter().map(|&i| key(&table.rows[i])).collect::<Result<Vec<f64>>>()?;
        let order = ascending_order(members.len(), |k| keys[k], |k| table.rows[members[k]].student_id);
        for &k in order.iter().take(rejection_count(fraction, members.len())) {
            rejected[members[k]] = true;
        }
    }
    Ok(rejected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedStats {
    pub rejected: usize,
    pub graduates: usize,
    /// Percent of the rejected who graduated.
    pub graduation_rate: f64,
}

impl RejectedStats {
    fn of(rows: &[&RiskRow]) -> Self {
        let graduates = rows.iter().filter(|r| r.outcome).count();
        let rejected = rows.len();
        RejectedStats {
            rejected,
            graduates,
            graduation_rate: if rejected == 0 { f64::NAN } else { 100.0 * graduates as f64 / rejected as f64 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionBlock {
    Gpa,
    Human,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockComparison {
    pub block: AdmissionBlock,
    pub model: RejectedStats,
    pub baseline: RejectedStats,
    /// Baseline graduates rejected minus model graduates rejected.
    pub dropout_reduction: i64,
    /// Baseline graduation rate minus model graduation rate, in points.
    pub pp_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub fraction: f64,
    pub baseline: BaselineRanking,
    pub blocks: Vec<BlockComparison>,
    pub rejected_by_model: Vec<u64>,
    pub rejected_by_baseline: Vec<u64>,
}

impl ContractionReport {
    pub fn block(&self, block: AdmissionBlock) -> &BlockComparison {
        self.blocks.iter().find(|b| b.block == block).expect("all blocks present")
    }

    /// Rows as in the contracted-students table: measure, block, model, baseline.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["measure", "admission_type", "model", "baseline"])?;
        let name = |b: AdmissionBlock| match b {
            AdmissionBlock::Gpa => "gpa",
            AdmissionBlock::Human => "human",
            AdmissionBlock::Both => "both",
        };
        for b in &self.blocks {
            w.write_record(["rejected", name(b.block), &b.model.rejected.to_string(), &b.baseline.rejected.to_string()])?;
        }
        for b in &self.blocks {
            w.write_record(["graduates", name(b.block), &b.model.graduates.to_string(), &b.baseline.graduates.to_string()])?;
        }
        for b in &self.blocks {
            w.write_record(["reduction_in_dropout", name(b.block), &b.dropout_reduction.to_string(), "0"])?;
        }
        for b in &self.blocks {
            w.write_record([
                "graduation_rate",
                name(b.block),
                &format!("{:.1}", b.model.graduation_rate),
                &format!("{:.1}", b.baseline.graduation_rate),
            ])?;
        }
        for b in &self.blocks {
            w.write_record(["pp_graduation_rate_difference", name(b.block), &format!("{:.1}", b.pp_difference), "0"])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rejects the lowest-ranked `fraction` of each program's quota pool under the
/// model scores and under the baseline, and compares whom each rejects.
pub fn contraction_counterfactual(
    table: &RiskTable,
    baseline: BaselineRanking,
    fraction: f64,
) -> Result<ContractionReport> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return input_err(format!("fraction {fraction} outside (0, 1]"));
    }
    if table.is_empty() {
        return input_err("empty risk table");
    }
    let by_model = reject(table, fraction, &|r| Ok(r.score))?;
    let by_base = reject(table, fraction, &|r| baseline_key(r, baseline))?;

    let pick = |mask: &[bool], block: AdmissionBlock| -> Vec<&RiskRow> {
        table
            .rows
            .iter()
            .zip(mask)
            .filter(|(r, &m)| {
                m && match block {
                    AdmissionBlock::Gpa => r.quota == Quota::Gpa,
                    AdmissionBlock::Human => r.quota == Quota::Human,
                    AdmissionBlock::Both => true,
                }
            })
            .map(|(r, _)| r)
            .collect()
    };
    let blocks = [AdmissionBlock::Gpa, AdmissionBlock::Human, AdmissionBlock::Both]
        .into_iter()
        .map(|block| {
            let model = RejectedStats::of(&pick(&by_model, block));
            let base = RejectedStats::of(&pick(&by_base, block));
            let pp = if model.rejected == 0 { 0.0 } else { base.graduation_rate - model.graduation_rate };
            BlockComparison {
                block,
                dropout_reduction: base.graduates as i64 - model.graduates as i64,
                pp_difference: pp,
                model,
                baseline: base,
            }
        })
        .collect();
    let ids = |mask: &[bool]| -> Vec<u64> {
        let mut v: Vec<u64> = table.rows.iter().zip(mask).filter(|(_, &m)| m).map(|(r, _)| r.student_id).collect();
        v.sort_unstable();
        v
    };
    Ok(ContractionReport {
        fraction,
        baseline,
        blocks,
        rejected_by_model: ids(&by_model),
        rejected_by_baseline: ids(&by_base),
    })
}
