use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::models::RiskTable;

use super::Attribute;

/// Smallest group size per program admitted to the weighted audit.
pub const MIN_GROUP_SIZE: usize = 5;

/// Empirical ROC of one group as a polyline from (0, 0) to (1, 1).
///
/// Vertices come from sweeping the threshold down through the distinct
/// scores; tied positives and negatives produce a diagonal segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedRoc {
    /// (fpr, tpr), both nondecreasing.
    pub points: Vec<(f64, f64)>,
}

impl GroupedRoc {
    pub fn new(scores: &[f64], labels: &[bool]) -> Result<Self> {
        let pos = labels.iter().filter(|&&y| y).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::Undefined("ROC needs both outcome classes".into()));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut points = vec![(0.0, 0.0)];
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < order.len() {
            let t = scores[order[i]];
            while i < order.len() && scores[order[i]] == t {
                if labels[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        }
        Ok(GroupedRoc { points })
    }

    /// TPR approached from the right of `x` and from the left of `x`.
    fn limits(&self, x: f64) -> (f64, f64) {
        let p = &self.points;
        let first = p.partition_point(|v| v.0 < x);
        let past = p.partition_point(|v| v.0 <= x);
        let interp = |k: usize| {
            // x lies strictly between p[k-1] and p[k]
            let (x0, y0) = p[k - 1];
            let (x1, y1) = p[k];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        };
        if first == past {
            let v = interp(first);
            (v, v)
        } else {
            (p[past - 1].1, p[first].1)
        }
    }

    /// Area under the polyline.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }
}

/// Exact integral of |d| over [a, b] for d linear with end values da, db.
fn abs_linear_integral(da: f64, db: f64, width: f64) -> f64 {
    if da * db >= 0.0 {
        (da.abs() + db.abs()) / 2.0 * width
    } else {
        (da * da + db * db) / (2.0 * (da.abs() + db.abs())) * width
    }
}

/// Area between two ROC curves, integrated along the FPR axis.
pub fn abroca_between(a: &GroupedRoc, b: &GroupedRoc) -> f64 {
    let mut grid: Vec<f64> = a.points.iter().chain(&b.points).map(|p| p.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut total = 0.0;
    for w in grid.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let da = a.limits(x0).0 - b.limits(x0).0;
        let db = a.limits(x1).1 - b.limits(x1).1;
        total += abs_linear_integral(da, db, x1 - x0);
    }
    total.clamp(0.0, 1.0)
}

/// ABROCA between the `group == true` and `group == false` subsets.
pub fn abroca(scores: &[f64], labels: &[bool], group: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.len() != group.len() {
        return input_err("abroca inputs differ in length");
    }
    let split = |g: bool| -> (Vec<f64>, Vec<bool>) {
        (0..scores.len())
            .filter(|&i| group[i] == g)
            .map(|i| (scores[i], labels[i]))
            .unzip()
    };
    let (sa, ya) = split(true);
    let (sb, yb) = split(false);
    let ra = GroupedRoc::new(&sa, &ya)?;
    let rb = GroupedRoc::new(&sb, &yb)?;
    Ok(abroca_between(&ra, &rb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramAbroca {
    pub program_id: u32,
    pub n: usize,
    pub abroca: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAbroca {
    pub attribute: Attribute,
    pub value: f64,
    pub se: f64,
    pub programs: Vec<ProgramAbroca>,
    pub skipped: Vec<u32>,
}

/// Weighted mean and its standard error, sqrt(sum w^2 (x - mean)^2) / sum w.
pub fn weighted_mean_se(values: &[(f64, f64)]) -> (f64, f64) {
    let wsum: f64 = values.iter().map(|v| v.1).sum();
    let mean = values.iter().map(|(x, w)| x * w).sum::<f64>() / wsum;
    let var = values.iter().map(|(x, w)| (w * (x - mean)).powi(2)).sum::<f64>();
    (mean, var.sqrt() / wsum)
}

/// Per-program ABROCA averaged with weights equal to program intake.
pub fn weighted_abroca(table: &RiskTable, attribute: Attribute) -> Result<WeightedAbroca> {
    let mut by_program: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        by_program.entry(r.program_id).or_default().push(i);
    }
    let mut programs = Vec::new();
    let mut skipped = Vec::new();
    for (id, members) in by_program {
        let groups: Vec<bool> = members.iter().map(|&i| attribute.of(&table.rows[i])).collect();
        let in_a = groups.iter().filter(|&&g| g).count();
        if in_a < MIN_GROUP_SIZE || members.len() - in_a < MIN_GROUP_SIZE {
            skipped.push(id);
            continue;
        }
        let scores: Vec<f64> = members.iter().map(|&i| table.rows[i].score).collect();
        let labels: Vec<bool> = members.iter().map(|&i| table.rows[i].outcome).collect();
        match abroca(&scores, &labels, &groups) {
            Ok(v) => programs.push(ProgramAbroca { program_id: id, n: members.len(), abroca: v }),
            Err(_) => skipped.push(id),
        }
    }
    if programs.is_empty() {
        return Err(Error::Undefined(format!("no program supports ABROCA for {}", attribute.name())));
    }
    if !skipped.is_empty() {
        warn!("{} programs skipped for {}", skipped.len(), attribute.name());
    }
    let pairs: Vec<(f64, f64)> = programs.iter().map(|p| (p.abroca, p.n as f64)).collect();
    let (value, se) = weighted_mean_se(&pairs);
    Ok(WeightedAbroca { attribute, value, se, programs, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximal_separation() {
        let scores = [0.9, 0.8, 0.2, 0.1, 0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false, false, false, true, true];
        let group = [true, true, true, true, false, false, false, false];
        assert_eq!(abroca(&scores, &labels, &group).unwrap(), 1.0);
    }

    #[test]
    fn identical_groups() {
        let scores = [0.3, 0.5, 0.5, 0.9, 0.3, 0.5, 0.5, 0.9];
        let labels = [false, true, false, true, false, true, false, true];
        let group = [true, true, true, true, false, false, false, false];
        assert_eq!(abroca(&scores, &labels, &group).unwrap(), 0.0);
    }

    #[test]
    fn crossing_segment_area() {
        // d goes from 0.2 to -0.2 over width 1: two triangles of area 0.05
        assert!((abs_linear_integral(0.2, -0.2, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_arithmetic() {
        let (m, _) = weighted_mean_se(&[(0.1, 100.0), (0.3, 300.0)]);
        assert!((m - 0.25).abs() < 1e-15);
    }
}
