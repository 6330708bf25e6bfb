//! Fixed-effects decomposition of counterfactual predictions.
//!
//! Each row is student i's predicted completion at program j in field k. The
//! specs regress p on a constant plus student effects, program effects, both,
//! or both plus a same-field indicator. Effects are found by alternating
//! within-transformations; the same-field slope by partialling out the
//! effects from both sides.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};

/// Convergence threshold on the largest coefficient change per sweep.
pub const FE_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeSpec {
    StudentOnly,
    ProgramOnly,
    Both,
    BothSameField,
}

impl FeSpec {
    pub const ALL: [FeSpec; 4] = [FeSpec::StudentOnly, FeSpec::ProgramOnly, FeSpec::Both, FeSpec::BothSameField];

    fn students(self) -> bool {
        self != FeSpec::ProgramOnly
    }

    fn programs(self) -> bool {
        self != FeSpec::StudentOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRow {
    pub student_id: u64,
    pub program_id: u32,
    /// Field of the program the student actually enrolled in.
    pub observed_field: u8,
    /// Field of program j.
    pub field: u8,
    pub p: f64,
}

impl CounterfactualRow {
    pub fn same_field(&self) -> bool {
        self.observed_field == self.field
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldResidual {
    pub observed_field: u8,
    pub counterfactual_field: u8,
    pub mean_residual: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub spec: FeSpec,
    pub alpha: f64,
    /// Centred to zero mean over rows.
    pub student_effects: BTreeMap<u64, f64>,
    /// Centred to zero mean over rows.
    pub program_effects: BTreeMap<u32, f64>,
    pub beta: Option<Coefficient>,
    pub residuals: Vec<f64>,
    pub field_residuals: Vec<FieldResidual>,
    /// Levels absorbed for identification.
    pub dropped: Vec<String>,
    pub sweeps: usize,
}

impl DecompositionResult {
    pub fn mean_residual_by_program(&self, rows: &[CounterfactualRow]) -> BTreeMap<u32, f64> {
        let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for (r, e) in rows.iter().zip(&self.residuals) {
            let a = acc.entry(r.program_id).or_default();
            a.0 += e;
            a.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

struct Design {
    student: Vec<usize>,
    program: Vec<usize>,
    n_students: usize,
    n_programs: usize,
    student_ids: Vec<u64>,
    program_ids: Vec<u32>,
}

impl Design {
    fn new(rows: &[CounterfactualRow]) -> Self {
        let mut sid: BTreeMap<u64, usize> = rows.iter().map(|r| (r.student_id, 0)).collect();
        let mut pid: BTreeMap<u32, usize> = rows.iter().map(|r| (r.program_id, 0)).collect();
        for (i, v) in sid.values_mut().enumerate() {
            *v = i;
        }
        for (i, v) in pid.values_mut().enumerate() {
            *v = i;
        }
        Design {
            student: rows.iter().map(|r| sid[&r.student_id]).collect(),
            program: rows.iter().map(|r| pid[&r.program_id]).collect(),
            n_students: sid.len(),
            n_programs: pid.len(),
            student_ids: sid.keys().copied().collect(),
            program_ids: pid.keys().copied().collect(),
        }
    }

    fn group_mean(&self, v: &[f64], idx: &[usize], n: usize) -> Vec<f64> {
        let mut sum = vec![0.0; n];
        let mut cnt = vec![0usize; n];
        for (x, &g) in v.iter().zip(idx) {
            sum[g] += x;
            cnt[g] += 1;
        }
        sum.iter().zip(&cnt).map(|(s, &c)| s / c as f64).collect()
    }

    /// Fits v = gamma_i + delta_j by alternating group means.
    fn fit(&self, v: &[f64], spec: FeSpec) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let mut gamma = vec![0.0; self.n_students];
        let mut delta = vec![0.0; self.n_programs];
        let mut work = vec![0.0; v.len()];
        for sweep in 1..=MAX_SWEEPS {
            let mut change: f64 = 0.0;
            if spec.students() {
                for (k, w) in work.iter_mut().enumerate() {
                    *w = v[k] - delta[self.program[k]];
                }
                let g = self.group_mean(&work, &self.student, self.n_students);
                for (old, new) in gamma.iter_mut().zip(g) {
                    change = change.max((new - *old).abs());
                    *old = new;
                }
            }
            if spec.programs() {
                for (k, w) in work.iter_mut().enumerate() {
                    *w = v[k] - gamma[self.student[k]];
                }
                let d = self.group_mean(&work, &self.program, self.n_programs);
                for (old, new) in delta.iter_mut().zip(d) {
                    change = change.max((new - *old).abs());
                    *old = new;
                }
            }
            let single = !(spec.students() && spec.programs());
            if single || (sweep > 1 && change < FE_TOLERANCE) {
                return Ok((gamma, delta, sweep));
            }
        }
        Err(Error::NotConverged { iterations: MAX_SWEEPS })
    }

    fn residualize(&self, v: &[f64], spec: FeSpec) -> Result<(Vec<f64>, usize)> {
        let (g, d, sweeps) = self.fit(v, spec)?;
        let r = v
            .iter()
            .enumerate()
            .map(|(k, x)| x - g[self.student[k]] - d[self.program[k]])
            .collect();
        Ok((r, sweeps))
    }

    /// Connected components of the student-program bipartite graph, each
    /// represented by its smallest program index.
    fn components(&self) -> Vec<usize> {
        let n = self.n_students + self.n_programs;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (&s, &j) in self.student.iter().zip(&self.program) {
            let a = find(&mut parent, s);
            let b = find(&mut parent, self.n_students + j);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut reps: BTreeMap<usize, usize> = BTreeMap::new();
        for j in 0..self.n_programs {
            let root = find(&mut parent, self.n_students + j);
            reps.entry(root).or_insert(j);
        }
        reps.into_values().collect()
    }
}

/// Least-squares fit of one fixed-effects spec.
pub fn fit_two_way_fe(rows: &[CounterfactualRow], spec: FeSpec) -> Result<DecompositionResult> {
    if rows.is_empty() {
        return input_err("no counterfactual rows");
    }
    if rows.iter().any(|r| !r.p.is_finite()) {
        return Err(Error::Numerical("non-finite prediction in counterfactual table".into()));
    }
    let design = Design::new(rows);
    if spec.students() {
        let mut per: BTreeMap<u64, usize> = BTreeMap::new();
        for r in rows {
            *per.entry(r.student_id).or_default() += 1;
        }
        if let Some((id, _)) = per.iter().find(|(_, &c)| c < 2) {
            return input_err(format!("student {id} has fewer than 2 counterfactual rows"));
        }
    }
    let y: Vec<f64> = rows.iter().map(|r| r.p).collect();
    let n = rows.len();
    let mut dropped = Vec::new();
    let components = if spec.students() && spec.programs() {
        let reps = design.components();
        for &j in &reps {
            dropped.push(format!("program {} (reference level)", design.program_ids[j]));
        }
        reps.len()
    } else {
        0
    };

    let mut sweeps = 0;
    let mut beta = None;
    let mut z = y.clone();
    if spec == FeSpec::BothSameField {
        let x: Vec<f64> = rows.iter().map(|r| r.same_field() as u8 as f64).collect();
        let (xt, s1) = design.residualize(&x, spec)?;
        let (yt, s2) = design.residualize(&y, spec)?;
        sweeps = s1.max(s2);
        let sxx: f64 = xt.iter().map(|v| v * v).sum();
        let x_mean = x.iter().sum::<f64>() / n as f64;
        let raw: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
        if sxx <= 1e-12 * raw.max(1.0) {
            dropped.push("same_field (collinear with the fixed effects)".into());
        } else {
            let b = xt.iter().zip(&yt).map(|(a, c)| a * c).sum::<f64>() / sxx;
            let rss: f64 = xt.iter().zip(&yt).map(|(a, c)| (c - b * a).powi(2)).sum();
            let params = design.n_students + design.n_programs - components + 1;
            let se = if n > params {
                (rss / (n - params) as f64 / sxx).sqrt()
            } else {
                f64::NAN
            };
            for (zk, xk) in z.iter_mut().zip(&x) {
                *zk -= b * xk;
            }
            beta = Some(Coefficient { estimate: b, se });
        }
    }

    let (mut gamma, mut delta, s) = design.fit(&z, spec)?;
    sweeps = sweeps.max(s);
    let row_mean = |v: &[f64], idx: &[usize]| idx.iter().map(|&g| v[g]).sum::<f64>() / n as f64;
    let mg = row_mean(&gamma, &design.student);
    let md = row_mean(&delta, &design.program);
    gamma.iter_mut().for_each(|g| *g -= mg);
    delta.iter_mut().for_each(|d| *d -= md);
    let alpha = mg + md;

    let residuals: Vec<f64> = (0..n)
        .map(|k| z[k] - alpha - gamma[design.student[k]] - delta[design.program[k]])
        .collect();

    let mut cells: BTreeMap<(u8, u8), (f64, usize)> = BTreeMap::new();
    for (r, e) in rows.iter().zip(&residuals) {
        let c = cells.entry((r.observed_field, r.field)).or_default();
        c.0 += e;
        c.1 += 1;
    }
    let field_residuals = cells
        .into_iter()
        .map(|((o, k), (s, c))| FieldResidual {
            observed_field: o,
            counterfactual_field: k,
            mean_residual: s / c as f64,
            count: c,
        })
        .collect();

    Ok(DecompositionResult {
        spec,
        alpha,
        student_effects: if spec.students() {
            design.student_ids.iter().copied().zip(gamma).collect()
        } else {
            BTreeMap::new()
        },
        program_effects: if spec.programs() {
            design.program_ids.iter().copied().zip(delta).collect()
        } else {
            BTreeMap::new()
        },
        beta,
        residuals,
        field_residuals,
        dropped,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_from(f: impl Fn(u64, u32) -> f64, students: u64, programs: u32) -> Vec<CounterfactualRow> {
        let mut out = Vec::new();
        for i in 0..students {
            for j in 0..programs {
                out.push(CounterfactualRow {
                    student_id: i,
                    program_id: j,
                    observed_field: (i % 3) as u8,
                    field: (j % 3) as u8,
                    p: f(i, j),
                });
            }
        }
        out
    }

    #[test]
    fn exact_additive_model_has_zero_residuals() {
        let rows = rows_from(|i, j| 0.5 + 0.01 * i as f64 - 0.02 * j as f64, 30, 7);
        let r = fit_two_way_fe(&rows, FeSpec::Both).unwrap();
        assert!(r.residuals.iter().all(|e| e.abs() < 1e-9));
        assert!((r.alpha - rows.iter().map(|r| r.p).sum::<f64>() / rows.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn single_row_students_are_rejected() {
        let rows = rows_from(|_, _| 0.5, 3, 1);
        assert!(fit_two_way_fe(&rows, FeSpec::StudentOnly).is_err());
        assert!(fit_two_way_fe(&rows, FeSpec::ProgramOnly).is_ok());
    }
}
