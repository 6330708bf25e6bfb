use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Quota, Student};
use crate::error::{input_err, Result};

/// One student's predicted completion probability with the attributes the
/// evaluators need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub student_id: u64,
    pub program_id: u32,
    pub isced_field: u8,
    pub quota: Quota,
    pub cohort_year: i32,
    pub score: f64,
    pub outcome: bool,
    pub gpa: f64,
    pub human_rank_decile: Option<u8>,
    pub female: bool,
    pub danish_origin: bool,
    pub ses_high: bool,
    /// Planted completion probability when known.
    pub planted_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RiskTable {
    pub rows: Vec<RiskRow>,
}

impl RiskTable {
    /// Pairs students with scores; scores must be finite and in [0, 1].
    pub fn from_students(cohort: &Cohort, students: &[Student], scores: &[f64]) -> Result<Self> {
        if students.len() != scores.len() {
            return input_err(format!("{} students but {} scores", students.len(), scores.len()));
        }
        let mut rows = Vec::with_capacity(students.len());
        for (s, &p) in students.iter().zip(scores) {
            if !(0.0..=1.0).contains(&p) {
                return input_err(format!("score {p} for student {} outside [0, 1]", s.id));
            }
            let field = cohort
                .program(s.enrolled_program)
                .map(|p| p.isced_field)
                .or_else(|| s.enrollment().map(|e| e.isced_field))
                .unwrap_or(0);
            rows.push(RiskRow {
                student_id: s.id,
                program_id: s.enrolled_program,
                isced_field: field,
                quota: s.admission_quota,
                cohort_year: s.cohort_year,
                score: p,
                outcome: s.completed,
                gpa: s.gpa,
                human_rank_decile: s.human_rank_decile(),
                female: s.sociodemo.female,
                danish_origin: s.sociodemo.danish_origin,
                ses_high: s.sociodemo.ses_high,
                planted_probability: Some(s.planted_probability),
            });
        }
        Ok(Self { rows })
    }

    pub fn from_cohort(cohort: &Cohort, scores: &[f64]) -> Result<Self> {
        Self::from_students(cohort, &cohort.students, scores)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.outcome).collect()
    }

    pub fn filter(&self, keep: impl Fn(&RiskRow) -> bool) -> RiskTable {
        RiskTable {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Same rows with scores replaced.
    pub fn with_scores(&self, scores: &[f64]) -> Result<RiskTable> {
        if scores.len() != self.rows.len() {
            return input_err("score count does not match table");
        }
        let mut t = self.clone();
        for (r, &s) in t.rows.iter_mut().zip(scores) {
            r.score = s;
        }
        Ok(t)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<RiskRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
