//! Fixed-width per-student feature vectors for the tabular models.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, CourseField, SchoolStage, Student, COURSES};
use crate::error::{input_err, Result};
use crate::seqenc::main_study_line;
use crate::variant::InputVariant;

/// Dense row-major feature matrix; `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
    pub columns: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, columns: Vec<String>) -> Self {
        FeatureMatrix { n_rows: 0, n_cols, data: Vec::new(), columns }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return input_err("ragged feature rows");
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            data: rows.concat(),
            columns: (0..n_cols).map(|j| format!("x{j}")).collect(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            data,
            columns: self.columns.clone(),
        }
    }
}

/// How ordinal variables become columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdinalEncoding {
    /// One indicator per level (logistic regression).
    OneHot,
    /// A single numeric column (tree models).
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
enum Raw {
    Num(f64),
    Cat(Option<String>),
    Ord(Option<i64>),
}

fn mode<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|c| c.0 == v) {
            Some(c) => c.1 += 1,
            None => counts.push((v, 1)),
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for c in counts {
        if best.is_none_or(|b| c.1 > b.1) {
            best = Some(c);
        }
    }
    best.map(|b| b.0.to_string())
}

fn stage_name(s: SchoolStage) -> &'static str {
    match s {
        SchoolStage::Primary => "primary",
        SchoolStage::HighSchool => "high_school",
    }
}

/// Named raw values of one student, in schema order.
fn raw_fields(cohort: &Cohort, s: &Student, variant: InputVariant) -> Vec<(String, Raw)> {
    let mut out = vec![("gpa".to_string(), Raw::Num(s.gpa))];
    let place = Raw::Cat(Some(s.enrolled_program.to_string()));
    if variant == InputVariant::GpaBaseline {
        out.push(("place".into(), place));
        return out;
    }
    let year0 = s.cohort_year;
    let grades: Vec<_> = s.grades().filter(|g| g.year <= year0).collect();
    for c in COURSES {
        let v: Vec<f64> = grades.iter().filter(|g| g.course == c.name).map(|g| g.grade as f64).collect();
        let m = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        out.push((format!("course_mean:{}", c.name), Raw::Num(m)));
    }
    for stage in [SchoolStage::Primary, SchoolStage::HighSchool] {
        for field in CourseField::ALL {
            let v: Vec<f64> = grades
                .iter()
                .filter(|g| g.school_stage == stage && crate::cohort::course_field(&g.course) == field)
                .map(|g| g.grade as f64)
                .collect();
            let n = v.len() as f64;
            let (mean, sd) = if v.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let m = v.iter().sum::<f64>() / n;
                (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
            };
            let key = format!("{}:{}", stage_name(stage), field.name());
            out.push((format!("field_mean:{key}"), Raw::Num(mean)));
            out.push((format!("field_std:{key}"), Raw::Num(sd)));
            out.push((format!("field_count:{key}"), Raw::Num(n)));
        }
    }
    let hs = || grades.iter().filter(|g| g.school_stage == SchoolStage::HighSchool);
    out.push(("edu_type".into(), Raw::Cat(mode(hs().map(|g| g.education_type.as_str())))));
    out.push(("study_line".into(), Raw::Cat(main_study_line(s).map(str::to_string))));
    if variant.sociodemo() {
        out.push(("hs_institution".into(), Raw::Cat(mode(hs().map(|g| g.institution_id.as_str())))));
    }
    out.push(("place".into(), place));
    let field = s.enrollment().map(|e| e.isced_field.to_string());
    out.push(("place_isced".into(), Raw::Cat(field)));
    let own_app = s.applications().find(|a| a.program_id == s.enrolled_program);
    if variant.applications() || variant == InputVariant::Sociodemo {
        out.push(("enrolled_rank".into(), Raw::Ord(own_app.map(|a| a.rank as i64))));
    }
    if variant.applications() {
        let q2 = own_app.is_some_and(|a| a.quota2_opt_in);
        out.push(("applied_q2".into(), Raw::Num(q2 as u8 as f64)));
    }
    if variant.human() {
        out.push(("q2_decile".into(), Raw::Ord(s.human_rank_decile().map(i64::from))));
    }
    if variant.sociodemo() {
        let cutoff = cohort
            .program(s.enrolled_program)
            .and_then(|p| p.cutoff_before(year0))
            .unwrap_or(f64::NAN);
        out.push(("gpa_cutoff".into(), Raw::Num(cutoff)));
        let d = &s.sociodemo;
        out.push(("age".into(), Raw::Num(d.age)));
        out.push(("female".into(), Raw::Num(d.female as u8 as f64)));
        out.push(("danish_origin".into(), Raw::Num(d.danish_origin as u8 as f64)));
        for (who, p) in [("mother", &d.mother), ("father", &d.father)] {
            let num = |v: Option<f64>| Raw::Num(v.unwrap_or(f64::NAN));
            out.push((format!("{who}_income"), num(p.income)));
            out.push((format!("{who}_wealth"), num(p.wealth)));
            out.push((format!("{who}_edu"), Raw::Cat(p.education_isced.clone())));
            out.push((format!("{who}_months"), num(p.education_months)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FieldKind {
    Numeric,
    Nominal(Vec<String>),
    Ordinal(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldSchema {
    name: String,
    kind: FieldKind,
}

/// Column layout learned on the training cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSchema {
    pub variant: InputVariant,
    pub ordinal: OrdinalEncoding,
    fields: Vec<FieldSchema>,
    pub columns: Vec<String>,
}

impl TabularSchema {
    pub fn fit(train: &Cohort, variant: InputVariant, ordinal: OrdinalEncoding) -> Result<Self> {
        if train.is_empty() {
            return input_err("empty training cohort");
        }
        let mut names: Vec<String> = Vec::new();
        let mut cats: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut ords: BTreeMap<String, BTreeSet<i64>> = BTreeMap::new();
        let mut kinds: BTreeMap<String, u8> = BTreeMap::new();
        for s in &train.students {
            for (name, raw) in raw_fields(train, s, variant) {
                if !kinds.contains_key(&name) {
                    names.push(name.clone());
                }
                match raw {
                    Raw::Num(_) => {
                        kinds.insert(name, 0);
                    }
                    Raw::Cat(v) => {
                        kinds.insert(name.clone(), 1);
                        let e = cats.entry(name).or_default();
                        e.extend(v);
                    }
                    Raw::Ord(v) => {
                        kinds.insert(name.clone(), 2);
                        let e = ords.entry(name).or_default();
                        e.extend(v);
                    }
                }
            }
        }
        let fields: Vec<FieldSchema> = names
            .into_iter()
            .map(|name| {
                let kind = match kinds[&name] {
                    0 => FieldKind::Numeric,
                    1 => FieldKind::Nominal(cats.get(&name).map(|c| c.iter().cloned().collect()).unwrap_or_default()),
                    _ => FieldKind::Ordinal(ords.get(&name).map(|c| c.iter().copied().collect()).unwrap_or_default()),
                };
                FieldSchema { name, kind }
            })
            .collect();
        let mut columns = Vec::new();
        for f in &fields {
            match &f.kind {
                FieldKind::Numeric => columns.push(f.name.clone()),
                FieldKind::Nominal(levels) => columns.extend(levels.iter().map(|l| format!("{}={l}", f.name))),
                FieldKind::Ordinal(levels) => match ordinal {
                    OrdinalEncoding::Numeric => columns.push(f.name.clone()),
                    OrdinalEncoding::OneHot => columns.extend(levels.iter().map(|l| format!("{}={l}", f.name))),
                },
            }
        }
        Ok(TabularSchema { variant, ordinal, fields, columns })
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// One row per student; unseen categories give an all-zero block.
    pub fn transform(&self, cohort: &Cohort, students: &[Student]) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(self.n_cols(), self.columns.clone());
        for s in students {
            let raw: BTreeMap<String, Raw> = raw_fields(cohort, s, self.variant).into_iter().collect();
            let start = m.data.len();
            for f in &self.fields {
                let r = raw.get(&f.name);
                match (&f.kind, r) {
                    (FieldKind::Numeric, Some(Raw::Num(v))) => m.data.push(*v),
                    (FieldKind::Numeric, _) => m.data.push(f64::NAN),
                    (FieldKind::Nominal(levels), r) => {
                        let v = match r {
                            Some(Raw::Cat(Some(v))) => Some(v.as_str()),
                            _ => None,
                        };
                        m.data.extend(levels.iter().map(|l| (Some(l.as_str()) == v) as u8 as f64));
                    }
                    (FieldKind::Ordinal(levels), r) => {
                        let v = match r {
                            Some(Raw::Ord(v)) => *v,
                            _ => None,
                        };
                        match self.ordinal {
                            OrdinalEncoding::Numeric => m.data.push(v.map_or(f64::NAN, |x| x as f64)),
                            OrdinalEncoding::OneHot => {
                                m.data.extend(levels.iter().map(|l| (Some(*l) == v) as u8 as f64))
                            }
                        }
                    }
                }
            }
            debug_assert_eq!(m.data.len() - start, m.n_cols);
            m.n_rows += 1;
        }
        m
    }
}

/// Fits the schema on `train` and featurizes it.
pub fn featurize_tabular(
    train: &Cohort,
    variant: InputVariant,
    ordinal: OrdinalEncoding,
) -> Result<(TabularSchema, FeatureMatrix)> {
    let schema = TabularSchema::fit(train, variant, ordinal)?;
    let m = schema.transform(train, &train.students);
    Ok((schema, m))
}
