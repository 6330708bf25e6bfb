//! Registry-style student records, synthetic cohort generation, temporal and
//! validation splits, and line-oriented serialization.

mod catalog;
mod generate;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
pub use crate::matching::Quota;
pub use catalog::{course_field, CourseField, COURSES, ISCED_FIELDS};
pub use generate::{generate_cohort, GeneratorConfig, GradeCounts, PlantedCoefficients};

/// Header line of the cohort text format.
pub const COHORT_HEADER: &str = "admitsim-cohort v1";

/// The Danish 7-step grading scale.
pub const GRADE_SCALE: [i8; 7] = [-3, 0, 2, 4, 7, 10, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchoolStage {
    Primary,
    HighSchool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CourseLevel {
    A,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeEvent {
    pub year: i32,
    pub course: String,
    pub course_level: CourseLevel,
    pub test_type: String,
    pub education_type: String,
    pub study_line: String,
    pub school_stage: SchoolStage,
    pub institution_id: String,
    pub grade: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationEvent {
    pub year: i32,
    pub program_id: u32,
    pub isced_field: u8,
    pub rank: u8,
    pub quota2_opt_in: bool,
    pub human_rank_decile: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentEvent {
    pub year: i32,
    pub program_id: u32,
    pub isced_field: u8,
    pub quota: Quota,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Grade(GradeEvent),
    Application(ApplicationEvent),
    Enrollment(EnrollmentEvent),
}

impl Event {
    pub fn year(&self) -> i32 {
        match self {
            Event::Grade(g) => g.year,
            Event::Application(a) => a.year,
            Event::Enrollment(e) => e.year,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParentRecord {
    pub income: Option<f64>,
    pub wealth: Option<f64>,
    pub education_isced: Option<String>,
    pub education_months: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocioRecord {
    pub age: f64,
    pub female: bool,
    pub danish_origin: bool,
    pub mother: ParentRecord,
    pub father: ParentRecord,
    /// Above-median first principal component of parental income, wealth and
    /// education length.
    pub ses_high: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Student {
    pub id: u64,
    pub gpa: f64,
    pub events: Vec<Event>,
    pub sociodemo: SocioRecord,
    pub enrolled_program: u32,
    pub admission_quota: Quota,
    pub cohort_year: i32,
    pub completed: bool,
    /// Completion probability under the planted outcome model.
    pub planted_probability: f64,
}

impl Student {
    pub fn grades(&self) -> impl Iterator<Item = &GradeEvent> {
        self.events.iter().filter_map(|e| match e {
            Event::Grade(g) => Some(g),
            _ => None,
        })
    }

    pub fn applications(&self) -> impl Iterator<Item = &ApplicationEvent> {
        self.events.iter().filter_map(|e| match e {
            Event::Application(a) => Some(a),
            _ => None,
        })
    }

    pub fn enrollment(&self) -> Option<&EnrollmentEvent> {
        self.events.iter().find_map(|e| match e {
            Event::Enrollment(x) => Some(x),
            _ => None,
        })
    }

    /// Field of the first-ranked application.
    pub fn preferred_field(&self) -> Option<u8> {
        self.applications().find(|a| a.rank == 1).map(|a| a.isced_field)
    }

    /// Quota-2 decile attached to the enrolled program's application.
    pub fn human_rank_decile(&self) -> Option<u8> {
        self.applications()
            .find(|a| a.program_id == self.enrolled_program)
            .and_then(|a| a.human_rank_decile)
    }

    /// Copy of the student enrolled at `program` instead, everything else fixed.
    pub fn with_enrollment(&self, program: &Program) -> Student {
        let mut s = self.clone();
        s.enrolled_program = program.program_id;
        for e in &mut s.events {
            if let Event::Enrollment(en) = e {
                en.program_id = program.program_id;
                en.isced_field = program.isced_field;
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let enrollments = self.events.iter().filter(|e| matches!(e, Event::Enrollment(_))).count();
        if enrollments != 1 {
            return input_err(format!("student {} has {enrollments} enrollments", self.id));
        }
        for g in self.grades() {
            if !GRADE_SCALE.contains(&g.grade) {
                return input_err(format!("student {} has grade {} off the scale", self.id, g.grade));
            }
        }
        for a in self.applications() {
            if !(1..=8).contains(&a.rank) {
                return input_err(format!("student {} has application rank {}", self.id, a.rank));
            }
            if a.human_rank_decile.is_some() && !a.quota2_opt_in {
                return input_err(format!("student {} has a decile without opting in", self.id));
            }
        }
        if self.admission_quota == Quota::Human
            && !self
                .applications()
                .any(|a| a.program_id == self.enrolled_program && a.quota2_opt_in)
        {
            return input_err(format!("student {} admitted by quota 2 without opting in", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub program_id: u32,
    pub isced_field: u8,
    pub seats_q1: u32,
    pub seats_q2: u32,
    pub prior_year_gpa_cutoff: Option<f64>,
    /// Binding quota-1 GPA cutoff by admission year.
    #[serde(default, with = "year_pairs")]
    pub cutoff_history: BTreeMap<i32, f64>,
}

impl Program {
    /// Cutoff in force the year before `year`.
    pub fn cutoff_before(&self, year: i32) -> Option<f64> {
        self.cutoff_history.get(&(year - 1)).copied()
    }
}

/// Year-keyed maps as `[[year, value], ...]`; JSON object keys would be
/// strings, which the tagged line format cannot convert back to integers.
mod year_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<i32, f64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i32, f64>, D::Error> {
        Ok(Vec::<(i32, f64)>::deserialize(d)?.into_iter().collect())
    }
}

/// The planted outcome model, kept so evaluations have a ground truth.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantedModel {
    pub intercept: f64,
    pub coefficients: PlantedCoefficients,
    /// Additive logit effect of each program, indexed by program id.
    pub program_effects: Vec<f64>,
    /// Standardization constants (mean, sd) of the grade-profile features.
    pub feature_moments: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cohort {
    pub programs: Vec<Program>,
    pub planted: PlantedModel,
    pub students: Vec<Student>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Program(Program),
    Planted(PlantedModel),
    Student(Student),
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.students.iter().map(|s| s.cohort_year).collect();
        y.sort_unstable();
        y.dedup();
        y
    }

    pub fn program(&self, id: u32) -> Option<&Program> {
        self.programs.iter().find(|p| p.program_id == id)
    }

    /// Same programs and planted model, different students.
    pub fn with_students(&self, students: Vec<Student>) -> Cohort {
        Cohort {
            programs: self.programs.clone(),
            planted: self.planted.clone(),
            students,
        }
    }

    pub fn completion_rate(&self) -> f64 {
        if self.students.is_empty() {
            return f64::NAN;
        }
        self.students.iter().filter(|s| s.completed).count() as f64 / self.students.len() as f64
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{COHORT_HEADER}")?;
        for p in &self.programs {
            serde_json::to_writer(&mut w, &Line::Program(p.clone()))?;
            writeln!(w)?;
        }
        serde_json::to_writer(&mut w, &Line::Planted(self.planted.clone()))?;
        writeln!(w)?;
        for s in &self.students {
            serde_json::to_writer(&mut w, &LineRef::Student(s))?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Cohort> {
        let mut cohort = Cohort::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 {
                if line.trim() != COHORT_HEADER {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected header {COHORT_HEADER:?}"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("column {}: {e}", e.column()),
            })?;
            match parsed {
                Line::Program(p) => cohort.programs.push(p),
                Line::Planted(m) => cohort.planted = m,
                Line::Student(s) => cohort.students.push(s),
            }
        }
        Ok(cohort)
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineRef<'a> {
    Student(&'a Student),
}

pub fn save_cohort(cohort: &Cohort, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    cohort.write_to(f)
}

pub fn load_cohort(path: &Path) -> Result<Cohort> {
    Cohort::read_from(BufReader::new(std::fs::File::open(path)?))
}

/// Training years before `holdout_year`, test set in it.
pub fn temporal_split(cohort: &Cohort, holdout_year: i32) -> Result<(Cohort, Cohort)> {
    let (test, train): (Vec<Student>, Vec<Student>) = cohort
        .students
        .iter()
        .filter(|s| s.cohort_year <= holdout_year)
        .cloned()
        .partition(|s| s.cohort_year == holdout_year);
    if test.is_empty() {
        return input_err(format!("holdout year {holdout_year} absent from cohort"));
    }
    if train.is_empty() {
        return input_err(format!("no students before holdout year {holdout_year}"));
    }
    Ok((cohort.with_students(train), cohort.with_students(test)))
}

/// Number of validation students drawn from a group of `count`.
fn validation_count(count: usize, fraction: f64) -> usize {
    (fraction * count as f64).round() as usize
}

/// Holds out `fraction` of each cohort year for validation.
///
/// Falls back to a global draw when some year has fewer than two students.
/// Students keep their original relative order in both parts.
pub fn validation_split<R: rand::Rng>(train: &Cohort, fraction: f64, rng: &mut R) -> Result<(Cohort, Cohort)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return input_err(format!("validation fraction {fraction} outside (0, 1)"));
    }
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, s) in train.students.iter().enumerate() {
        by_year.entry(s.cohort_year).or_default().push(i);
    }
    let mut is_val = vec![false; train.students.len()];
    if by_year.values().any(|v| v.len() < 2) {
        warn!("a cohort year has fewer than two students; sampling validation globally");
        let mut all: Vec<usize> = (0..train.students.len()).collect();
        all.shuffle(rng);
        for &i in &all[..validation_count(all.len(), fraction)] {
            is_val[i] = true;
        }
    } else {
        for idx in by_year.values_mut() {
            let k = validation_count(idx.len(), fraction);
            idx.shuffle(rng);
            for &i in &idx[..k] {
                is_val[i] = true;
            }
        }
    }
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for (s, v) in train.students.iter().zip(is_val) {
        if v {
            val.push(s.clone());
        } else {
            fit.push(s.clone());
        }
    }
    Ok((train.with_students(fit), train.with_students(val)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn bare_student(id: u64, year: i32) -> Student {
        Student {
            id,
            gpa: 7.0,
            events: vec![Event::Enrollment(EnrollmentEvent {
                year,
                program_id: 0,
                isced_field: 0,
                quota: Quota::Gpa,
            })],
            sociodemo: SocioRecord {
                age: 20.0,
                female: false,
                danish_origin: true,
                mother: ParentRecord::default(),
                father: ParentRecord::default(),
                ses_high: false,
            },
            enrolled_program: 0,
            admission_quota: Quota::Gpa,
            cohort_year: year,
            completed: true,
            planted_probability: 0.5,
        }
    }

    fn cohort_of(years: &[(i32, usize)]) -> Cohort {
        let mut students = Vec::new();
        for &(y, n) in years {
            for _ in 0..n {
                students.push(bare_student(students.len() as u64, y));
            }
        }
        Cohort {
            students,
            ..Default::default()
        }
    }

    #[test]
    fn temporal_split_partitions() {
        let c = cohort_of(&[(2015, 3), (2016, 4), (2017, 5)]);
        let (train, test) = temporal_split(&c, 2017).unwrap();
        assert_eq!(train.len() + test.len(), c.len());
        assert!(test.students.iter().all(|s| s.cohort_year == 2017));
        assert!(temporal_split(&c, 2018).is_err());
        assert!(temporal_split(&cohort_of(&[(2017, 4)]), 2017).is_err());
    }

    #[test]
    fn temporal_split_ignores_order() {
        let c = cohort_of(&[(2015, 3), (2016, 4), (2017, 5)]);
        let mut shuffled = c.clone();
        shuffled.students.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let ids = |c: &Cohort| {
            let mut v: Vec<u64> = c.students.iter().map(|s| s.id).collect();
            v.sort_unstable();
            v
        };
        let (a, b) = temporal_split(&c, 2017).unwrap();
        let (x, y) = temporal_split(&shuffled, 2017).unwrap();
        assert_eq!(ids(&a), ids(&x));
        assert_eq!(ids(&b), ids(&y));
    }

    #[test]
    fn validation_split_per_year_counts() {
        let years: Vec<(i32, usize)> = (2007..2017).map(|y| (y, 100)).collect();
        let c = cohort_of(&years);
        let (fit, val) = validation_split(&c, 0.05, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(fit.len() + val.len(), 1000);
        for y in 2007..2017 {
            assert_eq!(val.students.iter().filter(|s| s.cohort_year == y).count(), 5);
        }
        let (_, val2) = validation_split(&c, 0.05, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a: Vec<u64> = val.students.iter().map(|s| s.id).collect();
        let b: Vec<u64> = val2.students.iter().map(|s| s.id).collect();
        assert_ne!(a, b);
        assert!(validation_split(&c, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn round_trip_and_parse_errors() {
        let c = cohort_of(&[(2016, 2), (2017, 1)]);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = Cohort::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, c);

        let text = String::from_utf8(buf).unwrap();
        let truncated = &text[..text.len() - 20];
        match Cohort::read_from(truncated.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, text.lines().count()),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(Cohort::read_from("".as_bytes()).unwrap().is_empty());
    }
}
