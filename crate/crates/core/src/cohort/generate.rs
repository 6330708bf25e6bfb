//! Synthetic cohort generator with a planted completion model.
//!
//! Students carry latent ability, subject aptitudes, a primary-to-high-school
//! growth term and an unobserved diligence term. Grades are drawn from these
//! latents; applications and quota-2 opt-in are simulated and enrollment is
//! decided by two-quota deferred acceptance, one match per cohort year.
//! Completion is Bernoulli with a logistic probability in GPA, non-GPA grade
//! profile terms, diligence, program effects and a field-match bonus.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::catalog::{
    courses_for, CourseField, HIGH_SCHOOL_TYPES, ISCED_FIELDS, PARENT_ISCED, PRIMARY_TYPES, STUDY_LINES, TEST_TYPES,
};
use super::{
    ApplicationEvent, Cohort, CourseLevel, EnrollmentEvent, Event, GradeEvent, ParentRecord, PlantedModel, Program,
    SchoolStage, SocioRecord, Student,
};
use crate::error::{Error, Result};
use crate::matching::{self, Applicant, MatchInstance, Preference, ProgramSeats};
use crate::rng::substream;

/// Grades per student by (stage, field), ordered STEM, languages, other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeCounts {
    pub primary: [usize; 3],
    pub high_school: [usize; 3],
}

impl Default for GradeCounts {
    fn default() -> Self {
        Self {
            primary: [2, 2, 2],
            high_school: [5, 4, 2],
        }
    }
}

/// Logit coefficients of the planted completion model. Grade-profile terms
/// act on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedCoefficients {
    pub gpa: f64,
    /// High-school STEM mean minus overall high-school mean.
    pub stem_relative: f64,
    /// Per failing (-3 or 00) high-school grade, capped at three.
    pub failing: f64,
    /// tanh of the high-school minus primary-school mean difference.
    pub trend: f64,
    /// Unobserved diligence.
    pub diligence: f64,
    /// Enrolled in the field of the first-ranked application.
    pub same_field: f64,
    /// Standard deviation of program effects around their field effect.
    pub program_effect_sd: f64,
}

impl Default for PlantedCoefficients {
    fn default() -> Self {
        Self {
            gpa: 0.3,
            stem_relative: 0.6,
            failing: -0.55,
            trend: 0.5,
            diligence: 0.5,
            same_field: 0.3,
            program_effect_sd: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_students: usize,
    pub n_programs: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Mean planted completion probability over the years before `last_year`.
    pub target_completion: f64,
    pub grades: GradeCounts,
    /// Total seats per cohort year relative to applicants.
    pub seat_slack: f64,
    /// Share of each program's seats reserved for quota 2.
    pub quota2_share: f64,
    /// Mean quota-2 opt-in rate.
    pub opt_in_rate: f64,
    /// Maximum ranked programs drawn per applicant (one slot stays free for
    /// vacancy placement).
    pub max_applications: u8,
    pub planted: PlantedCoefficients,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_students: 2000,
            n_programs: 40,
            first_year: 2006,
            last_year: 2017,
            target_completion: 0.69,
            grades: GradeCounts::default(),
            seat_slack: 1.15,
            quota2_share: 0.2,
            opt_in_rate: 0.32,
            max_applications: 6,
            planted: PlantedCoefficients::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.first_year > self.last_year {
            return bad(format!("empty year range {}..={}", self.first_year, self.last_year));
        }
        if self.n_students > 0 && self.n_programs == 0 {
            return bad("students need at least one program".into());
        }
        if !(self.target_completion > 0.0 && self.target_completion < 1.0) {
            return bad(format!("target completion {} outside (0, 1)", self.target_completion));
        }
        if !(self.opt_in_rate > 0.0 && self.opt_in_rate < 1.0) {
            return bad(format!("opt-in rate {} outside (0, 1)", self.opt_in_rate));
        }
        if !(0.0..1.0).contains(&self.quota2_share) {
            return bad(format!("quota-2 share {} outside [0, 1)", self.quota2_share));
        }
        if !(self.seat_slack >= 1.05) {
            return bad(format!("seat slack {} below 1.05", self.seat_slack));
        }
        if !(1..=7).contains(&self.max_applications) {
            return bad(format!("max applications {} outside 1..=7", self.max_applications));
        }
        if !(self.planted.program_effect_sd >= 0.0) {
            return bad("program effect sd must be nonnegative".into());
        }
        Ok(())
    }

    pub fn n_years(&self) -> usize {
        (self.last_year - self.first_year + 1) as usize
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept `b` such that mean(sigmoid(b + x)) equals `target`.
fn calibrate_intercept(xs: &[f64], target: f64) -> f64 {
    if xs.is_empty() {
        return (target / (1.0 - target)).ln();
    }
    let mean = |b: f64| xs.iter().map(|&x| sigmoid(b + x)).sum::<f64>() / xs.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn field_effect(field: usize) -> f64 {
    // natural sciences and ICT programs complete less often, health more
    const EFFECTS: [f64; 11] = [0.35, 0.1, -0.15, 0.0, -0.1, -0.45, 0.25, -0.35, 0.05, 0.1, 0.0];
    EFFECTS[field]
}

struct Latent {
    ability: f64,
    math: f64,
    language: f64,
    growth: f64,
    diligence: f64,
    ses: f64,
}

/// Per-student raw material before matching.
struct Draft {
    id: u64,
    year: i32,
    latent: Latent,
    socio: SocioRecord,
    grades: Vec<GradeEvent>,
    gpa: f64,
    preferred_field: usize,
    applications: Vec<u32>,
    opt_in: bool,
    human_score: f64,
}

/// Grade cut points on the standardized latent scale.
const GRADE_CUTS: [f64; 6] = [-2.326, -1.645, -1.036, -0.332, 0.44, 1.227];

fn to_grade(z: f64) -> i8 {
    let idx = GRADE_CUTS.iter().filter(|&&c| z > c).count();
    super::GRADE_SCALE[idx]
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

fn draw_parent(rng: &mut ChaCha8Rng, ses: f64, mother: bool, normal: &Normal<f64>) -> ParentRecord {
    let (median, sigma, miss_income, miss_edu) = if mother {
        (230_000.0f64, 0.55, 0.015, 0.012)
    } else {
        (290_000.0f64, 0.7, 0.048, 0.030)
    };
    let income = (median.ln() + 0.35 * ses + sigma * normal.sample(rng)).exp();
    let wealth = (12.3 + 0.5 * ses + 1.1 * normal.sample(rng)).exp() - 150_000.0;
    let weights: Vec<f64> = PARENT_ISCED
        .iter()
        .enumerate()
        .map(|(k, _)| (0.25 * ses * (k as f64 - 3.5)).exp())
        .collect();
    let code = WeightedIndex::new(&weights).expect("positive weights").sample(rng);
    let months = PARENT_ISCED[code].1 + 6.0 * normal.sample(rng);
    let has_income = !rng.random_bool(miss_income);
    let has_edu = !rng.random_bool(miss_edu);
    ParentRecord {
        income: has_income.then_some(income.round()),
        wealth: has_income.then_some(wealth.round()),
        education_isced: has_edu.then(|| PARENT_ISCED[code].0.to_string()),
        education_months: has_edu.then_some(months.round()),
    }
}

fn draw_grades(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    year: i32,
    lat: &Latent,
    normal: &Normal<f64>,
) -> Vec<GradeEvent> {
    let primary_type = pick(rng, PRIMARY_TYPES).to_string();
    let hs_type = pick(rng, HIGH_SCHOOL_TYPES).to_string();
    let study_line = pick(rng, STUDY_LINES).to_string();
    let primary_inst = format!("p{:04}", rng.random_range(0..400));
    let hs_inst = format!("h{:04}", rng.random_range(0..150));
    let lapse = sigmoid(-3.6 - 1.0 * lat.diligence);
    let sd = (0.75f64.powi(2) + 0.5f64.powi(2) + 0.3f64.powi(2) + 0.15f64.powi(2) + 0.6f64.powi(2)).sqrt();
    let mut out = Vec::new();
    for (stage, counts) in [
        (SchoolStage::Primary, cfg.grades.primary),
        (SchoolStage::HighSchool, cfg.grades.high_school),
    ] {
        let hs = stage == SchoolStage::HighSchool;
        for (field, &n) in CourseField::ALL.iter().zip(&counts) {
            let courses = courses_for(stage, *field);
            let offset = rng.random_range(0..courses.len());
            let aptitude = match field {
                CourseField::Stem => lat.math,
                CourseField::Languages => lat.language,
                CourseField::Other => 0.0,
            };
            for k in 0..n {
                let c = courses[(offset + k) % courses.len()];
                let z = 0.75 * lat.ability
                    + 0.5 * aptitude
                    + 0.3 * lat.growth * if hs { 1.0 } else { -1.0 }
                    + 0.15 * lat.diligence
                    + 0.6 * normal.sample(rng);
                let grade = if rng.random_bool(lapse) {
                    if rng.random_bool(0.5) {
                        -3
                    } else {
                        0
                    }
                } else {
                    to_grade(z / sd)
                };
                let level = if hs {
                    *pick(rng, &[CourseLevel::A, CourseLevel::B, CourseLevel::B, CourseLevel::C])
                } else {
                    CourseLevel::C
                };
                out.push(GradeEvent {
                    year: if hs { year - 2 + (k % 3) as i32 } else { year - 3 },
                    course: c.name.to_string(),
                    course_level: level,
                    test_type: pick(rng, TEST_TYPES).to_string(),
                    education_type: if hs { hs_type.clone() } else { primary_type.clone() },
                    study_line: if hs { study_line.clone() } else { "primary".to_string() },
                    school_stage: stage,
                    institution_id: if hs { hs_inst.clone() } else { primary_inst.clone() },
                    grade,
                });
            }
        }
    }
    out
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Raw grade-profile features entering the planted model.
fn profile(grades: &[GradeEvent]) -> [f64; 3] {
    let hs = |f: Option<CourseField>| {
        mean_of(
            grades
                .iter()
                .filter(|g| g.school_stage == SchoolStage::HighSchool)
                .filter(|g| f.is_none_or(|f| super::course_field(&g.course) == f))
                .map(|g| g.grade as f64),
        )
    };
    let primary = mean_of(
        grades
            .iter()
            .filter(|g| g.school_stage == SchoolStage::Primary)
            .map(|g| g.grade as f64),
    );
    let hs_all = hs(None);
    let stem_rel = match (hs(Some(CourseField::Stem)), hs_all) {
        (Some(s), Some(a)) => s - a,
        _ => 0.0,
    };
    let fails = grades
        .iter()
        .filter(|g| g.school_stage == SchoolStage::HighSchool && g.grade <= 0)
        .count()
        .min(3) as f64;
    let trend = match (hs_all, primary) {
        (Some(h), Some(p)) => h - p,
        _ => 0.0,
    };
    [stem_rel, fails, trend]
}

fn moments(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 1.0);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, if v > 0.0 { v.sqrt() } else { 1.0 })
}

/// Above-median indicator of the first principal component of the six
/// standardized parental variables; missing entries are imputed at the mean.
fn ses_indicator(socio: &[SocioRecord]) -> Vec<bool> {
    let n = socio.len();
    if n == 0 {
        return Vec::new();
    }
    let cols: Vec<Vec<Option<f64>>> = vec![
        socio.iter().map(|s| s.mother.income).collect(),
        socio.iter().map(|s| s.father.income).collect(),
        socio.iter().map(|s| s.mother.wealth).collect(),
        socio.iter().map(|s| s.father.wealth).collect(),
        socio.iter().map(|s| s.mother.education_months).collect(),
        socio.iter().map(|s| s.father.education_months).collect(),
    ];
    let std_cols: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let present: Vec<f64> = c.iter().flatten().copied().collect();
            let (m, sd) = moments(&present);
            c.iter().map(|v| v.map_or(0.0, |x| (x - m) / sd)).collect()
        })
        .collect();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(6, 6);
    for a in 0..6 {
        for b in a..6 {
            let v = (0..n).map(|i| std_cols[a][i] * std_cols[b][i]).sum::<f64>() / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let mut w: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    if w[0] + w[1] < 0.0 {
        w.iter_mut().for_each(|x| *x = -*x);
    }
    let score: Vec<f64> = (0..n)
        .map(|i| (0..6).map(|k| w[k] * std_cols[k][i]).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut high = vec![false; n];
    for &i in &order[..n / 2] {
        high[i] = true;
    }
    high
}

fn draw_student(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    id: u64,
    year: i32,
    programs: &[Program],
    popularity: &[f64],
    normal: &Normal<f64>,
) -> Draft {
    let ses = normal.sample(rng);
    let female = rng.random_bool(0.58);
    let latent = Latent {
        ability: 0.3 * ses + 0.954 * normal.sample(rng),
        math: normal.sample(rng) - if female { 0.1 } else { 0.0 },
        language: normal.sample(rng) + if female { 0.1 } else { 0.0 },
        growth: normal.sample(rng),
        diligence: normal.sample(rng) + if female { 0.15 } else { 0.0 },
        ses,
    };
    let age_extra: f64 = Gamma::new(1.5, 1.3).expect("valid gamma").sample(rng);
    let socio = SocioRecord {
        age: ((18.5 + age_extra) * 10.0).round() / 10.0,
        female,
        danish_origin: rng.random_bool(0.91),
        mother: draw_parent(rng, latent.ses, true, normal),
        father: draw_parent(rng, latent.ses, false, normal),
        ses_high: false,
    };
    let grades = draw_grades(rng, cfg, year, &latent, normal);
    let gpa = mean_of(
        grades
            .iter()
            .filter(|g| g.school_stage == SchoolStage::HighSchool)
            .map(|g| g.grade as f64),
    )
    .or_else(|| mean_of(grades.iter().map(|g| g.grade as f64)))
    .map_or(0.0, |g| (g * 10.0).round() / 10.0);

    // Math-inclined students lean towards science and technology fields.
    let mut field_w: Vec<f64> = ISCED_FIELDS.iter().map(|f| f.1).collect();
    for f in [4usize, 5, 7] {
        field_w[f] *= (0.6 * latent.math).exp();
    }
    let preferred_field = WeightedIndex::new(&field_w).expect("positive weights").sample(rng);
    let n_apps = 1 + Binomial::new(u64::from(cfg.max_applications) - 1, 0.2)
        .expect("valid binomial")
        .sample(rng) as usize;
    let mut chosen: Vec<u32> = Vec::new();
    let mut available: Vec<bool> = vec![true; programs.len()];
    while chosen.len() < n_apps.min(programs.len()) {
        let in_field = rng.random_bool(0.7);
        let weights: Vec<f64> = programs
            .iter()
            .zip(popularity)
            .enumerate()
            .map(|(j, (p, &w))| {
                if !available[j] || (in_field && p.isced_field as usize != preferred_field) {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let Ok(dist) = WeightedIndex::new(&weights) else {
            if in_field {
                continue;
            }
            break;
        };
        let j = dist.sample(rng);
        available[j] = false;
        chosen.push(programs[j].program_id);
    }
    Draft {
        id,
        year,
        socio,
        grades,
        gpa,
        preferred_field: programs
            .iter()
            .find(|p| Some(&p.program_id) == chosen.first())
            .map_or(preferred_field, |p| p.isced_field as usize),
        applications: chosen,
        opt_in: false,
        human_score: 0.0,
        latent,
    }
}

/// Generates a cohort; identical config and seed give identical cohorts.
pub fn generate_cohort(cfg: &GeneratorConfig, seed: u64) -> Result<Cohort> {
    cfg.validate()?;
    let mut rng = substream(seed, "cohort");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    if cfg.n_students == 0 {
        return Ok(Cohort::default());
    }

    // Programs: every field gets at least one program when there are enough.
    let field_w: Vec<f64> = ISCED_FIELDS.iter().map(|f| f.1).collect();
    let field_dist = WeightedIndex::new(&field_w).expect("positive weights");
    let mut programs = Vec::with_capacity(cfg.n_programs);
    let mut popularity = Vec::with_capacity(cfg.n_programs);
    let mut effects = Vec::with_capacity(cfg.n_programs);
    let pop_noise = LogNormal::new(0.0, 0.5).expect("valid lognormal");
    for j in 0..cfg.n_programs {
        let field = if j < ISCED_FIELDS.len() && cfg.n_programs >= 2 * ISCED_FIELDS.len() {
            j
        } else {
            field_dist.sample(&mut rng)
        };
        programs.push(Program {
            program_id: j as u32,
            isced_field: field as u8,
            seats_q1: 0,
            seats_q2: 0,
            prior_year_gpa_cutoff: None,
            cutoff_history: BTreeMap::new(),
        });
        popularity.push(pop_noise.sample(&mut rng));
        effects.push(field_effect(field) + cfg.planted.program_effect_sd * normal.sample(&mut rng));
    }

    // Students spread evenly over years, earlier years absorb the remainder.
    let n_years = cfg.n_years();
    let mut drafts = Vec::with_capacity(cfg.n_students);
    for y in 0..n_years {
        let count = cfg.n_students / n_years + usize::from(y < cfg.n_students % n_years);
        for _ in 0..count {
            let id = drafts.len() as u64;
            let d = draw_student(
                &mut rng,
                cfg,
                id,
                cfg.first_year + y as i32,
                &programs,
                &popularity,
                &normal,
            );
            drafts.push(d);
        }
    }

    // Quota-2 opt-in propensity falls with GPA and rises with age.
    let gpas: Vec<f64> = drafts.iter().map(|d| d.gpa).collect();
    let (gpa_m, gpa_sd) = moments(&gpas);
    let ages: Vec<f64> = drafts.iter().map(|d| d.socio.age).collect();
    let (age_m, age_sd) = moments(&ages);
    let opt_logits: Vec<f64> = drafts
        .iter()
        .map(|d| -0.6 * (d.gpa - gpa_m) / gpa_sd + 0.3 * (d.socio.age - age_m) / age_sd)
        .collect();
    let alpha = calibrate_intercept(&opt_logits, cfg.opt_in_rate);
    for (d, &x) in drafts.iter_mut().zip(&opt_logits) {
        d.opt_in = rng.random_bool(sigmoid(alpha + x));
        d.human_score = 0.7 * d.latent.diligence
            + 0.3 * (d.socio.age - age_m) / age_sd
            + 0.7 * normal.sample(&mut rng);
    }

    // Seats sized from the largest year.
    let per_year = cfg.n_students.div_ceil(n_years);
    let total_pop: f64 = popularity.iter().sum();
    for (p, &w) in programs.iter_mut().zip(&popularity) {
        let cap = ((per_year as f64 * cfg.seat_slack * w / total_pop).round() as u32).max(1);
        let q2 = (cfg.quota2_share * cap as f64).round() as u32;
        p.seats_q2 = q2.min(cap.saturating_sub(1));
        p.seats_q1 = cap - p.seats_q2;
    }
    let total_q1: u32 = programs.iter().map(|p| p.seats_q1).sum();
    if (total_q1 as usize) < per_year {
        // Guarantees that every applicant can be placed through quota 1.
        let extra = per_year - total_q1 as usize;
        let n_programs = programs.len();
        for k in 0..extra {
            programs[k % n_programs].seats_q1 += 1;
        }
    }

    let mut students = Vec::with_capacity(drafts.len());
    let mut cutoffs: BTreeMap<(u32, i32), f64> = BTreeMap::new();
    let mut year_start = 0;
    while year_start < drafts.len() {
        let year = drafts[year_start].year;
        let year_end = year_start + drafts[year_start..].iter().take_while(|d| d.year == year).count();
        let group = &mut drafts[year_start..year_end];
        let (matched, outcome) = match_year(&programs, group)?;
        let deciles = human_deciles(group);
        for (k, d) in group.iter().enumerate() {
            let seat = outcome.assignment[k].expect("every applicant is placed");
            let program = &programs[seat.program];
            let mut events: Vec<Event> = d.grades.iter().cloned().map(Event::Grade).collect();
            for (rank, pref) in matched.applicants[k].preferences.iter().enumerate() {
                let p = &programs[pref.program];
                events.push(Event::Application(ApplicationEvent {
                    year,
                    program_id: p.program_id,
                    isced_field: p.isced_field,
                    rank: rank as u8 + 1,
                    quota2_opt_in: d.opt_in,
                    human_rank_decile: if d.opt_in { deciles[k] } else { None },
                }));
            }
            events.push(Event::Enrollment(EnrollmentEvent {
                year,
                program_id: program.program_id,
                isced_field: program.isced_field,
                quota: seat.quota,
            }));
            students.push(Student {
                id: d.id,
                gpa: d.gpa,
                events,
                sociodemo: d.socio.clone(),
                enrolled_program: program.program_id,
                admission_quota: seat.quota,
                cohort_year: year,
                completed: false,
                planted_probability: 0.0,
            });
        }
        for (p, admits) in outcome.admits_q1.iter().enumerate() {
            if admits.len() >= programs[p].seats_q1 as usize && !admits.is_empty() {
                let min = admits.iter().map(|&s| group[s].gpa).fold(f64::INFINITY, f64::min);
                cutoffs.insert((programs[p].program_id, year), min);
            }
        }
        year_start = year_end;
    }
    for ((id, year), cut) in cutoffs {
        programs[id as usize].cutoff_history.insert(year, cut);
    }
    for p in programs.iter_mut() {
        p.prior_year_gpa_cutoff = p.cutoff_before(cfg.last_year);
    }

    // SES indicator from the parental principal component.
    let socio: Vec<SocioRecord> = students.iter().map(|s| s.sociodemo.clone()).collect();
    for (s, high) in students.iter_mut().zip(ses_indicator(&socio)) {
        s.sociodemo.ses_high = high;
    }

    // Planted outcome model.
    let profiles: Vec<[f64; 3]> = drafts.iter().map(|d| profile(&d.grades)).collect();
    let col = |k: usize| profiles.iter().map(|p| p[k]).collect::<Vec<f64>>();
    let mut feature_moments = BTreeMap::new();
    feature_moments.insert("gpa".to_string(), (gpa_m, gpa_sd));
    let names = ["stem_relative", "failing", "trend"];
    let mut mom = [(0.0, 1.0); 3];
    for (k, name) in names.iter().enumerate() {
        mom[k] = moments(&col(k));
        feature_moments.insert(name.to_string(), mom[k]);
    }
    let c = &cfg.planted;
    let logits: Vec<f64> = students
        .iter()
        .zip(&drafts)
        .zip(&profiles)
        .map(|((s, d), pr)| {
            let z = |k: usize| (pr[k] - mom[k].0) / mom[k].1;
            let program = &programs[s.enrolled_program as usize];
            c.gpa * (s.gpa - gpa_m) / gpa_sd
                + c.stem_relative * z(0)
                + c.failing * pr[1]
                + c.trend * z(2).tanh()
                + c.diligence * d.latent.diligence
                + c.same_field * f64::from(u8::from(program.isced_field as usize == d.preferred_field))
                + effects[s.enrolled_program as usize]
        })
        .collect();
    let calib: Vec<f64> = students
        .iter()
        .zip(&logits)
        .filter(|(s, _)| n_years == 1 || s.cohort_year < cfg.last_year)
        .map(|(_, &l)| l)
        .collect();
    let intercept = calibrate_intercept(&calib, cfg.target_completion);
    let mut outcome_rng = substream(seed, "cohort-outcome");
    for (s, &l) in students.iter_mut().zip(&logits) {
        s.planted_probability = sigmoid(intercept + l);
        s.completed = outcome_rng.random_bool(s.planted_probability);
    }

    Ok(Cohort {
        programs,
        planted: PlantedModel {
            intercept,
            coefficients: cfg.planted.clone(),
            program_effects: effects,
            feature_moments,
        },
        students,
    })
}

/// Deciles (10 = best) of the human score among opted-in students.
fn human_deciles(group: &[Draft]) -> Vec<Option<u8>> {
    let mut opted: Vec<usize> = (0..group.len()).filter(|&k| group[k].opt_in).collect();
    opted.sort_by(|&a, &b| group[a].human_score.total_cmp(&group[b].human_score).then(a.cmp(&b)));
    let mut out = vec![None; group.len()];
    let n = opted.len();
    for (r, &k) in opted.iter().enumerate() {
        out[k] = Some((1 + r * 10 / n) as u8);
    }
    out
}

/// Matches one year; applicants left unplaced get a vacant program appended
/// as their last choice and the match is rerun.
fn match_year(programs: &[Program], group: &mut [Draft]) -> Result<(MatchInstance, matching::MatchOutcome)> {
    let seats: Vec<ProgramSeats> = programs
        .iter()
        .map(|p| ProgramSeats {
            seats_q1: p.seats_q1 as usize,
            seats_q2: p.seats_q2 as usize,
        })
        .collect();
    let build = |group: &[Draft]| MatchInstance {
        programs: seats.clone(),
        applicants: group
            .iter()
            .map(|d| Applicant {
                gpa: d.gpa,
                preferences: d
                    .applications
                    .iter()
                    .map(|&p| Preference {
                        program: p as usize,
                        q2_priority: d.opt_in.then_some(d.human_score),
                    })
                    .collect(),
            })
            .collect(),
    };
    let inst = build(group);
    let outcome = matching::david_q_match(&inst)?;
    let unplaced: Vec<usize> = outcome.unassigned().collect();
    if unplaced.is_empty() {
        return Ok((inst, outcome));
    }
    let mut free: Vec<i64> = seats
        .iter()
        .zip(&outcome.admits_q1)
        .map(|(s, a)| s.seats_q1 as i64 - a.len() as i64)
        .collect();
    for k in unplaced {
        let mut order: Vec<usize> = (0..free.len())
            .filter(|&j| free[j] > 0 && !group[k].applications.contains(&(j as u32)))
            .collect();
        order.sort_by(|&a, &b| free[b].cmp(&free[a]).then(a.cmp(&b)));
        let Some(&j) = order.first() else {
            return Err(Error::Numerical("no vacant seat for an unplaced applicant".into()));
        };
        free[j] -= 1;
        group[k].applications.push(j as u32);
    }
    let inst = build(group);
    let outcome = matching::david_q_match(&inst)?;
    if outcome.unassigned().next().is_some() {
        return Err(Error::Numerical("vacancy placement left applicants unmatched".into()));
    }
    Ok((inst, outcome))
}
