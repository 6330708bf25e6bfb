//! Multi-channel token sequences.
//!
//! Every event of a student becomes one position; each channel holds one
//! aspect of that event as a word, or `[Null]` where the aspect does not
//! apply. Position 0 is a `[Null]` in every channel except the class channel,
//! which holds `[CLS]` there and `[Null]` everywhere else.

mod binning;
mod container;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

pub use binning::{fit_binning, nearest_rank, BinningRule, PERCENTILE_BINS, WINSOR_PERCENT};
pub use container::{read_batch, write_batch, ASEQ_MAGIC};

use crate::cohort::{Cohort, Event, ParentRecord, Student};
use crate::error::{input_err, Error, Result};
use crate::variant::InputVariant;

pub const PAD: u32 = 0;
pub const NULL: u32 = 1;
pub const CLS: u32 = 2;
pub const UNK: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[Null]", "[CLS]", "[UNK]"];
pub const DEFAULT_MIN_COUNT: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Cls,
    RelYear,
    Grade,
    Course,
    CourseType,
    CourseLevel,
    TestType,
    EduType,
    StudyLine,
    SchoolStage,
    InstitutionId,
    Gpa,
    PlaceId,
    PlaceIsced,
    AppRank,
    Quota2Applied,
    Enrolled,
    Q2Decile,
    GpaCutoff,
    Age,
    Socio,
}

impl Channel {
    pub fn name(self) -> &'static str {
        use Channel::*;
        match self {
            Cls => "cls",
            RelYear => "rel_year",
            Grade => "grade",
            Course => "course",
            CourseType => "course_type",
            CourseLevel => "course_level",
            TestType => "test_type",
            EduType => "edu_type",
            StudyLine => "study_line",
            SchoolStage => "school_stage",
            InstitutionId => "institution",
            Gpa => "gpa",
            PlaceId => "place",
            PlaceIsced => "place_isced",
            AppRank => "app_rank",
            Quota2Applied => "quota2",
            Enrolled => "enrolled",
            Q2Decile => "q2_decile",
            GpaCutoff => "gpa_cutoff",
            Age => "age",
            Socio => "socio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Socio,
    Grade,
    GpaScore,
    Application,
    Enrollment,
}

/// Channels filled by an event of `kind` under `variant`.
pub fn event_channels(variant: InputVariant, kind: EventKind) -> Vec<Channel> {
    use Channel::*;
    if variant == InputVariant::GpaBaseline {
        return match kind {
            EventKind::GpaScore => vec![RelYear, StudyLine, Gpa],
            EventKind::Enrollment => vec![RelYear, PlaceId],
            _ => vec![],
        };
    }
    let mut ch = match kind {
        EventKind::Socio if variant.sociodemo() => vec![Socio],
        EventKind::Grade => vec![RelYear, Grade, Course, CourseType, CourseLevel, TestType, EduType, StudyLine, SchoolStage],
        EventKind::Application if variant.applications() => {
            vec![RelYear, PlaceId, PlaceIsced, AppRank, Quota2Applied, Enrolled]
        }
        EventKind::Enrollment => vec![RelYear, PlaceId, PlaceIsced, Gpa],
        _ => return vec![],
    };
    if kind == EventKind::Grade && variant.sociodemo() {
        ch.push(InstitutionId);
    }
    if kind == EventKind::Enrollment {
        if variant.applications() {
            ch.push(Enrolled);
        }
        if variant.human() {
            ch.push(Q2Decile);
        }
        if variant.sociodemo() {
            ch.extend([GpaCutoff, Age]);
        }
    }
    ch.sort();
    ch
}

/// All channels of a variant in canonical order, the class channel first.
pub fn variant_channels(variant: InputVariant) -> Vec<Channel> {
    let mut all = vec![Channel::Cls];
    for kind in [
        EventKind::Socio,
        EventKind::Grade,
        EventKind::GpaScore,
        EventKind::Application,
        EventKind::Enrollment,
    ] {
        all.extend(event_channels(variant, kind));
    }
    all.sort();
    all.dedup();
    all
}

/// One event rendered as channel words, before vocabulary lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWords {
    pub kind: EventKind,
    pub year: i32,
    pub words: Vec<(Channel, String)>,
}

/// Continuous variables with learned binning rules.
pub const BINNED_VARIABLES: [&str; 6] = ["gpa", "gpa_cutoff", "age", "income", "wealth", "education_months"];

pub type BinningRules = BTreeMap<String, BinningRule>;

fn student_cutoff(cohort: &Cohort, s: &Student) -> Option<f64> {
    cohort.program(s.enrolled_program).and_then(|p| p.cutoff_before(s.cohort_year))
}

/// Fits a rule for each continuous variable present in the training cohort.
pub fn fit_rules(train: &Cohort) -> Result<BinningRules> {
    let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &train.students {
        values.entry("gpa").or_default().push(s.gpa);
        values.entry("age").or_default().push(s.sociodemo.age);
        if let Some(c) = student_cutoff(train, s) {
            values.entry("gpa_cutoff").or_default().push(c);
        }
        for p in [&s.sociodemo.mother, &s.sociodemo.father] {
            for (name, v) in [("income", p.income), ("wealth", p.wealth), ("education_months", p.education_months)] {
                if let Some(v) = v {
                    values.entry(name).or_default().push(v);
                }
            }
        }
    }
    let mut rules = BinningRules::new();
    for (name, v) in values {
        if !v.is_empty() {
            rules.insert(name.to_string(), fit_binning(&v)?);
        }
    }
    Ok(rules)
}

fn binned(rules: &BinningRules, name: &str, v: Option<f64>) -> String {
    match (rules.get(name), v) {
        (Some(r), Some(v)) => r.token(v),
        _ => "none".to_string(),
    }
}

fn word(c: Channel, value: impl std::fmt::Display) -> (Channel, String) {
    (c, format!("{}:{value}", c.name()))
}

fn level(l: crate::cohort::CourseLevel) -> &'static str {
    match l {
        crate::cohort::CourseLevel::A => "A",
        crate::cohort::CourseLevel::B => "B",
        crate::cohort::CourseLevel::C => "C",
    }
}

fn stage(s: crate::cohort::SchoolStage) -> &'static str {
    match s {
        crate::cohort::SchoolStage::Primary => "primary",
        crate::cohort::SchoolStage::HighSchool => "high_school",
    }
}

fn socio_words(s: &Student, rules: &BinningRules) -> Vec<EventWords> {
    let mut out = Vec::new();
    let mut push = |v: String| {
        out.push(EventWords {
            kind: EventKind::Socio,
            year: s.cohort_year,
            words: vec![word(Channel::Socio, v)],
        })
    };
    push(format!("female_{}", s.sociodemo.female as u8));
    push(format!("danish_origin_{}", s.sociodemo.danish_origin as u8));
    let parents: [(&str, &ParentRecord); 2] = [("mother", &s.sociodemo.mother), ("father", &s.sociodemo.father)];
    for (who, p) in parents {
        if p.income.is_some() {
            push(format!("{who}_income_{}", binned(rules, "income", p.income)));
        }
        if p.wealth.is_some() {
            push(format!("{who}_wealth_{}", binned(rules, "wealth", p.wealth)));
        }
        if let Some(code) = &p.education_isced {
            push(format!("{who}_edu_{code}"));
        }
        if p.education_months.is_some() {
            push(format!("{who}_months_{}", binned(rules, "education_months", p.education_months)));
        }
    }
    out
}

/// Most common high-school study line (first seen wins ties).
pub fn main_study_line(s: &Student) -> Option<&str> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for g in s.grades().filter(|g| g.school_stage == crate::cohort::SchoolStage::HighSchool) {
        match counts.iter_mut().find(|c| c.0 == g.study_line) {
            Some(c) => c.1 += 1,
            None => counts.push((&g.study_line, 1)),
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for c in counts {
        if best.is_none_or(|b| c.1 > b.1) {
            best = Some(c);
        }
    }
    best.map(|b| b.0)
}

/// The student's filtered, chronologically ordered events as words.
///
/// Same-year order: sociodemographics, grades by course name, the GPA
/// event, applications by rank, enrollment. Sociodemographic events come
/// first overall.
pub fn student_events(
    cohort: &Cohort,
    s: &Student,
    variant: InputVariant,
    rules: &BinningRules,
) -> Result<Vec<EventWords>> {
    let enroll = s
        .enrollment()
        .ok_or_else(|| Error::Input(format!("student {} has no enrollment", s.id)))?;
    let year0 = enroll.year;
    let rel = |y: i32| word(Channel::RelYear, y - year0);
    let mut events: Vec<(u8, i32, u8, String, usize, EventWords)> = Vec::new();

    if variant.sociodemo() {
        for (k, e) in socio_words(s, rules).into_iter().enumerate() {
            events.push((0, 0, 0, String::new(), k, e));
        }
    }
    let baseline = variant == InputVariant::GpaBaseline;
    if baseline {
        let words = vec![
            rel(year0),
            word(Channel::StudyLine, main_study_line(s).unwrap_or("none")),
            word(Channel::Gpa, binned(rules, "gpa", Some(s.gpa))),
        ];
        events.push((1, year0, 2, String::new(), 0, EventWords { kind: EventKind::GpaScore, year: year0, words }));
    }
    for (k, e) in s.events.iter().enumerate() {
        if e.year() > year0 {
            continue;
        }
        match e {
            Event::Grade(g) if !baseline => {
                let mut words = vec![
                    rel(g.year),
                    word(Channel::Grade, g.grade),
                    word(Channel::Course, &g.course),
                    word(Channel::CourseType, crate::cohort::course_field(&g.course).name()),
                    word(Channel::CourseLevel, level(g.course_level)),
                    word(Channel::TestType, &g.test_type),
                    word(Channel::EduType, &g.education_type),
                    word(Channel::StudyLine, &g.study_line),
                    word(Channel::SchoolStage, stage(g.school_stage)),
                ];
                if variant.sociodemo() {
                    words.push(word(Channel::InstitutionId, &g.institution_id));
                }
                let key = format!("{}\u{0}{}", g.course, g.test_type);
                events.push((1, g.year, 1, key, k, EventWords { kind: EventKind::Grade, year: g.year, words }));
            }
            Event::Application(a) if variant.applications() => {
                let words = vec![
                    rel(a.year),
                    word(Channel::PlaceId, a.program_id),
                    word(Channel::PlaceIsced, a.isced_field),
                    word(Channel::AppRank, a.rank),
                    word(Channel::Quota2Applied, a.quota2_opt_in as u8),
                    word(Channel::Enrolled, if a.program_id == s.enrolled_program { "yes" } else { "no" }),
                ];
                let ev = EventWords { kind: EventKind::Application, year: a.year, words };
                events.push((1, a.year, 3, format!("{:03}", a.rank), k, ev));
            }
            Event::Enrollment(en) => {
                let mut words = vec![rel(en.year), word(Channel::PlaceId, en.program_id)];
                if !baseline {
                    words.push(word(Channel::PlaceIsced, en.isced_field));
                    words.push(word(Channel::Gpa, binned(rules, "gpa", Some(s.gpa))));
                    if variant.applications() {
                        words.push(word(Channel::Enrolled, "yes"));
                    }
                    if variant.human() {
                        let d = s.human_rank_decile().map_or("none".to_string(), |d| d.to_string());
                        words.push(word(Channel::Q2Decile, d));
                    }
                    if variant.sociodemo() {
                        words.push(word(Channel::GpaCutoff, binned(rules, "gpa_cutoff", student_cutoff(cohort, s))));
                        words.push(word(Channel::Age, binned(rules, "age", Some(s.sociodemo.age))));
                    }
                }
                words.sort_by_key(|w| w.0);
                let ev = EventWords { kind: EventKind::Enrollment, year: en.year, words };
                events.push((1, en.year, 4, String::new(), k, ev));
            }
            _ => {}
        }
    }
    events.sort_by(|a, b| (a.0, a.1, a.2, &a.3, a.4).cmp(&(b.0, b.1, b.2, &b.3, b.4)));
    Ok(events
        .into_iter()
        .map(|mut e| {
            e.5.words.sort_by_key(|w| w.0);
            e.5
        })
        .collect())
}

/// Token inventory with `[UNK]` for rare or unseen words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    pub min_count: usize,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    min_count: usize,
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Vocabulary::from_tokens(f.min_count, f.tokens)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile { min_count: v.min_count, tokens: v.tokens }
    }
}

impl Vocabulary {
    /// `words` excludes the special tokens, which always take indices 0..4.
    pub fn from_tokens(min_count: usize, words: Vec<String>) -> Self {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().filter(|w| !SPECIAL_TOKENS.contains(&w.as_str())));
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { min_count, tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lookup(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn token(&self, idx: u32) -> Option<&str> {
        self.tokens.get(idx as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token indices per channel, read off the word prefixes.
    pub fn channel_inventory(&self) -> BTreeMap<String, Vec<u32>> {
        let mut out: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (i, t) in self.tokens.iter().enumerate().skip(SPECIAL_TOKENS.len()) {
            if let Some((c, _)) = t.split_once(':') {
                out.entry(c.to_string()).or_default().push(i as u32);
            }
        }
        out
    }

    pub fn hash(&self) -> u64 {
        crate::rng::hash64(self.tokens.join("\n").as_bytes())
    }
}

/// Words occurring at least `min_count` times in the training events.
pub fn build_vocabulary(
    train: &Cohort,
    variant: InputVariant,
    rules: &BinningRules,
    min_count: usize,
) -> Result<Vocabulary> {
    if train.is_empty() {
        return input_err("empty training cohort");
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in &train.students {
        for e in student_events(train, s, variant, rules)? {
            for (_, w) in e.words {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let words = counts.into_iter().filter(|(_, c)| *c >= min_count).map(|(w, _)| w).collect();
    Ok(Vocabulary::from_tokens(min_count, words))
}

/// Nearest-rank 95th percentile of event counts, plus one for the leading `[Null]`.
pub fn compute_l(lengths: &[usize]) -> Result<usize> {
    if lengths.is_empty() {
        return input_err("no sequence lengths");
    }
    let mut v: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    v.sort_by(f64::total_cmp);
    Ok(nearest_rank(&v, 95.0) as usize + 1)
}

/// Encodes one student as a channel-major grid of `channels.len() * l` indices.
pub fn encode_student(
    cohort: &Cohort,
    s: &Student,
    variant: InputVariant,
    vocab: &Vocabulary,
    rules: &BinningRules,
    l: usize,
) -> Result<Vec<u32>> {
    if l < 1 {
        return input_err("sequence length must be at least 1");
    }
    let channels = variant_channels(variant);
    let slot: HashMap<Channel, usize> = channels.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut events = student_events(cohort, s, variant, rules)?;
    let capacity = l - 1;
    if events.len() > capacity {
        let socio = events.iter().filter(|e| e.kind == EventKind::Socio).count();
        if socio > capacity {
            warn!("student {} has {socio} sociodemographic events for {capacity} slots", s.id);
            events.truncate(capacity);
        } else {
            let drop = events.len() - capacity;
            // socio events lead, so the oldest others start right after them
            events.drain(socio..socio + drop);
        }
    }
    let mut grid = vec![PAD; channels.len() * l];
    let at = |c: usize, p: usize| c * l + p;
    grid[at(0, 0)] = CLS;
    for p in 1..l {
        grid[at(0, p)] = NULL;
    }
    for c in 1..channels.len() {
        grid[at(c, 0)] = NULL;
    }
    if events.is_empty() {
        warn!("student {} has no events after filtering", s.id);
        for c in 1..channels.len() {
            for p in 1..l {
                grid[at(c, p)] = NULL;
            }
        }
        return Ok(grid);
    }
    for (i, e) in events.iter().enumerate() {
        let p = i + 1;
        for c in 1..channels.len() {
            grid[at(c, p)] = NULL;
        }
        for (ch, w) in &e.words {
            grid[at(slot[ch], p)] = vocab.lookup(w);
        }
    }
    Ok(grid)
}

/// Encoded students, `tokens[(student * C + channel) * L + position]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequenceBatch {
    pub channels: usize,
    pub seq_len: usize,
    pub vocab_hash: u64,
    pub tokens: Vec<u32>,
}

impl TokenSequenceBatch {
    pub fn len(&self) -> usize {
        self.tokens.len() / (self.channels * self.seq_len).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn student(&self, i: usize) -> &[u32] {
        let w = self.channels * self.seq_len;
        &self.tokens[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize, channel: usize, pos: usize) -> u32 {
        self.student(i)[channel * self.seq_len + pos]
    }

    /// Positions holding a real event or the leading `[Null]` (not padding).
    pub fn valid_len(&self, i: usize) -> usize {
        if self.channels < 2 {
            return self.seq_len;
        }
        (0..self.seq_len).take_while(|&p| self.get(i, 1, p) != PAD).count()
    }

    /// Position-major token rows for one student: `[pos][channel]`.
    pub fn position_major(&self, i: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.channels * self.seq_len);
        for p in 0..self.seq_len {
            for c in 0..self.channels {
                out.push(self.get(i, c, p));
            }
        }
        out
    }

    pub fn select(&self, idx: &[usize]) -> TokenSequenceBatch {
        let mut tokens = Vec::with_capacity(idx.len() * self.channels * self.seq_len);
        for &i in idx {
            tokens.extend_from_slice(self.student(i));
        }
        TokenSequenceBatch { tokens, ..*self }
    }
}

/// Fitted vocabulary, binning rules and length for one input variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEncoder {
    pub variant: InputVariant,
    pub vocab: Vocabulary,
    pub rules: BinningRules,
    pub seq_len: usize,
}

impl SequenceEncoder {
    pub fn fit(train: &Cohort, variant: InputVariant, min_count: usize) -> Result<Self> {
        if train.is_empty() {
            return input_err("empty training cohort");
        }
        let rules = fit_rules(train)?;
        let vocab = build_vocabulary(train, variant, &rules, min_count)?;
        let lengths = train
            .students
            .iter()
            .map(|s| student_events(train, s, variant, &rules).map(|e| e.len()))
            .collect::<Result<Vec<_>>>()?;
        let seq_len = compute_l(&lengths)?;
        Ok(SequenceEncoder { variant, vocab, rules, seq_len })
    }

    pub fn channels(&self) -> Vec<Channel> {
        variant_channels(self.variant)
    }

    pub fn encode_student(&self, cohort: &Cohort, s: &Student) -> Result<Vec<u32>> {
        encode_student(cohort, s, self.variant, &self.vocab, &self.rules, self.seq_len)
    }

    pub fn encode(&self, cohort: &Cohort, students: &[Student]) -> Result<TokenSequenceBatch> {
        let mut tokens = Vec::with_capacity(students.len() * self.channels().len() * self.seq_len);
        for s in students {
            tokens.extend(self.encode_student(cohort, s)?);
        }
        Ok(TokenSequenceBatch {
            channels: self.channels().len(),
            seq_len: self.seq_len,
            vocab_hash: self.vocab.hash(),
            tokens,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_counts() {
        let counts: Vec<usize> = InputVariant::ALL.iter().map(|&v| variant_channels(v).len()).collect();
        assert_eq!(counts, vec![5, 13, 16, 14, 17, 21]);
    }

    #[test]
    fn lengths() {
        assert_eq!(compute_l(&[10; 7]).unwrap(), 11);
        let v: Vec<usize> = (1..=100).collect();
        assert_eq!(compute_l(&v).unwrap(), 96);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = Vocabulary::from_tokens(1, vec!["grade:7".into()]);
        assert_eq!(v.lookup("grade:7"), 4);
        assert_eq!(v.lookup("grade:12"), UNK);
        assert_eq!(v.len(), 5);
    }
}
