//! Two-quota student-proposing deferred acceptance.
//!
//! Every program runs two independent priority orders: quota 1 ranks all
//! applicants by GPA, quota 2 ranks opted-in applicants by a human
//! assessment. A program's choice from a set of proposers fills quota 1 by
//! GPA first and then fills quota 2 from the remaining opted-in proposers.
//! Priority ties are broken in favour of the lower applicant index.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// Maximum number of programs an applicant may rank.
pub const MAX_PREFERENCES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quota {
    Gpa,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSeats {
    pub seats_q1: usize,
    pub seats_q2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub program: usize,
    /// Quota-2 priority at this program when the applicant opted in; higher is better.
    pub q2_priority: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Applicant {
    pub gpa: f64,
    /// Strict preference order, most preferred first.
    pub preferences: Vec<Preference>,
}

impl Applicant {
    fn q2_at(&self, program: usize) -> Option<f64> {
        self.preferences
            .iter()
            .find(|p| p.program == program)
            .and_then(|p| p.q2_priority)
    }

    fn rank_of(&self, program: usize) -> Option<usize> {
        self.preferences.iter().position(|p| p.program == program)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchInstance {
    pub programs: Vec<ProgramSeats>,
    pub applicants: Vec<Applicant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seat {
    pub program: usize,
    pub quota: Quota,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub assignment: Vec<Option<Seat>>,
    pub admits_q1: Vec<Vec<usize>>,
    pub admits_q2: Vec<Vec<usize>>,
}

impl MatchOutcome {
    pub fn unassigned(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.is_none().then_some(i))
    }
}

impl MatchInstance {
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.applicants.iter().enumerate() {
            if a.preferences.len() > MAX_PREFERENCES {
                return input_err(format!("applicant {i} ranks more than {MAX_PREFERENCES} programs"));
            }
            if !a.gpa.is_finite() {
                return input_err(format!("applicant {i} has non-finite GPA"));
            }
            for (k, p) in a.preferences.iter().enumerate() {
                if p.program >= self.programs.len() {
                    return input_err(format!("applicant {i} ranks unknown program {}", p.program));
                }
                if a.preferences[..k].iter().any(|q| q.program == p.program) {
                    return input_err(format!("applicant {i} ranks program {} twice", p.program));
                }
                if p.q2_priority.is_some_and(|v| !v.is_finite()) {
                    return input_err(format!("applicant {i} has non-finite quota-2 priority"));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `a` has strictly higher quota-1 priority than `b`.
fn gpa_beats(inst: &MatchInstance, a: usize, b: usize) -> bool {
    let (ga, gb) = (inst.applicants[a].gpa, inst.applicants[b].gpa);
    match ga.partial_cmp(&gb).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a < b,
    }
}

fn q2_beats(inst: &MatchInstance, program: usize, a: usize, b: usize) -> bool {
    let pa = inst.applicants[a].q2_at(program).unwrap_or(f64::NEG_INFINITY);
    let pb = inst.applicants[b].q2_at(program).unwrap_or(f64::NEG_INFINITY);
    match pa.partial_cmp(&pb).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a < b,
    }
}

fn by_priority(better: impl Fn(usize, usize) -> bool) -> impl Fn(&usize, &usize) -> Ordering {
    move |&a, &b| {
        if a == b {
            Ordering::Equal
        } else if better(a, b) {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

/// The program's choice from `pool`: (quota-1 holders, quota-2 holders, rejected).
fn choose(inst: &MatchInstance, program: usize, mut pool: Vec<usize>) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let seats = inst.programs[program];
    pool.sort_by(by_priority(|a, b| gpa_beats(inst, a, b)));
    let cut = seats.seats_q1.min(pool.len());
    let q1: Vec<usize> = pool[..cut].to_vec();
    let rest = &pool[cut..];
    let (mut eligible, mut rejected): (Vec<usize>, Vec<usize>) = rest
        .iter()
        .partition(|&&s| inst.applicants[s].q2_at(program).is_some());
    eligible.sort_by(by_priority(|a, b| q2_beats(inst, program, a, b)));
    let cut = seats.seats_q2.min(eligible.len());
    rejected.extend_from_slice(&eligible[cut..]);
    eligible.truncate(cut);
    (q1, eligible, rejected)
}

/// Runs deferred acceptance on a validated instance.
pub fn david_q_match(inst: &MatchInstance) -> Result<MatchOutcome> {
    inst.validate()?;
    Ok(run_da(inst))
}

fn run_da(inst: &MatchInstance) -> MatchOutcome {
    let n = inst.applicants.len();
    let np = inst.programs.len();
    let mut next = vec![0usize; n];
    let mut held_q1: Vec<Vec<usize>> = vec![Vec::new(); np];
    let mut held_q2: Vec<Vec<usize>> = vec![Vec::new(); np];
    let mut free: VecDeque<usize> = (0..n).collect();
    while let Some(s) = free.pop_front() {
        let prefs = &inst.applicants[s].preferences;
        if next[s] >= prefs.len() {
            continue;
        }
        let p = prefs[next[s]].program;
        next[s] += 1;
        let mut pool = std::mem::take(&mut held_q1[p]);
        pool.append(&mut held_q2[p]);
        pool.push(s);
        let (q1, q2, rejected) = choose(inst, p, pool);
        held_q1[p] = q1;
        held_q2[p] = q2;
        free.extend(rejected);
    }
    let mut assignment = vec![None; n];
    for p in 0..np {
        held_q1[p].sort_unstable();
        held_q2[p].sort_unstable();
        for &s in &held_q1[p] {
            assignment[s] = Some(Seat { program: p, quota: Quota::Gpa });
        }
        for &s in &held_q2[p] {
            assignment[s] = Some(Seat { program: p, quota: Quota::Human });
        }
    }
    MatchOutcome {
        assignment,
        admits_q1: held_q1,
        admits_q2: held_q2,
    }
}

/// A student and a program that would both rather be matched to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockingPair {
    pub student: usize,
    pub program: usize,
    pub quota: Quota,
}

/// Lists every (student, program, quota) blocking triple of `outcome`.
pub fn check_stability(inst: &MatchInstance, outcome: &MatchOutcome) -> Vec<BlockingPair> {
    let mut pairs = Vec::new();
    for (s, app) in inst.applicants.iter().enumerate() {
        let current = outcome.assignment[s].and_then(|seat| app.rank_of(seat.program));
        let better = current.unwrap_or(app.preferences.len());
        for pref in &app.preferences[..better] {
            let p = pref.program;
            let seats = inst.programs[p];
            let q1 = &outcome.admits_q1[p];
            if q1.len() < seats.seats_q1 || q1.iter().any(|&t| gpa_beats(inst, s, t)) {
                pairs.push(BlockingPair {
                    student: s,
                    program: p,
                    quota: Quota::Gpa,
                });
            }
            if pref.q2_priority.is_some() {
                let q2 = &outcome.admits_q2[p];
                if q2.len() < seats.seats_q2 || q2.iter().any(|&t| q2_beats(inst, p, s, t)) {
                    pairs.push(BlockingPair {
                        student: s,
                        program: p,
                        quota: Quota::Human,
                    });
                }
            }
        }
    }
    pairs
}

/// Checks the per-quota capacity and single-seat invariants.
pub fn check_capacity(inst: &MatchInstance, outcome: &MatchOutcome) -> bool {
    let mut seen = vec![0usize; inst.applicants.len()];
    for (p, seats) in inst.programs.iter().enumerate() {
        if outcome.admits_q1[p].len() > seats.seats_q1 || outcome.admits_q2[p].len() > seats.seats_q2 {
            return false;
        }
        for &s in outcome.admits_q1[p].iter().chain(&outcome.admits_q2[p]) {
            seen[s] += 1;
            if outcome.assignment[s].map(|seat| seat.program) != Some(p) {
                return false;
            }
        }
    }
    seen.iter()
        .zip(&outcome.assignment)
        .all(|(&c, a)| c == usize::from(a.is_some()))
}

/// A profitable misreport found by the strategy-proofness probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub instance: usize,
    pub student: usize,
    pub report: Vec<usize>,
    pub truthful: Option<usize>,
    pub manipulated: Option<usize>,
}

/// Every ordered selection (without repetition) from `0..n`, of every length
/// up to `max_len`, including the empty list.
pub fn ordered_subsets(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, max_len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(cur.clone());
        if cur.len() == max_len {
            return;
        }
        for p in 0..n {
            if !cur.contains(&p) {
                cur.push(p);
                rec(n, max_len, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, max_len, &mut Vec::new(), &mut out);
    out
}

/// For every student of every instance, tries every alternative ranked list
/// over the instance's programs (quota-2 priorities travel with the program)
/// and reports misreports that yield a truly preferred program.
pub fn strategy_proofness_probe(family: &[MatchInstance]) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (idx, inst) in family.iter().enumerate() {
        let truthful = run_da(inst);
        let reports = ordered_subsets(inst.programs.len(), inst.programs.len().min(MAX_PREFERENCES));
        for s in 0..inst.applicants.len() {
            let truth = &inst.applicants[s];
            let got = truthful.assignment[s].map(|seat| seat.program);
            let got_rank = got.and_then(|p| truth.rank_of(p)).unwrap_or(usize::MAX);
            if got_rank == 0 {
                continue;
            }
            let opted: Vec<Option<f64>> = (0..inst.programs.len()).map(|p| truth.q2_at(p)).collect();
            let mut alt = inst.clone();
            for report in &reports {
                alt.applicants[s].preferences = report
                    .iter()
                    .map(|&p| Preference {
                        program: p,
                        q2_priority: opted[p],
                    })
                    .collect();
                let out = run_da(&alt);
                let manipulated = out.assignment[s].map(|seat| seat.program);
                let rank = manipulated.and_then(|p| truth.rank_of(p)).unwrap_or(usize::MAX);
                if rank < got_rank {
                    violations.push(Violation {
                        instance: idx,
                        student: s,
                        report: report.clone(),
                        truthful: got,
                        manipulated,
                    });
                }
            }
        }
    }
    violations
}

/// Every preference profile over `n_programs` for `n_students`, with GPA
/// strictly decreasing in applicant index, quota-2 priority increasing in
/// index (the reverse order), opt-in pattern `opt_in(student, program)` and
/// the given seat vector.
pub fn exhaustive_family(
    n_students: usize,
    seats: &[ProgramSeats],
    opt_in: impl Fn(usize, usize) -> bool,
) -> Vec<MatchInstance> {
    let lists = ordered_subsets(seats.len(), seats.len());
    let total = lists.len().pow(n_students as u32);
    let mut family = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let applicants = (0..n_students)
            .map(|s| {
                let list = &lists[c % lists.len()];
                c /= lists.len();
                Applicant {
                    gpa: (n_students - s) as f64,
                    preferences: list
                        .iter()
                        .map(|&p| Preference {
                            program: p,
                            q2_priority: opt_in(s, p).then_some(s as f64),
                        })
                        .collect(),
                }
            })
            .collect();
        family.push(MatchInstance {
            programs: seats.to_vec(),
            applicants,
        });
    }
    family
}

/// Writes an outcome as JSON text.
pub fn save_outcome(outcome: &MatchOutcome, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(outcome)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pref(p: usize, q2: Option<f64>) -> Preference {
        Preference {
            program: p,
            q2_priority: q2,
        }
    }

    #[test]
    fn higher_gpa_wins_single_seat() {
        let inst = MatchInstance {
            programs: vec![ProgramSeats { seats_q1: 1, seats_q2: 0 }],
            applicants: vec![
                Applicant {
                    gpa: 6.0,
                    preferences: vec![pref(0, None)],
                },
                Applicant {
                    gpa: 9.0,
                    preferences: vec![pref(0, None)],
                },
            ],
        };
        let out = david_q_match(&inst).unwrap();
        assert_eq!(out.assignment[1], Some(Seat { program: 0, quota: Quota::Gpa }));
        assert_eq!(out.assignment[0], None);
        assert!(check_stability(&inst, &out).is_empty());
    }

    #[test]
    fn low_gpa_admitted_through_quota_two() {
        let inst = MatchInstance {
            programs: vec![ProgramSeats { seats_q1: 1, seats_q2: 1 }],
            applicants: vec![
                Applicant {
                    gpa: 10.0,
                    preferences: vec![pref(0, None)],
                },
                Applicant {
                    gpa: 2.0,
                    preferences: vec![pref(0, Some(10.0))],
                },
                Applicant {
                    gpa: 7.0,
                    preferences: vec![pref(0, Some(3.0))],
                },
            ],
        };
        let out = david_q_match(&inst).unwrap();
        assert_eq!(out.assignment[0].unwrap().quota, Quota::Gpa);
        assert_eq!(out.assignment[1], Some(Seat { program: 0, quota: Quota::Human }));
        assert_eq!(out.assignment[2], None);
    }

    #[test]
    fn duplicate_preferences_rejected() {
        let inst = MatchInstance {
            programs: vec![ProgramSeats { seats_q1: 1, seats_q2: 0 }],
            applicants: vec![Applicant {
                gpa: 1.0,
                preferences: vec![pref(0, None), pref(0, None)],
            }],
        };
        assert!(david_q_match(&inst).is_err());
    }

    #[test]
    fn swapped_admits_block() {
        // Both prefer program 0; the lower-GPA student got it.
        let inst = MatchInstance {
            programs: vec![
                ProgramSeats { seats_q1: 1, seats_q2: 0 },
                ProgramSeats { seats_q1: 1, seats_q2: 0 },
            ],
            applicants: vec![
                Applicant {
                    gpa: 9.0,
                    preferences: vec![pref(0, None), pref(1, None)],
                },
                Applicant {
                    gpa: 4.0,
                    preferences: vec![pref(0, None), pref(1, None)],
                },
            ],
        };
        let mut out = david_q_match(&inst).unwrap();
        assert!(check_stability(&inst, &out).is_empty());
        out.assignment.swap(0, 1);
        out.admits_q1.swap(0, 1);
        let blocking = check_stability(&inst, &out);
        assert_eq!(blocking.len(), 1);
        assert_eq!((blocking[0].student, blocking[0].program), (0, 0));
    }

    #[test]
    fn empty_instance() {
        let inst = MatchInstance::default();
        let out = david_q_match(&inst).unwrap();
        assert!(check_stability(&inst, &out).is_empty());
        assert!(check_capacity(&inst, &out));
    }

    #[test]
    fn ordered_subset_counts() {
        assert_eq!(ordered_subsets(2, 2).len(), 5);
        assert_eq!(ordered_subsets(3, 3).len(), 16);
    }
}
