use std::collections::BTreeMap;
use std::path::Path;

use admitsim_core::cohort::{generate_cohort, save_cohort, Cohort};
use admitsim_core::matching::{
    check_capacity, check_stability, david_q_match, save_outcome, Applicant, MatchInstance, Preference, ProgramSeats, Quota,
};
use admitsim_core::seqenc::{write_batch, SequenceEncoder};
use admitsim_core::Error;
use log::{info, warn};

use super::load_split;
use crate::artifacts::{Run, COHORT};
use crate::error::{CliError, Result};

pub fn generate(run: &Run) -> Result<()> {
    let cfg = &run.config;
    let cohort = generate_cohort(&cfg.cohort, cfg.seed)?;
    info!("generated {} students over {} programs", cohort.len(), cohort.programs.len());
    let path = run.prepare(COHORT)?;
    save_cohort(&cohort, &path)?;
    let summary = run.write_with("cohort_summary.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["year", "students", "completion_rate", "quota2_admits"])?;
        for y in cohort.years() {
            let year: Vec<_> = cohort.students.iter().filter(|s| s.cohort_year == y).collect();
            let done = year.iter().filter(|s| s.completed).count();
            let q2 = year.iter().filter(|s| s.admission_quota == Quota::Human).count();
            out.write_record([
                y.to_string(),
                year.len().to_string(),
                format!("{:.6}", done as f64 / year.len() as f64),
                q2.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    run.finish("generate", &[], &[COHORT.to_string(), summary])
}

pub fn encode(run: &Run) -> Result<()> {
    let cfg = &run.config;
    let (_, train, test) = load_split(run)?;
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    for &variant in &cfg.models.variants {
        let enc = SequenceEncoder::fit(&train, variant, cfg.encoding.min_count)?;
        let dir = format!("encoded/{variant}");
        let encoder_rel = format!("{dir}/encoder.json");
        enc.save(&run.prepare(&encoder_rel)?)?;
        outputs.push(encoder_rel);
        for (part, cohort) in [("train", &train), ("test", &test)] {
            let batch = enc.encode(cohort, &cohort.students)?;
            let rel = format!("{dir}/{part}.aseq");
            outputs.push(run.write_with(&rel, |w| Ok(write_batch(&batch, w)?))?);
        }
        rows.push([
            variant.to_string(),
            enc.channels().len().to_string(),
            enc.vocab.len().to_string(),
            enc.seq_len.to_string(),
            train.len().to_string(),
            test.len().to_string(),
            format!("{:016x}", enc.vocab.hash()),
        ]);
        info!("{variant}: vocabulary {} tokens, length {}", enc.vocab.len(), enc.seq_len);
    }
    outputs.push(run.write_with("encoded/summary.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["variant", "channels", "vocab_size", "seq_len", "n_train", "n_test", "vocab_hash"])?;
        for r in &rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    })?);
    run.finish("encode", &[COHORT.to_string()], &outputs)
}

/// The applications of one admission year as a matching instance. Programs
/// are indexed by position in `cohort.programs`; quota-2 priority is the
/// human-rank decile.
pub fn instance_for_year(cohort: &Cohort, year: i32) -> Result<(MatchInstance, Vec<u64>)> {
    let index: BTreeMap<u32, usize> = cohort.programs.iter().enumerate().map(|(i, p)| (p.program_id, i)).collect();
    let programs = cohort
        .programs
        .iter()
        .map(|p| ProgramSeats { seats_q1: p.seats_q1 as usize, seats_q2: p.seats_q2 as usize })
        .collect();
    let mut applicants = Vec::new();
    let mut ids = Vec::new();
    for s in cohort.students.iter().filter(|s| s.cohort_year == year) {
        let mut apps: Vec<_> = s.applications().filter(|a| a.year == year).collect();
        apps.sort_by_key(|a| a.rank);
        let preferences = apps
            .iter()
            .map(|a| {
                let program = *index
                    .get(&a.program_id)
                    .ok_or_else(|| Error::Input(format!("student {} applies to unknown program {}", s.id, a.program_id)))?;
                let q2_priority = if a.quota2_opt_in { a.human_rank_decile.map(f64::from) } else { None };
                Ok(Preference { program, q2_priority })
            })
            .collect::<std::result::Result<Vec<_>, Error>>()?;
        applicants.push(Applicant { gpa: s.gpa, preferences });
        ids.push(s.id);
    }
    if applicants.is_empty() {
        return Err(CliError::Config(format!("no applicants in year {year}")));
    }
    Ok((MatchInstance { programs, applicants }, ids))
}

pub fn match_cmd(run: &Run, instance: Option<&Path>, year: Option<i32>) -> Result<()> {
    let mut inputs = Vec::new();
    let (inst, ids, cohort) = match instance {
        Some(path) => {
            let inst = MatchInstance::load(path).map_err(|e| match e {
                Error::Io(source) => CliError::Io { context: path.display().to_string(), source },
                other => CliError::Core(other),
            })?;
            let ids = (0..inst.applicants.len() as u64).collect();
            (inst, ids, None)
        }
        None => {
            let (cohort, _, _) = load_split(run)?;
            inputs.push(COHORT.to_string());
            let year = year.or(run.config.matching.year).unwrap_or(run.config.split.holdout_year);
            let (inst, ids) = instance_for_year(&cohort, year)?;
            info!("matching {} applicants for {year}", inst.applicants.len());
            (inst, ids, Some(cohort))
        }
    };
    let outcome = david_q_match(&inst)?;
    let blocking = check_stability(&inst, &outcome);
    if !blocking.is_empty() {
        return Err(Error::Numerical(format!("{} blocking pairs in the match", blocking.len())).into());
    }
    if !check_capacity(&inst, &outcome) {
        return Err(Error::Numerical("match exceeds program capacity".into()).into());
    }
    let outcome_rel = "matching/outcome.json".to_string();
    save_outcome(&outcome, &run.prepare(&outcome_rel)?)?;

    let summary = run.write_with("matching/programs.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["program", "seats_q1", "seats_q2", "admitted_q1", "admitted_q2", "lowest_gpa_q1"])?;
        for (j, seats) in inst.programs.iter().enumerate() {
            let id = cohort.as_ref().map_or(j as u32, |c| c.programs[j].program_id);
            let lowest = outcome.admits_q1[j]
                .iter()
                .map(|&s| inst.applicants[s].gpa)
                .min_by(f64::total_cmp)
                .map_or_else(|| "NA".to_string(), |g| format!("{g:.4}"));
            out.write_record([
                id.to_string(),
                seats.seats_q1.to_string(),
                seats.seats_q2.to_string(),
                outcome.admits_q1[j].len().to_string(),
                outcome.admits_q2[j].len().to_string(),
                lowest,
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let assignments = run.write_with("matching/assignments.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["student_id", "program", "quota", "recorded_program"])?;
        for (k, seat) in outcome.assignment.iter().enumerate() {
            let (program, quota) = match seat {
                Some(s) => {
                    let id = cohort.as_ref().map_or(s.program as u32, |c| c.programs[s.program].program_id);
                    (id.to_string(), if s.quota == Quota::Gpa { "gpa" } else { "human" }.to_string())
                }
                None => ("NA".to_string(), "NA".to_string()),
            };
            let recorded = cohort
                .as_ref()
                .and_then(|c| c.students.iter().find(|s| s.id == ids[k]))
                .map_or_else(|| "NA".to_string(), |s| s.enrolled_program.to_string());
            out.write_record([ids[k].to_string(), program, quota, recorded])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let unplaced = outcome.unassigned().count();
    if unplaced > 0 {
        warn!("{unplaced} applicants received no offer");
    }
    run.finish("match", &inputs, &[outcome_rel, summary, assignments])
}
