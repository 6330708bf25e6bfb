use crate::cohort::{Cohort, Student};
use crate::error::{Error, Result};
use crate::models::RiskModel;
use crate::policy::CounterfactualRow;

fn program<'a>(cohort: &'a Cohort, id: u32) -> Result<&'a crate::cohort::Program> {
    cohort
        .program(id)
        .ok_or_else(|| Error::Input(format!("program {id} not in cohort")))
}

/// Prediction with the student's enrollment moved to `program_id`.
pub fn counterfactual_predict(model: &dyn RiskModel, cohort: &Cohort, student: &Student, program_id: u32) -> Result<f64> {
    let moved = student.with_enrollment(program(cohort, program_id)?);
    Ok(model.predict(cohort, std::slice::from_ref(&moved))?[0])
}

/// One row per (student, program) pair, predicted in a single batch per student.
pub fn counterfactual_table(
    model: &dyn RiskModel,
    cohort: &Cohort,
    students: &[Student],
    program_ids: &[u32],
) -> Result<Vec<CounterfactualRow>> {
    let programs = program_ids.iter().map(|&id| program(cohort, id)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(students.len() * programs.len());
    for s in students {
        let observed = program(cohort, s.enrolled_program)?.isced_field;
        let moved: Vec<Student> = programs.iter().map(|p| s.with_enrollment(p)).collect();
        let p = model.predict(cohort, &moved)?;
        for (prog, p) in programs.iter().zip(p) {
            rows.push(CounterfactualRow {
                student_id: s.id,
                program_id: prog.program_id,
                observed_field: observed,
                field: prog.isced_field,
                p,
            });
        }
    }
    Ok(rows)
}
