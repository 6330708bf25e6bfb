//! One function per subcommand.

mod analysis;
mod data;
mod modelling;

pub use analysis::{audit_fairness, contract, econ, evaluate, report, EconOverrides};
pub use data::{encode, generate, instance_for_year, match_cmd};
pub use modelling::{explain, predict, train, LoadedModel};

use admitsim_core::cohort::{load_cohort, temporal_split, Cohort};
use admitsim_core::models::RiskTable;

use crate::artifacts::{predictions, Run, COHORT};
use crate::error::Result;

/// The full cohort and its temporal train/test split.
fn load_split(run: &Run) -> Result<(Cohort, Cohort, Cohort)> {
    let path = run.require(COHORT, "generate")?;
    let cohort = load_cohort(&path)?;
    let (train, test) = temporal_split(&cohort, run.config.split.holdout_year)?;
    Ok((cohort, train, test))
}

fn load_predictions(run: &Run, name: &str) -> Result<RiskTable> {
    Ok(RiskTable::load(&run.require(&predictions(name), "predict")?)?)
}
