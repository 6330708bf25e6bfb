//! Risk models and the shared prediction contract.

pub mod gbt;
pub mod logreg;
mod risk;
pub mod search;
pub mod sequence;
pub mod tabular;
mod train;
mod wrappers;

pub use gbt::{train_gbt, GbtModel, GbtParams};
pub use logreg::{train_logreg, LogregModel, LogregParams, Penalty};
pub use risk::{RiskRow, RiskTable};
pub use search::{cross_validate, random_search_cv, SearchResult, SearchSpace, TabularFamily, TabularHyper};
pub use sequence::{LstmConfig, SequenceArch, SequenceNet, TransformerConfig};
pub use tabular::{featurize_tabular, FeatureMatrix, OrdinalEncoding, TabularSchema};
pub use train::{train_sequence_model, EpochLog, SequenceModel, TrainConfig, TrainingHistory};
pub use wrappers::{FittedTabular, GpaRanking, TabularModel};

use crate::cohort::{Cohort, Student};
use crate::error::Result;

/// Anything that maps students to predicted completion probabilities.
///
/// `cohort` supplies program metadata; students need not belong to it.
pub trait RiskModel {
    fn name(&self) -> &str;

    fn predict(&self, cohort: &Cohort, students: &[Student]) -> Result<Vec<f64>>;

    fn risk_table(&self, cohort: &Cohort, students: &[Student]) -> Result<RiskTable> {
        let scores = self.predict(cohort, students)?;
        RiskTable::from_students(cohort, students, &scores)
    }
}
