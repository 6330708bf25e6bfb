//! Desk-scale admission laboratory: synthetic cohorts, sequence encoding,
//! risk models, two-quota deferred acceptance and policy evaluation.

pub mod cohort;
pub mod econ;
pub mod error;
pub mod explain;
pub mod fairness;
pub mod matching;
pub mod models;
pub mod policy;
pub mod rng;
pub mod seqenc;
pub mod stats;
pub mod variant;

pub use error::{Error, Result};
pub use variant::InputVariant;
