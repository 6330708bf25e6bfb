//! `RiskModel` implementations for the GPA ranking and the tabular models.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Student};
use crate::error::{Error, Result};
use crate::models::gbt::GbtModel;
use crate::models::logreg::LogregModel;
use crate::models::search::TabularHyper;
use crate::models::tabular::{OrdinalEncoding, TabularSchema};
use crate::models::{gbt::train_gbt, logreg::train_logreg, RiskModel};
use crate::rng::substream;
use crate::variant::InputVariant;

/// Ranks by admission GPA alone, mapped from [-3, 12] onto [0, 1].
#[derive(Debug, Clone, Copy, Default)]
pub struct GpaRanking;

impl RiskModel for GpaRanking {
    fn name(&self) -> &str {
        "gpa"
    }

    fn predict(&self, _cohort: &Cohort, students: &[Student]) -> Result<Vec<f64>> {
        Ok(students.iter().map(|s| ((s.gpa + 3.0) / 15.0).clamp(0.0, 1.0)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedTabular {
    Logreg(LogregModel),
    Gbt(GbtModel),
}

/// A fitted tabular model together with its feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    pub name: String,
    pub schema: TabularSchema,
    pub model: FittedTabular,
}

impl TabularModel {
    /// Fits on the whole of `train`. Logistic regression one-hot encodes
    /// ordinal inputs; the tree model keeps them numeric.
    pub fn fit(train: &Cohort, variant: InputVariant, hyper: TabularHyper, seed: u64) -> Result<Self> {
        let ordinal = match hyper {
            TabularHyper::Logreg(_) => OrdinalEncoding::OneHot,
            TabularHyper::Gbt(_) => OrdinalEncoding::Numeric,
        };
        let schema = TabularSchema::fit(train, variant, ordinal)?;
        let x = schema.transform(train, &train.students);
        let y: Vec<bool> = train.students.iter().map(|s| s.completed).collect();
        let (name, model) = match hyper {
            TabularHyper::Logreg(p) => ("logreg", FittedTabular::Logreg(train_logreg(&x, &y, p)?)),
            TabularHyper::Gbt(p) => {
                let mut rng = substream(seed, "gbt");
                ("gbt", FittedTabular::Gbt(train_gbt(&x, &y, p, &mut rng)?))
            }
        };
        Ok(TabularModel { name: format!("{name}:{variant}"), schema, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

impl RiskModel for TabularModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, cohort: &Cohort, students: &[Student]) -> Result<Vec<f64>> {
        let x = self.schema.transform(cohort, students);
        let p = match &self.model {
            FittedTabular::Logreg(m) => m.predict(&x),
            FittedTabular::Gbt(m) => m.predict(&x),
        };
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{} produced a non-finite probability", self.name)));
        }
        Ok(p)
    }
}
