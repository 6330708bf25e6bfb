//! Run configuration: one TOML file describing a seeded experiment.

use std::path::{Path, PathBuf};

use admitsim_core::cohort::GeneratorConfig;
use admitsim_core::econ::{OVERRIDE_RATE, REVENUE_PER_GRADUATE_USD};
use admitsim_core::fairness::{Attribute, ThresholdRule};
use admitsim_core::models::{GbtParams, LogregParams, LstmConfig, SearchSpace, SequenceArch, TrainConfig, TransformerConfig};
use admitsim_core::policy::BaselineRanking;
use admitsim_core::seqenc::DEFAULT_MIN_COUNT;
use admitsim_core::InputVariant;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cohort: GeneratorConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub fairness: FairnessConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub matching: MatchingConfig,
    #[serde(default)]
    pub econ: EconConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: None,
            cohort: GeneratorConfig::default(),
            split: SplitConfig::default(),
            encoding: EncodingConfig::default(),
            models: ModelsConfig::default(),
            evaluation: EvaluationConfig::default(),
            fairness: FairnessConfig::default(),
            explain: ExplainConfig::default(),
            matching: MatchingConfig::default(),
            econ: EconConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Students admitted in this year form the test set; earlier years train.
    pub holdout_year: i32,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { holdout_year: 2017 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingConfig {
    /// Words seen fewer times in training map to [UNK].
    pub min_count: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig { min_count: DEFAULT_MIN_COUNT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Logreg,
    Gbt,
    Transformer,
    Lstm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [ModelFamily::Logreg, ModelFamily::Gbt, ModelFamily::Transformer, ModelFamily::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Logreg => "logreg",
            ModelFamily::Gbt => "gbt",
            ModelFamily::Transformer => "transformer",
            ModelFamily::Lstm => "lstm",
        }
    }

    pub fn is_sequence(self) -> bool {
        matches!(self, ModelFamily::Transformer | ModelFamily::Lstm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub families: Vec<ModelFamily>,
    pub variants: Vec<InputVariant>,
    /// Floating-point type of the sequence models.
    pub precision: Precision,
    pub search: SearchConfig,
    pub transformer: TransformerConfig,
    pub lstm: LstmConfig,
    /// `seed` is replaced by the run seed.
    pub train: TrainConfig,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            families: ModelFamily::ALL.to_vec(),
            variants: vec![InputVariant::Academic],
            precision: Precision::F64,
            search: SearchConfig::default(),
            transformer: TransformerConfig::default(),
            lstm: LstmConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ModelsConfig {
    pub fn arch(&self, family: ModelFamily) -> Option<SequenceArch> {
        match family {
            ModelFamily::Transformer => Some(SequenceArch::Transformer(self.transformer)),
            ModelFamily::Lstm => Some(SequenceArch::Lstm(self.lstm)),
            _ => None,
        }
    }

    /// Every configured (family, variant) pair in a fixed order.
    pub fn grid(&self) -> Vec<(ModelFamily, InputVariant)> {
        let mut out = Vec::new();
        for &v in &self.variants {
            for &f in &self.families {
                out.push((f, v));
            }
        }
        out
    }
}

pub fn model_name(family: ModelFamily, variant: InputVariant) -> String {
    format!("{}_{}", family.name(), variant.name())
}

/// Tabular hyperparameters: a randomized search, or the fixed settings when
/// `n_candidates` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub n_candidates: usize,
    pub k_folds: usize,
    pub space: SearchSpace,
    pub logreg: LogregParams,
    pub gbt: GbtParams,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_candidates: 20,
            k_folds: 5,
            space: SearchSpace::default(),
            logreg: LogregParams::default(),
            gbt: GbtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub n_bins: usize,
    /// Share of each program's quota pool rejected in the contraction.
    pub fraction: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { n_bins: 10, fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairnessConfig {
    pub attributes: Vec<Attribute>,
    pub threshold: ThresholdRule,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig { attributes: Attribute::ALL.to_vec(), threshold: ThresholdRule::BaseRateQuantile }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub family: ModelFamily,
    /// Defaults to the first configured variant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<InputVariant>,
    pub n_sequences: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { family: ModelFamily::Transformer, variant: None, n_sequences: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchingConfig {
    /// Admission year to rematch; defaults to the holdout year.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconConfig {
    /// Model whose contraction drives the revenue; defaults to the first
    /// configured model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub baseline: BaselineRanking,
    /// Yearly revenue; derived from the contraction results when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revenue: Option<f64>,
    pub fixed_cost: f64,
    /// Yearly running cost before override losses.
    pub operational_cost: f64,
    /// Total yearly variable cost; defaults to operational plus override cost.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_cost: Option<f64>,
    pub delay: u32,
    pub per_graduate: f64,
    pub override_rate: f64,
    pub grid_fixed: Vec<f64>,
    pub grid_var: Vec<f64>,
    pub grid_delays: Vec<u32>,
}

impl Default for EconConfig {
    fn default() -> Self {
        EconConfig {
            model: None,
            baseline: BaselineRanking::AdmissionRule,
            revenue: None,
            fixed_cost: 1e6,
            operational_cost: 1e6,
            var_cost: None,
            delay: 1,
            per_graduate: REVENUE_PER_GRADUATE_USD,
            override_rate: OVERRIDE_RATE,
            grid_fixed: (0..=20).map(|i| i as f64 * 10e6).collect(),
            grid_var: (0..=20).map(|i| i as f64 * 5e6).collect(),
            grid_delays: vec![0, 1, 2, 3],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        self.cohort.validate()?;
        if self.models.variants.is_empty() {
            return bad("models.variants is empty".into());
        }
        if self.models.search.n_candidates > 0 && self.models.search.k_folds < 2 {
            return bad("models.search.k_folds must be at least 2".into());
        }
        for family in ModelFamily::ALL {
            if let Some(arch) = self.models.arch(family) {
                if self.models.families.contains(&family) {
                    arch.validate()?;
                }
            }
        }
        let mut train = self.models.train;
        train.seed = self.seed;
        train.validate()?;
        if self.evaluation.n_bins == 0 {
            return bad("evaluation.n_bins must be positive".into());
        }
        if !(self.evaluation.fraction > 0.0 && self.evaluation.fraction <= 1.0) {
            return bad(format!("evaluation.fraction {} outside (0, 1]", self.evaluation.fraction));
        }
        if !self.explain.family.is_sequence() {
            return bad(format!("explain.family {} is not a sequence model", self.explain.family.name()));
        }
        if !(0.0..=1.0).contains(&self.econ.override_rate) {
            return bad(format!("econ.override_rate {} outside [0, 1]", self.econ.override_rate));
        }
        if self.econ.grid_fixed.is_empty() || self.econ.grid_var.is_empty() || self.econ.grid_delays.is_empty() {
            return bad("econ grid axes must be nonempty".into());
        }
        if let Some(&k) = self.econ.grid_delays.iter().chain([&self.econ.delay]).find(|&&k| k > 35) {
            return bad(format!("delay {k} exceeds 35 years"));
        }
        Ok(())
    }

    /// Hash of everything that defines the experiment; the output location
    /// is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.models.train }
    }
}
