use admitsim_autograd::Real;
use admitsim_core::explain::{saliency_profile, SaliencyMap};
use admitsim_core::models::{
    random_search_cv, GpaRanking, OrdinalEncoding, RiskModel, SequenceModel, TabularFamily, TabularHyper, TabularModel,
    TabularSchema, TrainingHistory,
};
use admitsim_core::{Error, InputVariant};
use log::info;
use rayon::prelude::*;

use super::load_split;
use crate::artifacts::{model_dir, predictions, Run, COHORT};
use crate::config::{model_name, ModelFamily, Precision};
use crate::error::{CliError, Result};

const TABULAR_FILE: &str = "model.json";
const SEARCH_FILE: &str = "search.csv";
const HISTORY_FILE: &str = "history.csv";

/// A trained model as loaded from its directory.
pub enum LoadedModel {
    Tabular(TabularModel),
    Seq32(SequenceModel<f32>),
    Seq64(SequenceModel<f64>),
}

impl LoadedModel {
    pub fn load(run: &Run, name: &str) -> Result<Self> {
        let dir = run.require(&model_dir(name), "train")?;
        let meta = dir.join("model.json");
        let text = std::fs::read_to_string(&meta).map_err(|e| crate::artifacts::io_err(&meta, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("precision_bytes").and_then(|v| v.as_u64()) {
            None => Ok(LoadedModel::Tabular(TabularModel::load(&meta)?)),
            Some(4) => Ok(LoadedModel::Seq32(SequenceModel::load(&dir)?)),
            Some(8) => Ok(LoadedModel::Seq64(SequenceModel::load(&dir)?)),
            Some(b) => Err(Error::Input(format!("{name}: unsupported {b}-byte weights")).into()),
        }
    }

    pub fn as_risk(&self) -> &dyn RiskModel {
        match self {
            LoadedModel::Tabular(m) => m,
            LoadedModel::Seq32(m) => m,
            LoadedModel::Seq64(m) => m,
        }
    }
}

fn write_history(run: &Run, rel: &str, h: &TrainingHistory) -> Result<String> {
    run.write_with(rel, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_loss", "val_loss", "val_auc", "kept"])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for e in &h.epochs {
            out.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                opt(e.val_loss),
                opt(e.val_auc),
                (e.epoch == h.best_epoch).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    })
}

fn train_one(run: &Run, family: ModelFamily, variant: InputVariant, train: &admitsim_core::cohort::Cohort) -> Result<Vec<String>> {
    let cfg = &run.config;
    let name = model_name(family, variant);
    let dir = model_dir(&name);
    let mut outputs = Vec::new();
    info!("training {name} on {} students", train.len());
    match family {
        ModelFamily::Logreg | ModelFamily::Gbt => {
            let search = &cfg.models.search;
            let hyper = if search.n_candidates == 0 {
                match family {
                    ModelFamily::Logreg => TabularHyper::Logreg(search.logreg),
                    _ => TabularHyper::Gbt(search.gbt),
                }
            } else {
                let (tf, ordinal) = match family {
                    ModelFamily::Logreg => (TabularFamily::Logreg, OrdinalEncoding::OneHot),
                    _ => (TabularFamily::Gbt, OrdinalEncoding::Numeric),
                };
                let schema = TabularSchema::fit(train, variant, ordinal)?;
                let x = schema.transform(train, &train.students);
                let y: Vec<bool> = train.students.iter().map(|s| s.completed).collect();
                let result = random_search_cv(tf, &search.space, &x, &y, search.n_candidates, search.k_folds, cfg.seed)?;
                outputs.push(run.write_with(&format!("{dir}/{SEARCH_FILE}"), |w| Ok(result.write_csv(w)?))?);
                result.best_hyper()
            };
            let model = TabularModel::fit(train, variant, hyper, cfg.seed)?;
            let rel = format!("{dir}/{TABULAR_FILE}");
            model.save(&run.prepare(&rel)?)?;
            outputs.push(rel);
        }
        ModelFamily::Transformer | ModelFamily::Lstm => {
            let arch = cfg.models.arch(family).expect("sequence family");
            let tc = cfg.train_config();
            let path = run.path(&dir);
            let history = match cfg.models.precision {
                Precision::F32 => {
                    let m = SequenceModel::<f32>::fit(train, variant, arch, &tc, cfg.encoding.min_count)?;
                    m.save(&path)?;
                    m.history
                }
                Precision::F64 => {
                    let m = SequenceModel::<f64>::fit(train, variant, arch, &tc, cfg.encoding.min_count)?;
                    m.save(&path)?;
                    m.history
                }
            };
            write_history(run, &format!("{dir}/{HISTORY_FILE}"), &history)?;
            outputs.extend(run.files_under(&dir)?);
        }
    }
    Ok(outputs)
}

pub fn train(run: &Run, only: &[String]) -> Result<()> {
    let grid = run.config.models.grid();
    let known: Vec<String> = grid.iter().map(|&(f, v)| model_name(f, v)).collect();
    if let Some(bad) = only.iter().find(|n| !known.contains(n)) {
        return Err(CliError::Config(format!("model {bad} is not configured (known: {})", known.join(", "))));
    }
    let (_, train, _) = load_split(run)?;
    let jobs: Vec<_> = grid.into_iter().filter(|&(f, v)| only.is_empty() || only.contains(&model_name(f, v))).collect();
    for &(f, v) in &jobs {
        let dir = run.path(&model_dir(&model_name(f, v)));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| crate::artifacts::io_err(&dir, e))?;
        }
    }
    let outputs = jobs
        .par_iter()
        .map(|&(f, v)| train_one(run, f, v, &train))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<String> = outputs.into_iter().flatten().collect();
    run.finish("train", &[COHORT.to_string()], &outputs)
}

/// Names of every configured model plus the GPA ranking.
pub fn scored_names(run: &Run) -> Vec<String> {
    let mut names = vec!["gpa".to_string()];
    names.extend(run.config.models.grid().into_iter().map(|(f, v)| model_name(f, v)));
    names
}

pub fn predict(run: &Run) -> Result<()> {
    let (_, _, test) = load_split(run)?;
    let names: Vec<String> = run.config.models.grid().into_iter().map(|(f, v)| model_name(f, v)).collect();
    let mut inputs = vec![COHORT.to_string()];
    for n in &names {
        run.require(&model_dir(n), "train")?;
        inputs.extend(run.files_under(&model_dir(n))?);
    }
    let gpa = GpaRanking.risk_table(&test, &test.students)?;
    let gpa_rel = predictions("gpa");
    gpa.save(&run.prepare(&gpa_rel)?)?;
    let mut outputs = vec![gpa_rel];
    let written = names
        .par_iter()
        .map(|n| -> Result<String> {
            let model = LoadedModel::load(run, n)?;
            let table = model.as_risk().risk_table(&test, &test.students)?;
            let rel = predictions(n);
            table.save(&run.prepare(&rel)?)?;
            info!("{n}: {} predictions", table.len());
            Ok(rel)
        })
        .collect::<Result<Vec<_>>>()?;
    outputs.extend(written);
    run.finish("predict", &inputs, &outputs)
}

fn explain_with<F: Real>(
    run: &Run,
    name: &str,
    model: &SequenceModel<F>,
    test: &admitsim_core::cohort::Cohort,
    n: usize,
) -> Result<Vec<String>> {
    let batch = model.encoder.encode(test, &test.students)?;
    let (maps, profile) = saliency_profile(&model.net, &batch, n)?;
    let events = run.write_with(&format!("explain/{name}_events.csv"), |w| {
        Ok(SaliencyMap::write_csv(&maps, Some(&model.encoder.vocab), w)?)
    })?;
    let prof = run.write_with(&format!("explain/{name}_profile.csv"), |w| Ok(profile.write_csv(w)?))?;
    Ok(vec![events, prof])
}

pub fn explain(run: &Run, model: Option<&str>, n: Option<usize>) -> Result<()> {
    let cfg = &run.config;
    let name = match model {
        Some(m) => m.to_string(),
        None => {
            let variant = cfg.explain.variant.unwrap_or(cfg.models.variants[0]);
            model_name(cfg.explain.family, variant)
        }
    };
    let n = n.unwrap_or(cfg.explain.n_sequences);
    let (_, _, test) = load_split(run)?;
    let loaded = LoadedModel::load(run, &name)?;
    let outputs = match &loaded {
        LoadedModel::Tabular(_) => return Err(CliError::Config(format!("{name} is not a sequence model"))),
        LoadedModel::Seq32(m) => explain_with(run, &name, m, &test, n)?,
        LoadedModel::Seq64(m) => explain_with(run, &name, m, &test, n)?,
    };
    let mut inputs = vec![COHORT.to_string()];
    inputs.extend(run.files_under(&model_dir(&name))?);
    run.finish("explain", &inputs, &outputs)
}
