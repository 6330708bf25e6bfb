use std::collections::BTreeMap;

use admitsim_core::econ::{evaluate_scenario, override_cost, scenario_grid, write_grid_csv, DiscountSchedule, Scenario};
use admitsim_core::fairness::{audit, weighted_abroca, write_verdicts_csv, Attribute};
use admitsim_core::matching::Quota;
use admitsim_core::models::RiskTable;
use admitsim_core::policy::{
    auc_with_se, contraction_counterfactual, contraction_curve, spearman, within_program_rank_corr, AdmissionBlock,
    BaselineRanking, Grouping,
};
use log::{info, warn};

use super::load_predictions;
use super::modelling::scored_names;
use crate::artifacts::{
    predictions, Run, ABROCA, AUC, CORRELATION, COUNTERFACTUAL, CURVES, ECON_GRID, ECON_SUMMARY, FAIRNESS_TESTS,
};
use crate::config::model_name;
use crate::error::{CliError, Result};

const GPA: &str = "gpa";

fn model_names(run: &Run) -> Vec<String> {
    run.config.models.grid().into_iter().map(|(f, v)| model_name(f, v)).collect()
}

fn prediction_inputs(names: &[String]) -> Vec<String> {
    names.iter().map(|n| predictions(n)).collect()
}

fn baseline_name(b: BaselineRanking) -> &'static str {
    match b {
        BaselineRanking::Gpa => "gpa",
        BaselineRanking::HumanDecile => "human_decile",
        BaselineRanking::AdmissionRule => "admission_rule",
    }
}

fn block_name(b: AdmissionBlock) -> &'static str {
    match b {
        AdmissionBlock::Gpa => "gpa",
        AdmissionBlock::Human => "human",
        AdmissionBlock::Both => "both",
    }
}

fn grouping_name(g: Grouping) -> &'static str {
    match g {
        Grouping::WithinProgram => "within_program",
        Grouping::Ungrouped => "ungrouped",
        Grouping::PerField => "per_field",
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".to_string()
    }
}

pub fn evaluate(run: &Run) -> Result<()> {
    let grid = run.config.models.grid();
    let names = scored_names(run);
    let gpa = load_predictions(run, GPA)?;
    let gpa_scores = gpa.scores();
    let mut auc_rows = Vec::new();
    let mut corr_rows = Vec::new();

    let mut add = |name: &str, family: &str, variant: &str, table: &RiskTable| -> Result<()> {
        let est = auc_with_se(&table.scores(), &table.outcomes())?;
        info!("{name}: AUC {:.4} ({:.4})", est.auc, est.se);
        auc_rows.push([name.into(), family.into(), variant.into(), est.n.to_string(), fmt(est.auc), fmt(est.se)]);
        Ok(())
    };
    add(GPA, GPA, "NA", &gpa)?;
    for &(f, v) in &grid {
        let name = model_name(f, v);
        let table = load_predictions(run, &name)?;
        if table.rows.iter().zip(&gpa.rows).any(|(a, b)| a.student_id != b.student_id) {
            return Err(CliError::Config(format!("{name} and gpa predictions cover different students")));
        }
        add(&name, f.name(), v.name(), &table)?;
        let rho = spearman(&table.scores(), &gpa_scores)?;
        let within = within_program_rank_corr(&table, &gpa_scores)?;
        corr_rows.push([name, GPA.to_string(), fmt(rho), fmt(within.weighted_mean), within.programs.len().to_string()]);
    }
    // Quota-2 admits also carry a human ranking.
    let human = gpa.filter(|r| r.quota == Quota::Human && r.human_rank_decile.is_some());
    if human.is_empty() {
        warn!("no quota-2 admits with a human ranking in the test years");
    } else {
        let deciles: Vec<f64> = human.rows.iter().map(|r| r.human_rank_decile.map_or(0.0, f64::from)).collect();
        let est = auc_with_se(&deciles, &human.outcomes())?;
        auc_rows.push([
            "human_decile".into(),
            "human".into(),
            "NA".into(),
            est.n.to_string(),
            fmt(est.auc),
            fmt(est.se),
        ]);
    }

    let auc = run.write_with(AUC, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "family", "variant", "n", "auc", "se"])?;
        for r in &auc_rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    })?;
    let corr = run.write_with(CORRELATION, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "other", "spearman", "within_program_weighted", "programs"])?;
        for r in &corr_rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    })?;
    run.finish("evaluate", &prediction_inputs(&names), &[auc, corr])
}

pub fn contract(run: &Run) -> Result<()> {
    let cfg = &run.config.evaluation;
    let names = scored_names(run);
    let tables = names.iter().map(|n| Ok((n.clone(), load_predictions(run, n)?))).collect::<Result<Vec<_>>>()?;

    let curves = run.write_with(CURVES, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "grouping", "bin", "count", "completion_rate"])?;
        for (name, table) in &tables {
            for g in [Grouping::WithinProgram, Grouping::Ungrouped, Grouping::PerField] {
                let curve = contraction_curve(table, g, cfg.n_bins)?;
                for b in &curve.bins {
                    out.write_record([
                        name.as_str(),
                        grouping_name(g),
                        &b.bin.to_string(),
                        &b.count.to_string(),
                        &fmt(b.completion_rate),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    })?;

    let counterfactual = run.write_with(COUNTERFACTUAL, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "model",
            "baseline",
            "fraction",
            "block",
            "rejected_model",
            "graduates_model",
            "rate_model",
            "rejected_baseline",
            "graduates_baseline",
            "rate_baseline",
            "dropout_reduction",
            "pp_difference",
        ])?;
        for (name, table) in tables.iter().filter(|(n, _)| n != GPA) {
            for baseline in [BaselineRanking::Gpa, BaselineRanking::AdmissionRule] {
                let report = contraction_counterfactual(table, baseline, cfg.fraction)?;
                for b in &report.blocks {
                    out.write_record([
                        name.clone(),
                        baseline_name(baseline).to_string(),
                        cfg.fraction.to_string(),
                        block_name(b.block).to_string(),
                        b.model.rejected.to_string(),
                        b.model.graduates.to_string(),
                        fmt(b.model.graduation_rate),
                        b.baseline.rejected.to_string(),
                        b.baseline.graduates.to_string(),
                        fmt(b.baseline.graduation_rate),
                        b.dropout_reduction.to_string(),
                        fmt(b.pp_difference),
                    ])?;
                }
                let both = report.block(AdmissionBlock::Both);
                info!("{name} vs {}: {} fewer graduates rejected", baseline_name(baseline), both.dropout_reduction);
            }
        }
        out.flush()?;
        Ok(())
    })?;
    run.finish("contract", &prediction_inputs(&names), &[curves, counterfactual])
}

/// Comma-separated attribute names, e.g. "native,female".
pub fn parse_attributes(list: &str) -> Result<Vec<Attribute>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Attribute>().map_err(CliError::from))
        .collect()
}

pub fn audit_fairness(run: &Run, attributes: Option<&str>) -> Result<()> {
    let attributes = match attributes {
        Some(list) => parse_attributes(list)?,
        None => run.config.fairness.attributes.clone(),
    };
    if attributes.is_empty() {
        return Err(CliError::Config("no attributes to audit".into()));
    }
    let names = scored_names(run);
    let mut abroca_rows = Vec::new();
    let mut verdicts = Vec::new();
    for name in &names {
        let table = load_predictions(run, name)?;
        for &a in &attributes {
            match weighted_abroca(&table, a) {
                Ok(w) => abroca_rows.push([
                    name.clone(),
                    a.name().to_string(),
                    fmt(w.value),
                    fmt(w.se),
                    w.programs.len().to_string(),
                    w.skipped.len().to_string(),
                ]),
                Err(e) => {
                    warn!("{name}/{}: ABROCA undefined: {e}", a.name());
                    abroca_rows.push([name.clone(), a.name().to_string(), "NA".into(), "NA".into(), "0".into(), "NA".into()]);
                }
            }
            if name != GPA {
                for v in audit(&table, a, run.config.fairness.threshold)? {
                    verdicts.push((name.clone(), v));
                }
            }
        }
    }
    let abroca = run.write_with(ABROCA, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "attribute", "value", "se", "programs", "skipped"])?;
        for r in &abroca_rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    })?;
    let tests = run.write_with(FAIRNESS_TESTS, |w| Ok(write_verdicts_csv(&verdicts, w)?))?;
    run.finish("audit-fairness", &prediction_inputs(&names), &[abroca, tests])
}

/// Command-line values that take precedence over the configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct EconOverrides {
    pub revenue: Option<f64>,
    pub fixed: Option<f64>,
    pub var: Option<f64>,
    pub delay: Option<u32>,
}

/// Graduates saved by the model over the baseline, both quotas together.
fn graduates_saved(run: &Run, model: &str, baseline: BaselineRanking) -> Result<f64> {
    let path = run.require(COUNTERFACTUAL, "contract")?;
    let mut reader = csv::Reader::from_path(&path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{} lacks column {name}", path.display())))
    };
    let (m, b, blk, red) = (col("model")?, col("baseline")?, col("block")?, col("dropout_reduction")?);
    for rec in reader.records() {
        let rec = rec?;
        if &rec[m] == model && &rec[b] == baseline_name(baseline) && &rec[blk] == "both" {
            return rec[red]
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad dropout_reduction {:?}: {e}", &rec[red])));
        }
    }
    Err(CliError::Config(format!(
        "no counterfactual row for model {model} against {}",
        baseline_name(baseline)
    )))
}

pub fn econ(run: &Run, overrides: EconOverrides) -> Result<()> {
    let cfg = &run.config.econ;
    let schedule = DiscountSchedule::ministry();
    let mut inputs = Vec::new();
    let revenue = overrides.revenue.or(cfg.revenue);
    let explicit_var = overrides.var.or(cfg.var_cost);
    let needs_contraction = revenue.is_none() || explicit_var.is_none();
    let saved = if needs_contraction {
        let model = match &cfg.model {
            Some(m) => m.clone(),
            None => model_names(run)
                .into_iter()
                .next()
                .ok_or_else(|| CliError::Config("no models configured".into()))?,
        };
        inputs.push(COUNTERFACTUAL.to_string());
        let saved = graduates_saved(run, &model, cfg.baseline)?;
        info!("{model}: {saved} graduates saved per year against {}", baseline_name(cfg.baseline));
        Some(saved.max(0.0))
    } else {
        None
    };
    let revenue = match revenue {
        Some(r) => r,
        None => saved.unwrap_or(0.0) * cfg.per_graduate,
    };
    let var_cost = match explicit_var {
        Some(v) => v,
        None => cfg.operational_cost + override_cost(saved.unwrap_or(0.0), cfg.override_rate, cfg.per_graduate)?,
    };
    let scenario = Scenario {
        revenue,
        fixed_cost: overrides.fixed.unwrap_or(cfg.fixed_cost),
        var_cost,
        delay: overrides.delay.unwrap_or(cfg.delay),
    };
    let benefit = saved.unwrap_or_else(|| revenue / cfg.per_graduate);
    let result = evaluate_scenario(&scenario, benefit, &schedule)?;

    let mut summary: BTreeMap<&str, String> = BTreeMap::new();
    summary.insert("revenue", scenario.revenue.to_string());
    summary.insert("fixed_cost", scenario.fixed_cost.to_string());
    summary.insert("var_cost", scenario.var_cost.to_string());
    summary.insert("delay", scenario.delay.to_string());
    summary.insert("graduates", benefit.to_string());
    summary.insert("revenue_pv", result.adjusted_pv.to_string());
    summary.insert("net_revenue", result.net_revenue.to_string());
    summary.insert("mvpf", result.mvpf.to_string());
    let summary = run.write_with(ECON_SUMMARY, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["quantity", "value"])?;
        for (k, v) in &summary {
            out.write_record([k, v.as_str()])?;
        }
        out.flush()?;
        Ok(())
    })?;

    let cells = scenario_grid(&cfg.grid_fixed, &cfg.grid_var, &cfg.grid_delays, scenario.revenue, &schedule)?;
    let feasible = cells.iter().filter(|c| c.feasible).count();
    info!("{feasible} of {} grid scenarios break even", cells.len());
    let grid = run.write_with(ECON_GRID, |w| Ok(write_grid_csv(&cells, w)?))?;
    run.finish("econ", &inputs, &[summary, grid])
}

fn read_rows(run: &Run, rel: &str, producer: &'static str) -> Result<Vec<BTreeMap<String, String>>> {
    let path = run.require(rel, producer)?;
    let mut reader = csv::Reader::from_path(&path)?;
    Ok(reader.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn report(run: &Run) -> Result<()> {
    let sources: [(&str, &'static str); 6] = [
        (AUC, "evaluate"),
        (COUNTERFACTUAL, "contract"),
        (CURVES, "contract"),
        (ABROCA, "audit-fairness"),
        (FAIRNESS_TESTS, "audit-fairness"),
        (ECON_GRID, "econ"),
    ];
    for (rel, producer) in sources {
        run.require(rel, producer)?;
    }
    let auc = read_rows(run, AUC, "evaluate")?;
    let mut families: Vec<String> = Vec::new();
    let mut variants: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), String> = BTreeMap::new();
    for row in &auc {
        let (f, v) = (row["family"].clone(), row["variant"].clone());
        let pct = |s: &str| s.parse::<f64>().map_or_else(|_| "NA".to_string(), |x| format!("{:.1}", 100.0 * x));
        if !families.contains(&f) {
            families.push(f.clone());
        }
        if v != "NA" && !variants.contains(&v) {
            variants.push(v.clone());
        }
        cells.insert((f, v), format!("{} ({})", pct(&row["auc"]), pct(&row["se"])));
    }
    // Baselines do not depend on the input variant.
    let lookup = |f: &String, v: &String| cells.get(&(f.clone(), v.clone())).or_else(|| cells.get(&(f.clone(), "NA".into())));
    let mut outputs = vec![run.write_with("report/auc_grid.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["family".to_string()];
        header.extend(variants.iter().cloned());
        out.write_record(&header)?;
        for f in &families {
            let mut rec = vec![f.clone()];
            for v in &variants {
                rec.push(lookup(f, v).cloned().unwrap_or_default());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    })?];
    for (rel, _) in sources {
        let name = rel.replace('/', "_");
        let target = format!("report/{name}");
        let to = run.prepare(&target)?;
        let from = run.path(rel);
        std::fs::copy(&from, &to).map_err(|e| crate::artifacts::io_err(&from, e))?;
        outputs.push(target);
    }
    let inputs: Vec<String> = sources.iter().map(|(r, _)| r.to_string()).collect();
    run.finish("report", &inputs, &outputs)
}
