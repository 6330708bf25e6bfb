use admitsim_core::cohort::{generate_cohort, temporal_split, Cohort, GeneratorConfig, Quota, Student};
use admitsim_core::models::{LogregParams, RiskModel, RiskRow, RiskTable, TabularHyper, TabularModel};
use admitsim_core::policy::*;
use admitsim_core::rng::substream;
use admitsim_core::{InputVariant, Result};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn concordance(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut c, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    c += 1.0;
                } else if scores[i] == scores[j] {
                    c += 0.5;
                }
            }
        }
    }
    c / pairs
}

fn row(id: u64, program: u32, score: f64, outcome: bool) -> RiskRow {
    RiskRow {
        student_id: id,
        program_id: program,
        isced_field: (program % 4) as u8,
        quota: if id % 5 == 0 { Quota::Human } else { Quota::Gpa },
        cohort_year: 2017,
        score,
        outcome,
        gpa: score,
        human_rank_decile: Some((id % 10 + 1) as u8),
        female: id % 2 == 0,
        danish_origin: true,
        ses_high: id % 3 == 0,
        planted_probability: None,
    }
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    assert_eq!(auc(&[0.3; 6], &[false, true, false, true, true, false]).unwrap(), 0.5);
    assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
}

#[test]
fn auc_equals_pairwise_concordance() {
    let mut rng = substream(1, "auc");
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 8.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        assert_eq!(auc(&scores, &labels).unwrap(), concordance(&scores, &labels));
    }
}

#[test]
fn delong_agrees_with_the_bootstrap() {
    let mut rng = substream(2, "delong");
    let labels: Vec<bool> = (0..500).map(|_| rng.random_bool(0.4)).collect();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let scores: Vec<f64> = labels.iter().map(|&y| noise.sample(&mut rng) + if y { 0.8 } else { 0.0 }).collect();
    let se = auc_se(&scores, &labels).unwrap();
    let reps: Vec<f64> = (0..2000)
        .filter_map(|_| {
            let idx: Vec<usize> = (0..500).map(|_| rng.random_range(0..500)).collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            auc(&s, &l).ok()
        })
        .collect();
    let m = reps.iter().sum::<f64>() / reps.len() as f64;
    let boot = (reps.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
    assert!((se - boot).abs() / boot < 0.15, "delong {se} bootstrap {boot}");
}

#[test]
fn contraction_curve_limits() {
    let mut rng = substream(3, "curve");
    let perfect = RiskTable {
        rows: (0..1000).map(|i| {
            let y = rng.random_bool(0.7);
            row(i, (i % 5) as u32, if y { 1.0 } else { 0.0 }, y)
        }).collect(),
    };
    let c = contraction_curve(&perfect, Grouping::WithinProgram, 10).unwrap();
    let rates: Vec<f64> = c.bins.iter().map(|b| b.completion_rate).collect();
    assert_eq!(rates[0], 0.0);
    assert_eq!(rates[9], 1.0);
    assert!(rates.windows(2).all(|w| w[0] <= w[1]));

    let null = RiskTable {
        rows: (0..100_000).map(|i| row(i, (i % 50) as u32, rng.random(), rng.random_bool(0.69))).collect(),
    };
    for grouping in [Grouping::WithinProgram, Grouping::Ungrouped, Grouping::PerField] {
        let c = contraction_curve(&null, grouping, 10).unwrap();
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), null.len());
        for b in &c.bins {
            let se = (c.overall_rate * (1.0 - c.overall_rate) / b.count as f64).sqrt();
            assert!((b.completion_rate - c.overall_rate).abs() <= 3.0 * se);
        }
    }
}

#[test]
fn pooling_programs_with_different_base_rates_lowers_the_bottom_bin() {
    // program 0 graduates 30% and program 1 graduates 90%; scores track the
    // program base rate plus within-program noise
    let mut rng = substream(4, "programs");
    let mut rows = Vec::new();
    for i in 0..4000u64 {
        let program = (i % 2) as u32;
        let base = if program == 0 { 0.3 } else { 0.9 };
        let y = rng.random_bool(base);
        rows.push(row(i, program, base + 0.05 * rng.random::<f64>(), y));
    }
    let t = RiskTable { rows };
    let within = contraction_curve(&t, Grouping::WithinProgram, 10).unwrap();
    let pooled = contraction_curve(&t, Grouping::Ungrouped, 10).unwrap();
    assert!(pooled.bins[0].completion_rate <= within.bins[0].completion_rate);
    assert!(within.bins.iter().all(|b| b.count == 400));

    let fields = curves_by_field(&t, 10).unwrap();
    assert_eq!(fields.len(), 2);
    let mut csv = Vec::new();
    within.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 11);
}

fn split() -> (Cohort, Cohort) {
    let cfg = GeneratorConfig { n_students: 6000, first_year: 2010, ..Default::default() };
    temporal_split(&generate_cohort(&cfg, 9).unwrap(), 2017).unwrap()
}

#[test]
fn contraction_counterfactual_examples() {
    let (_, test) = split();
    let planted: Vec<f64> = test.students.iter().map(|s| s.planted_probability).collect();
    let table = RiskTable::from_cohort(&test, &planted).unwrap();

    let r = contraction_counterfactual(&table, BaselineRanking::Gpa, 0.1).unwrap();
    let both = r.block(AdmissionBlock::Both);
    assert!(both.model.graduation_rate < both.baseline.graduation_rate, "{both:?}");
    assert_eq!(both.model.rejected, both.baseline.rejected);
    assert_eq!(both.dropout_reduction, both.baseline.graduates as i64 - both.model.graduates as i64);
    let expected: usize = {
        let mut pools = std::collections::BTreeMap::<(u32, bool), usize>::new();
        for row in &table.rows {
            *pools.entry((row.program_id, row.quota == Quota::Human)).or_default() += 1;
        }
        pools.values().map(|&n| rejection_count(0.1, n)).sum()
    };
    assert_eq!(both.model.rejected, expected);
    assert_eq!(r.block(AdmissionBlock::Gpa).model.rejected + r.block(AdmissionBlock::Human).model.rejected, expected);

    let gpa_as_model = table.with_scores(&table.rows.iter().map(|r| r.gpa / 12.0 + 0.25).collect::<Vec<_>>()).unwrap();
    let same = contraction_counterfactual(&gpa_as_model, BaselineRanking::Gpa, 0.1).unwrap();
    for b in &same.blocks {
        assert_eq!(b.dropout_reduction, 0);
        assert_eq!(b.pp_difference, 0.0);
    }
    assert_eq!(same.rejected_by_model, same.rejected_by_baseline);

    let all = contraction_counterfactual(&table, BaselineRanking::Gpa, 1.0).unwrap();
    let graduates = table.rows.iter().filter(|r| r.outcome).count();
    assert_eq!(all.block(AdmissionBlock::Both).model.rejected, table.len());
    assert_eq!(all.block(AdmissionBlock::Both).model.graduates, graduates);

    assert!(contraction_counterfactual(&table, BaselineRanking::Gpa, 0.0).is_err());
    assert!(contraction_counterfactual(&table, BaselineRanking::Gpa, 1.5).is_err());
    let human = contraction_counterfactual(&table.filter(|r| r.quota == Quota::Human), BaselineRanking::HumanDecile, 0.1);
    assert!(human.is_ok());
}

#[test]
fn correlation_examples() {
    let mut rng = substream(5, "corr");
    let x: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    let cubed: Vec<f64> = x.iter().map(|v| (4.0 * v).exp()).collect();
    assert!((spearman(&x, &cubed).unwrap() - 1.0).abs() < 1e-12);
    assert!(pearson(&x, &cubed).unwrap() < 1.0 - 1e-3);

    let n = Normal::new(0.0, 1.0).unwrap();
    let a: Vec<f64> = (0..10_000).map(|_| n.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..10_000).map(|_| n.sample(&mut rng)).collect();
    assert!(pearson(&a, &b).unwrap().abs() < 0.05);
    assert!(spearman(&a, &b).unwrap().abs() < 0.05);
    assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());

    let t = RiskTable { rows: (0..300).map(|i| row(i, (i % 3) as u32, x[i as usize % 100], true)).collect() };
    let other: Vec<f64> = t.rows.iter().map(|r| r.score * 2.0 + 1.0).collect();
    let w = within_program_rank_corr(&t, &other).unwrap();
    assert!((w.weighted_mean - 1.0).abs() < 1e-12);
    assert_eq!(w.programs.len(), 3);
}

/// Scores depend on GPA only.
struct GpaOnly;

impl RiskModel for GpaOnly {
    fn name(&self) -> &str {
        "gpa-only"
    }

    fn predict(&self, _: &Cohort, students: &[Student]) -> Result<Vec<f64>> {
        Ok(students.iter().map(|s| 1.0 / (1.0 + (-0.3 * (s.gpa - 6.0)).exp())).collect())
    }
}

#[test]
fn counterfactual_predictions() {
    let (train, test) = split();
    let model = TabularModel::fit(&train, InputVariant::Academic, TabularHyper::Logreg(LogregParams { c: 10.0, ..Default::default() }), 1).unwrap();
    let students = &test.students[..300];
    let standard = model.predict(&test, students).unwrap();
    for (s, p) in students.iter().zip(&standard).take(50) {
        assert_eq!(counterfactual_predict(&model, &test, s, s.enrolled_program).unwrap(), *p);
    }
    let programs: Vec<u32> = test.programs.iter().map(|p| p.program_id).collect();
    let flat = counterfactual_table(&GpaOnly, &test, &students[..20], &programs).unwrap();
    for chunk in flat.chunks(programs.len()) {
        assert!(chunk.iter().all(|r| r.p == chunk[0].p));
    }

    // the programs with the largest and smallest planted effects
    let effects = &test.planted.program_effects;
    let best = (0..effects.len()).max_by(|&a, &b| effects[a].total_cmp(&effects[b])).unwrap() as u32;
    let worst = (0..effects.len()).min_by(|&a, &b| effects[a].total_cmp(&effects[b])).unwrap() as u32;
    let rows = counterfactual_table(&model, &test, students, &[best, worst]).unwrap();
    let agree = rows.chunks(2).filter(|c| c[0].p > c[1].p).count();
    assert!(agree as f64 >= 0.9 * students.len() as f64, "{agree} of {}", students.len());
}

fn grid(students: u64, programs: u32, mut p: impl FnMut(u64, u32, u8, u8) -> f64) -> Vec<CounterfactualRow> {
    let mut out = Vec::new();
    for i in 0..students {
        let observed = (i % 4) as u8;
        for j in 0..programs {
            let field = (j % 4) as u8;
            out.push(CounterfactualRow { student_id: i, program_id: j, observed_field: observed, field, p: p(i, j, observed, field) });
        }
    }
    out
}

#[test]
fn fixed_effects_recover_planted_structure() {
    let gamma = |i: u64| ((i * 37 % 101) as f64 - 50.0) / 400.0;
    let delta = |j: u32| ((j * 13 % 17) as f64 - 8.0) / 100.0;
    let exact = grid(300, 12, |i, j, _, _| 0.6 + gamma(i) + delta(j));
    let fit = fit_two_way_fe(&exact, FeSpec::Both).unwrap();
    assert!(fit.residuals.iter().all(|e| e.abs() < 1e-9));
    let d0 = fit.program_effects[&0] - delta(0);
    for (&j, &d) in &fit.program_effects {
        assert!((d - delta(j) - d0).abs() < 1e-9);
    }

    let program_only = grid(200, 10, |_, j, _, _| 0.5 + delta(j));
    let fit = fit_two_way_fe(&program_only, FeSpec::StudentOnly).unwrap();
    let by_program = fit.mean_residual_by_program(&program_only);
    let shift = by_program[&0] - delta(0);
    for (&j, &m) in &by_program {
        assert!((m - delta(j) - shift).abs() < 1e-9);
    }

    let mut rng = substream(6, "fe");
    let noise = Normal::new(0.0, 0.05).unwrap();
    let noisy = grid(5000, 20, |i, j, o, f| 0.6 + gamma(i) + delta(j) + if o == f { 0.006 } else { 0.0 } + noise.sample(&mut rng));
    let fit = fit_two_way_fe(&noisy, FeSpec::BothSameField).unwrap();
    let b = fit.beta.unwrap();
    assert!((b.estimate - 0.006).abs() <= 2.0 * b.se, "{b:?}");
    assert!(b.se > 0.0 && b.se < 0.002);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn auc_is_invariant_to_monotone_transforms(seed in 0u64..100_000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let mut rng = substream(seed, "mono");
        let n = rng.random_range(4..80);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 20.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let moved: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&moved, &labels).unwrap());
    }

    #[test]
    fn bin_means_average_to_the_overall_rate(seed in 0u64..100_000, n in 20usize..600, programs in 1u32..8) {
        let mut rng = substream(seed, "bins");
        let t = RiskTable { rows: (0..n as u64).map(|i| row(i, rng.random_range(0..programs), rng.random(), rng.random_bool(0.6))).collect() };
        for grouping in [Grouping::WithinProgram, Grouping::Ungrouped, Grouping::PerField] {
            let c = contraction_curve(&t, grouping, 10).unwrap();
            prop_assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), n);
            let pooled: f64 = c.bins.iter().filter(|b| b.count > 0).map(|b| b.completion_rate * b.count as f64).sum::<f64>() / n as f64;
            prop_assert!((pooled - c.overall_rate).abs() < 1e-12);
        }
    }

    #[test]
    fn fe_residuals_have_zero_group_means(seed in 0u64..100_000) {
        let mut rng = substream(seed, "fe-prop");
        let students = rng.random_range(3..40u64);
        let programs = rng.random_range(2..9u32);
        let mut rows = grid(students, programs, |_, _, _, _| rng.random());
        // drop some cells, keeping at least two per student
        let mut k = 0;
        rows.retain(|r| { k += 1; r.program_id < 2 || k % 3 != 0 });
        for spec in FeSpec::ALL {
            let fit = fit_two_way_fe(&rows, spec).unwrap();
            let mut by_student = std::collections::BTreeMap::<u64, f64>::new();
            let mut by_program = std::collections::BTreeMap::<u32, f64>::new();
            for (r, e) in rows.iter().zip(&fit.residuals) {
                *by_student.entry(r.student_id).or_default() += e;
                *by_program.entry(r.program_id).or_default() += e;
            }
            if spec != FeSpec::ProgramOnly {
                prop_assert!(by_student.values().all(|s| s.abs() < 1e-8), "{:?}", spec);
            }
            if spec != FeSpec::StudentOnly {
                prop_assert!(by_program.values().all(|s| s.abs() < 1e-8), "{:?}", spec);
            }
        }
    }
}
