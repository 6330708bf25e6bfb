use admitsim_core::cohort::*;
use admitsim_core::matching::Quota;
use admitsim_core::rng::substream;
use admitsim_core::Error;
use proptest::prelude::*;

fn cohort(n: usize, first_year: i32, seed: u64) -> Cohort {
    let cfg = GeneratorConfig { n_students: n, first_year, ..Default::default() };
    generate_cohort(&cfg, seed).unwrap()
}

#[test]
fn training_years_hit_the_graduation_target() {
    let c = cohort(20_000, 2006, 3);
    let (train, _) = temporal_split(&c, 2017).unwrap();
    let rate = train.completion_rate();
    assert!((rate - 0.69).abs() <= 0.02, "completion rate {rate}");
}

#[test]
fn outcomes_follow_the_planted_model_by_gpa_decile() {
    let c = cohort(20_000, 2006, 4);
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c.students[a].gpa.total_cmp(&c.students[b].gpa));
    for decile in order.chunks(c.len().div_ceil(10)) {
        let n = decile.len() as f64;
        let observed = decile.iter().filter(|&&i| c.students[i].completed).count() as f64 / n;
        let planted: f64 = decile.iter().map(|&i| c.students[i].planted_probability).sum::<f64>() / n;
        let se = (planted * (1.0 - planted) / n).sqrt();
        assert!((observed - planted).abs() <= 3.0 * se, "observed {observed} planted {planted} se {se}");
    }
}

#[test]
fn generated_students_satisfy_the_record_invariants() {
    let c = cohort(3000, 2010, 5);
    for s in &c.students {
        s.validate().unwrap();
        for a in s.applications() {
            assert!(a.human_rank_decile.is_none() || a.quota2_opt_in);
            assert!(a.isced_field < 11);
        }
        let e = s.enrollment().unwrap();
        assert_eq!(e.program_id, s.enrolled_program);
        assert!(e.year <= s.cohort_year);
        if s.admission_quota == Quota::Human {
            assert!(s.applications().any(|a| a.program_id == s.enrolled_program && a.quota2_opt_in));
        }
        assert!((0.0..1.0).contains(&s.planted_probability) && s.planted_probability > 0.0);
        assert!(s.grades().all(|g| GRADE_SCALE.contains(&g.grade)));
    }
    for p in &c.programs {
        assert!(p.seats_q1 + p.seats_q2 >= 1);
    }
    let high = c.students.iter().filter(|s| s.sociodemo.ses_high).count();
    assert!(high.abs_diff(c.len() / 2) <= 1);
}

#[test]
fn cohort_files_round_trip_and_report_bad_lines() {
    let c = cohort(300, 2014, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.jsonl");
    save_cohort(&c, &path).unwrap();
    assert_eq!(load_cohort(&path).unwrap(), c);

    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some(COHORT_HEADER));
    let mut lines: Vec<&str> = text.lines().collect();
    lines[5] = "{\"kind\": \"student\", \"id\": ";
    std::fs::write(&path, lines.join("\n")).unwrap();
    match load_cohort(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected a parse error, got {other:?}"),
    }
    std::fs::write(&path, "").unwrap();
    assert!(load_cohort(&path).unwrap().is_empty());
    assert!(load_cohort(&dir.path().join("missing")).is_err());
}

#[test]
fn temporal_split_requires_the_holdout_year() {
    let c = cohort(400, 2015, 7);
    let (train, test) = temporal_split(&c, 2017).unwrap();
    assert_eq!(train.len() + test.len(), c.len());
    assert!(train.students.iter().all(|s| s.cohort_year < 2017));
    assert!(temporal_split(&c, 2020).is_err());
    assert!(temporal_split(&c, 2015).is_err());
}

#[test]
fn validation_split_falls_back_when_a_year_is_tiny() {
    let c = cohort(200, 2015, 8);
    let (train, _) = temporal_split(&c, 2017).unwrap();
    let keep: Vec<Student> = train
        .students
        .iter()
        .filter(|s| s.cohort_year == 2016)
        .chain(train.students.iter().filter(|s| s.cohort_year == 2015).take(1))
        .cloned()
        .collect();
    let odd = train.with_students(keep);
    let (fit, val) = validation_split(&odd, 0.1, &mut substream(1, "v")).unwrap();
    assert_eq!(fit.len() + val.len(), odd.len());
    assert_eq!(val.len(), (0.1 * odd.len() as f64).round() as usize);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn serialization_is_the_identity(seed in 0u64..10_000, n in 0usize..60) {
        let c = cohort(n, 2015, seed);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        prop_assert_eq!(Cohort::read_from(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn validation_share_is_per_year(seed in 0u64..10_000, fraction in 0.02f64..0.5) {
        let c = cohort(400, 2012, seed % 7);
        let (fit, val) = validation_split(&c, fraction, &mut substream(seed, "v")).unwrap();
        prop_assert_eq!(fit.len() + val.len(), c.len());
        for y in c.years() {
            let count = c.students.iter().filter(|s| s.cohort_year == y).count() as f64;
            let v = val.students.iter().filter(|s| s.cohort_year == y).count() as f64;
            prop_assert!((v - fraction * count).abs() <= 1.0);
        }
    }
}
