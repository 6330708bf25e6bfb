use admitsim_core::matching::*;
use admitsim_core::rng::substream;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_instance<R: Rng>(rng: &mut R, max_students: usize, max_programs: usize) -> MatchInstance {
    let np = rng.random_range(1..=max_programs);
    let programs = (0..np)
        .map(|_| ProgramSeats { seats_q1: rng.random_range(0..=3), seats_q2: rng.random_range(0..=2) })
        .collect();
    let n = rng.random_range(0..=max_students);
    let applicants = (0..n)
        .map(|_| {
            let mut order: Vec<usize> = (0..np).collect();
            order.shuffle(rng);
            order.truncate(rng.random_range(0..=np.min(MAX_PREFERENCES)));
            Applicant {
                // coarse grades so that GPA ties occur
                gpa: f64::from(rng.random_range(0..8u8)) * 1.5,
                preferences: order
                    .into_iter()
                    .map(|p| Preference {
                        program: p,
                        q2_priority: rng.random_bool(0.4).then(|| f64::from(rng.random_range(1..=10u8))),
                    })
                    .collect(),
            }
        })
        .collect();
    MatchInstance { programs, applicants }
}

#[test]
fn random_instances_are_stable_and_within_capacity() {
    let mut rng = substream(1, "matching");
    for _ in 0..1000 {
        let inst = random_instance(&mut rng, 30, 6);
        let out = david_q_match(&inst).unwrap();
        assert!(check_capacity(&inst, &out));
        assert_eq!(check_stability(&inst, &out), vec![]);
        for (s, seat) in out.assignment.iter().enumerate() {
            if let Some(seat) = seat {
                let pref = inst.applicants[s].preferences.iter().find(|p| p.program == seat.program).unwrap();
                if seat.quota == Quota::Human {
                    assert!(pref.q2_priority.is_some());
                }
            }
        }
    }
}

#[test]
fn small_exhaustive_families_admit_no_profitable_misreport() {
    let configs: [&[ProgramSeats]; 3] = [
        &[ProgramSeats { seats_q1: 1, seats_q2: 0 }, ProgramSeats { seats_q1: 1, seats_q2: 0 }],
        &[ProgramSeats { seats_q1: 1, seats_q2: 1 }, ProgramSeats { seats_q1: 0, seats_q2: 1 }],
        &[ProgramSeats { seats_q1: 1, seats_q2: 1 }],
    ];
    for seats in configs {
        for n in 1..=3 {
            let family = exhaustive_family(n, seats, |s, p| (s + p) % 2 == 0);
            assert_eq!(strategy_proofness_probe(&family), vec![]);
            for inst in &family {
                let out = david_q_match(inst).unwrap();
                assert!(check_stability(inst, &out).is_empty());
            }
        }
    }
}

#[test]
fn truncating_below_the_assignment_never_helps() {
    let mut rng = substream(2, "truncate");
    for _ in 0..300 {
        let inst = random_instance(&mut rng, 12, 5);
        let out = david_q_match(&inst).unwrap();
        for s in 0..inst.applicants.len() {
            let Some(seat) = out.assignment[s] else { continue };
            let k = inst.applicants[s].preferences.iter().position(|p| p.program == seat.program).unwrap();
            let mut alt = inst.clone();
            alt.applicants[s].preferences.truncate(k + 1);
            let got = david_q_match(&alt).unwrap().assignment[s].map(|x| x.program);
            assert_eq!(got, Some(seat.program));
        }
    }
}

#[test]
fn instances_round_trip_and_bad_lists_are_rejected() {
    let mut rng = substream(3, "io");
    let inst = random_instance(&mut rng, 10, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instance.json");
    inst.save(&path).unwrap();
    assert_eq!(MatchInstance::load(&path).unwrap(), inst);
    let out = david_q_match(&inst).unwrap();
    save_outcome(&out, &dir.path().join("outcome.json")).unwrap();

    let one = |prefs: Vec<usize>| MatchInstance {
        programs: vec![ProgramSeats { seats_q1: 1, seats_q2: 0 }; 9],
        applicants: vec![Applicant {
            gpa: 7.0,
            preferences: prefs.into_iter().map(|p| Preference { program: p, q2_priority: None }).collect(),
        }],
    };
    assert!(david_q_match(&one(vec![0, 1, 0])).is_err());
    assert!(david_q_match(&one(vec![12])).is_err());
    assert!(david_q_match(&one((0..9).collect())).is_err());
    assert!(david_q_match(&one((0..8).collect())).is_ok());
    assert!(strategy_proofness_probe(&exhaustive_family(1, &[ProgramSeats { seats_q1: 1, seats_q2: 0 }; 2], |_, _| true)).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn monotone_gpa_transforms_leave_the_outcome_unchanged(seed in 0u64..100_000, scale in 0.1f64..5.0, shift in -10.0f64..10.0) {
        let inst = random_instance(&mut substream(seed, "rank"), 25, 5);
        let mut moved = inst.clone();
        for a in &mut moved.applicants {
            a.gpa = (scale * a.gpa + shift).exp();
        }
        prop_assert_eq!(david_q_match(&inst).unwrap(), david_q_match(&moved).unwrap());
    }

    #[test]
    fn outcome_does_not_depend_on_quota_two_scale(seed in 0u64..100_000) {
        let inst = random_instance(&mut substream(seed, "q2"), 25, 5);
        let mut moved = inst.clone();
        for a in &mut moved.applicants {
            for p in &mut a.preferences {
                p.q2_priority = p.q2_priority.map(|v| 3.0 * v - 1.0);
            }
        }
        prop_assert_eq!(david_q_match(&inst).unwrap(), david_q_match(&moved).unwrap());
    }
}
