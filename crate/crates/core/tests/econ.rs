use admitsim_core::econ::*;
use proptest::prelude::*;

const M: f64 = 1e6;

/// Year-by-year discounted sum of `a` from year `start`, truncated at 2000.
fn direct_sum(a: f64, start: u32, s: &DiscountSchedule) -> f64 {
    (start..=2000)
        .map(|t| {
            let factor = if t <= PERIOD_ONE_END {
                s.r1.powi(t as i32)
            } else if t <= PERIOD_TWO_END {
                s.r1.powi(35) * s.r2.powi(t as i32 - 35)
            } else {
                s.r1.powi(35) * s.r2.powi(35) * s.r3.powi(t as i32 - 70)
            };
            a * factor
        })
        .sum()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn closed_forms_match_direct_summation() {
    let s = DiscountSchedule::ministry();
    for a in [1.0, 1e6] {
        assert!(rel(pv_three_period(a, &s), direct_sum(a, 0, &s)) < 1e-9);
        for k in 0..=5 {
            assert!(rel(pv_adjusted(a, k, &s).unwrap(), direct_sum(a, k, &s)) < 1e-9, "a {a} k {k}");
        }
    }
    let c = pv_components(1.0, &s);
    assert!(c.years_0_35 > 0.0 && c.years_36_70 > 0.0 && c.years_71_plus > 0.0);
    assert_eq!(pv_three_period(0.0, &s), 0.0);
    assert_eq!(pv_adjusted(3.0, 0, &s).unwrap(), pv_three_period(3.0, &s));
    assert!(pv_adjusted(1.0, 36, &s).is_err());
    assert!(DiscountSchedule { r1: 1.0, ..s }.validate().is_err());
}

#[test]
fn net_revenue_examples() {
    let s = DiscountSchedule::ministry();
    let sc = |revenue, fixed_cost, var_cost, delay| Scenario { revenue, fixed_cost, var_cost, delay };
    assert_eq!(net_govt_revenue(&sc(0.0, M, 0.0, 0), &s).unwrap(), -M);
    assert_eq!(net_govt_revenue(&sc(5.0, 0.0, 0.0, 2), &s).unwrap(), pv_adjusted(5.0, 2, &s).unwrap());
    let estimated = net_govt_revenue(&sc(86.7 * M, M, 16.6 * M, 1), &s).unwrap();
    assert!(estimated > 0.0);
    let r = evaluate_scenario(&sc(86.7 * M, M, 16.6 * M, 1), 10.0, &s).unwrap();
    assert_eq!(r.net_revenue, estimated);
    assert_eq!(r.mvpf, Mvpf::Infinite);
}

#[test]
fn revenue_and_override_examples() {
    let r = graduate_revenue(377.0, REVENUE_PER_GRADUATE_USD).unwrap();
    assert!((r - 86.71 * M).abs() < 1.0);
    assert!((r - 86.0 * M).abs() < M);
    assert!((graduate_revenue(136.0, REVENUE_PER_GRADUATE_USD).unwrap() - 31.0 * M).abs() < 0.5 * M);
    assert_eq!(graduate_revenue(0.0, REVENUE_PER_GRADUATE_USD).unwrap(), 0.0);
    assert!(graduate_revenue(-1.0, REVENUE_PER_GRADUATE_USD).is_err());

    let cost = |g| override_cost(g, OVERRIDE_RATE, REVENUE_PER_GRADUATE_USD).unwrap();
    assert!((cost(341.0) - 14.1 * M).abs() < 0.05 * M);
    assert!((cost(36.0) - 1.5 * M).abs() < 0.05 * M);
    assert!((cost(377.0) - 15.6 * M).abs() < 0.05 * M);
    assert!(override_cost(10.0, 1.2, REVENUE_PER_GRADUATE_USD).is_err());
}

#[test]
fn mvpf_examples() {
    assert_eq!(mvpf(10.0, -5.0), Mvpf::Infinite);
    assert_eq!(mvpf(10.0, 5.0), Mvpf::Finite(2.0));
    assert_eq!(mvpf(0.0, 5.0), Mvpf::NotApplicable);
    assert_eq!(mvpf(10.0, 0.0).to_string(), "inf");
}

#[test]
fn scenario_grids() {
    let s = DiscountSchedule::ministry();
    let one = scenario_grid(&[M], &[2.0 * M], &[1], 50.0 * M, &s).unwrap();
    let direct = net_govt_revenue(&Scenario { revenue: 50.0 * M, fixed_cost: M, var_cost: 2.0 * M, delay: 1 }, &s).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].npv, direct);

    let fixed: Vec<f64> = (0..8).map(|i| i as f64 * 200.0 * M).collect();
    let var: Vec<f64> = (0..6).map(|i| i as f64 * 20.0 * M).collect();
    let delays: Vec<u32> = (0..5).collect();
    let grid = scenario_grid(&fixed, &var, &delays, 86.71 * M, &s).unwrap();
    assert_eq!(grid.len(), 8 * 6 * 5);
    let at = |d: usize, f: usize, v: usize| grid[(d * 8 + f) * 6 + v];
    for d in 0..5 {
        for v in 0..6 {
            for f in 1..8 {
                assert!(at(d, f, v).npv <= at(d, f - 1, v).npv);
            }
        }
    }
    for f in 0..8 {
        for v in 0..6 {
            for d in 1..5 {
                assert!(at(d, f, v).npv < at(d - 1, f, v).npv);
            }
        }
    }
    assert!(grid.iter().any(|c| c.feasible) && grid.iter().any(|c| !c.feasible));
    assert!(grid.iter().all(|c| c.feasible == (c.npv >= 0.0)));
    let mut out = Vec::new();
    write_grid_csv(&grid, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("fixed,var,delay,npv,feasible"));
    assert_eq!(text.lines().count(), grid.len() + 1);
    assert!(scenario_grid(&[], &[0.0], &[0], 1.0, &s).is_err());
}

#[test]
fn taximeter_examples() {
    let h = TaximeterArea::Humanities;
    let v = taximeter_value(h.rate_dkk(), h.completion_bonus_dkk(), 3, DKK_PER_USD).unwrap();
    assert_eq!(v.dkk, 153_000.0);
    assert!((v.usd - 21_857.0).abs() < 1.0);
    let n = TaximeterArea::NaturalSciences;
    let v = taximeter_value(n.rate_dkk(), n.completion_bonus_dkk(), 3, DKK_PER_USD).unwrap();
    assert_eq!(v.dkk, 327_100.0);
    assert!((v.usd / 1000.0 - 46.7).abs() < 0.05);
    assert_eq!(taximeter_value(50_000.0, 0.0, 0, DKK_PER_USD).unwrap().dkk, 0.0);
    assert!(taximeter_value(-1.0, 0.0, 3, DKK_PER_USD).is_err());
}

proptest! {
    #[test]
    fn pv_is_linear_and_net_revenue_affine(a in 0.0f64..1e8, b in 0.0f64..1e8, k in 0u32..=35, fixed in 0.0f64..1e8, var in 0.0f64..1e7) {
        let s = DiscountSchedule::ministry();
        let lhs = pv_adjusted(a + b, k, &s).unwrap();
        let rhs = pv_adjusted(a, k, &s).unwrap() + pv_adjusted(b, k, &s).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        let sc = Scenario { revenue: a, fixed_cost: fixed, var_cost: var, delay: k };
        let base = net_govt_revenue(&sc, &s).unwrap();
        let bumped = net_govt_revenue(&Scenario { fixed_cost: fixed + 1.0, ..sc }, &s).unwrap();
        prop_assert!((base - bumped - 1.0).abs() < 1e-6);
        let var_step = net_govt_revenue(&Scenario { var_cost: var + 1.0, ..sc }, &s).unwrap();
        prop_assert!((base - var_step - pv_three_period(1.0, &s)).abs() < 1e-5);
    }

    #[test]
    fn mvpf_is_scale_invariant(w in 0.01f64..1e6, cost in -1e6f64..1e6, scale in 0.01f64..1e3) {
        let (x, y) = (mvpf(w, cost), mvpf(w * scale, cost * scale));
        match (x, y) {
            (Mvpf::Finite(p), Mvpf::Finite(q)) => prop_assert!((p - q).abs() <= 1e-9 * p.abs()),
            _ => prop_assert_eq!(x, y),
        }
    }
}
