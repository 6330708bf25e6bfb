//! Public-returns arithmetic: discounted revenue streams, override costs,
//! net government revenue, MVPF and scenario grids.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// Government revenue per additional graduate, USD (2016 prices).
pub const REVENUE_PER_GRADUATE_USD: f64 = 230_000.0;
/// The unrounded alternative: 1.6M DKK at 7 DKK/USD.
pub const REVENUE_PER_GRADUATE_UNROUNDED_USD: f64 = 1_600_000.0 / 7.0;
/// Share of decisions where a human overrides the model.
pub const OVERRIDE_RATE: f64 = 0.18;
pub const DKK_PER_USD: f64 = 7.0;

/// Year at which the first discount period ends.
pub const PERIOD_ONE_END: u32 = 35;
/// Year at which the second discount period ends.
pub const PERIOD_TWO_END: u32 = 70;

/// Yearly discount factors for the three Ministry of Finance periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSchedule {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl Default for DiscountSchedule {
    fn default() -> Self {
        Self::ministry()
    }
}

impl DiscountSchedule {
    pub fn ministry() -> Self {
        Self {
            r1: 1.0 - 0.035,
            r2: 1.0 - 0.025,
            r3: 1.0 - 0.015,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.r1, self.r2, self.r3] {
            if !(r > 0.0 && r < 1.0) {
                return input_err(format!("discount factor {r} outside (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Present value of a constant yearly flow, split by discount period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PvComponents {
    pub years_0_35: f64,
    pub years_36_70: f64,
    pub years_71_plus: f64,
}

impl PvComponents {
    pub fn total(&self) -> f64 {
        self.years_0_35 + self.years_36_70 + self.years_71_plus
    }
}

fn geometric_sum(a: f64, r: f64, terms: i32) -> f64 {
    a * (1.0 - r.powi(terms)) / (1.0 - r)
}

/// Present value of `a` per year from year 0 onward, by period.
pub fn pv_components(a: f64, s: &DiscountSchedule) -> PvComponents {
    let (r1, r2, r3) = (s.r1, s.r2, s.r3);
    PvComponents {
        years_0_35: geometric_sum(a, r1, 36),
        years_36_70: geometric_sum(a, r2, 35) * r2 * r1.powi(35),
        years_71_plus: a / (1.0 - r3) * r3 * r2.powi(35) * r1.powi(35),
    }
}

pub fn pv_three_period(a: f64, s: &DiscountSchedule) -> f64 {
    pv_components(a, s).total()
}

/// Components when the flow only starts in year `k`.
pub fn pv_adjusted_components(a: f64, k: u32, s: &DiscountSchedule) -> Result<PvComponents> {
    if k > PERIOD_ONE_END {
        return input_err(format!("delay {k} exceeds the first discount period"));
    }
    let mut c = pv_components(a, s);
    c.years_0_35 = geometric_sum(a, s.r1, 36 - k as i32) * s.r1.powi(k as i32);
    Ok(c)
}

pub fn pv_adjusted(a: f64, k: u32, s: &DiscountSchedule) -> Result<f64> {
    Ok(pv_adjusted_components(a, k, s)?.total())
}

/// One cost/delay configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Yearly revenue once the policy is running.
    pub revenue: f64,
    /// One-off cost in year 0.
    pub fixed_cost: f64,
    /// Yearly cost from year 0.
    pub var_cost: f64,
    /// Years before revenue starts.
    pub delay: u32,
}

/// Net government revenue; positive means the policy pays for itself.
pub fn net_govt_revenue(sc: &Scenario, s: &DiscountSchedule) -> Result<f64> {
    Ok(pv_adjusted(sc.revenue, sc.delay, s)? - sc.fixed_cost - pv_three_period(sc.var_cost, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mvpf {
    Finite(f64),
    Infinite,
    NotApplicable,
}

impl std::fmt::Display for Mvpf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mvpf::Finite(v) => write!(f, "{v}"),
            Mvpf::Infinite => write!(f, "inf"),
            Mvpf::NotApplicable => write!(f, "NA"),
        }
    }
}

/// Benefit to beneficiaries over net government cost.
pub fn mvpf(delta_w: f64, net_govt_cost: f64) -> Mvpf {
    if !(delta_w > 0.0) {
        Mvpf::NotApplicable
    } else if net_govt_cost <= 0.0 {
        Mvpf::Infinite
    } else {
        Mvpf::Finite(delta_w / net_govt_cost)
    }
}

pub fn graduate_revenue(delta_graduates: f64, per_graduate: f64) -> Result<f64> {
    if !(delta_graduates >= 0.0) {
        return input_err(format!("negative graduate change {delta_graduates}"));
    }
    Ok(delta_graduates * per_graduate)
}

/// Revenue lost when humans override a share of the model's decisions.
pub fn override_cost(delta_graduates: f64, override_rate: f64, per_graduate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&override_rate) {
        return input_err(format!("override rate {override_rate} outside [0, 1]"));
    }
    Ok(graduate_revenue(delta_graduates, per_graduate)? * override_rate)
}

/// Full result for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub revenue_pv: PvComponents,
    pub adjusted_pv: f64,
    pub net_revenue: f64,
    pub mvpf: Mvpf,
}

/// Evaluates a scenario; `benefit` is the beneficiaries' gain used for MVPF.
pub fn evaluate_scenario(sc: &Scenario, benefit: f64, s: &DiscountSchedule) -> Result<ScenarioResult> {
    let revenue_pv = pv_adjusted_components(sc.revenue, sc.delay, s)?;
    let net = net_govt_revenue(sc, s)?;
    Ok(ScenarioResult {
        scenario: *sc,
        revenue_pv,
        adjusted_pv: revenue_pv.total(),
        net_revenue: net,
        mvpf: mvpf(benefit, -net),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub fixed: f64,
    pub var: f64,
    pub delay: u32,
    pub npv: f64,
    /// Net revenue is nonnegative.
    pub feasible: bool,
}

/// Cartesian grid ordered delay-major, then fixed cost, then variable cost.
pub fn scenario_grid(
    fixed_costs: &[f64],
    var_costs: &[f64],
    delays: &[u32],
    revenue: f64,
    s: &DiscountSchedule,
) -> Result<Vec<GridCell>> {
    if fixed_costs.is_empty() || var_costs.is_empty() || delays.is_empty() {
        return input_err("scenario grid axes must be nonempty");
    }
    let mut cells = Vec::with_capacity(fixed_costs.len() * var_costs.len() * delays.len());
    for &delay in delays {
        for &fixed in fixed_costs {
            for &var in var_costs {
                let sc = Scenario {
                    revenue,
                    fixed_cost: fixed,
                    var_cost: var,
                    delay,
                };
                let npv = net_govt_revenue(&sc, s)?;
                cells.push(GridCell {
                    fixed,
                    var,
                    delay,
                    npv,
                    feasible: npv >= 0.0,
                });
            }
        }
    }
    Ok(cells)
}

pub fn write_grid_csv<W: Write>(cells: &[GridCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fixed", "var", "delay", "npv", "feasible"])?;
    for c in cells {
        w.write_record([
            c.fixed.to_string(),
            c.var.to_string(),
            c.delay.to_string(),
            c.npv.to_string(),
            c.feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_grid_csv(cells: &[GridCell], path: &Path) -> Result<()> {
    write_grid_csv(cells, std::fs::File::create(path)?)
}

/// Funding areas of the per-student-year rate table (2017 rates, DKK).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaximeterArea {
    Humanities,
    Mathematics,
    NaturalSciences,
}

impl TaximeterArea {
    pub fn rate_dkk(self) -> f64 {
        match self {
            TaximeterArea::Humanities => 44_000.0,
            TaximeterArea::Mathematics => 63_200.0,
            TaximeterArea::NaturalSciences => 92_400.0,
        }
    }

    pub fn completion_bonus_dkk(self) -> f64 {
        match self {
            TaximeterArea::Humanities => 21_000.0,
            TaximeterArea::Mathematics => 34_100.0,
            TaximeterArea::NaturalSciences => 49_900.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaximeterValue {
    pub dkk: f64,
    pub usd: f64,
}

/// Payout for one student completing `years` of study on time.
pub fn taximeter_value(rate: f64, completion_bonus: f64, years: u32, dkk_per_usd: f64) -> Result<TaximeterValue> {
    if rate < 0.0 || completion_bonus < 0.0 || !(dkk_per_usd > 0.0) {
        return input_err("taximeter rates must be nonnegative and the exchange rate positive");
    }
    let dkk = years as f64 * rate + completion_bonus;
    Ok(TaximeterValue {
        dkk,
        usd: dkk / dkk_per_usd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    // Year-by-year expansion of the same piecewise series.
    fn series(a: f64, k: u32, s: &DiscountSchedule) -> f64 {
        let first: f64 = (k..=35).map(|t| a * s.r1.powi(t as i32)).sum();
        let second: f64 = (0..35).map(|t| a * s.r2.powi(t)).sum::<f64>() * s.r2 * s.r1.powi(35);
        let third: f64 =
            (0..=2000).map(|t| a * s.r3.powi(t)).sum::<f64>() * s.r3 * s.r2.powi(35) * s.r1.powi(35);
        first + second + third
    }

    #[test]
    fn closed_forms_match_direct_summation() {
        let s = DiscountSchedule::ministry();
        for a in [1.0, 1e6] {
            for k in 0..=5 {
                let closed = pv_adjusted(a, k, &s).unwrap();
                assert!(close(closed, series(a, k, &s), 1e-9), "a={a} k={k}");
            }
            assert!(close(pv_three_period(a, &s), series(a, 0, &s), 1e-9));
        }
    }

    #[test]
    fn zero_flow_and_zero_delay() {
        let s = DiscountSchedule::ministry();
        assert_eq!(pv_three_period(0.0, &s), 0.0);
        assert_eq!(pv_adjusted(7.0, 0, &s).unwrap(), pv_three_period(7.0, &s));
        assert!(pv_adjusted(1.0, 36, &s).is_err());
    }

    #[test]
    fn net_revenue_cases() {
        let s = DiscountSchedule::ministry();
        let only_fixed = Scenario {
            revenue: 0.0,
            fixed_cost: 1e6,
            var_cost: 0.0,
            delay: 0,
        };
        assert_eq!(net_govt_revenue(&only_fixed, &s).unwrap(), -1e6);
        let free = Scenario {
            revenue: 5.0,
            fixed_cost: 0.0,
            var_cost: 0.0,
            delay: 3,
        };
        let expected = pv_adjusted(5.0, 3, &s).unwrap();
        assert!(close(net_govt_revenue(&free, &s).unwrap(), expected, 1e-14));
    }

    #[test]
    fn mvpf_cases() {
        assert_eq!(mvpf(10.0, -5.0), Mvpf::Infinite);
        assert_eq!(mvpf(10.0, 5.0), Mvpf::Finite(2.0));
        assert_eq!(mvpf(0.0, 5.0), Mvpf::NotApplicable);
        assert_eq!(mvpf(30.0, 15.0), mvpf(10.0, 5.0));
    }

    #[test]
    fn taximeter_zero() {
        let v = taximeter_value(0.0, 0.0, 0, DKK_PER_USD).unwrap();
        assert_eq!(v.dkk, 0.0);
    }

    #[test]
    fn grid_single_cell() {
        let s = DiscountSchedule::ministry();
        let g = scenario_grid(&[1e6], &[2e6], &[1], 86.71e6, &s).unwrap();
        assert_eq!(g.len(), 1);
        let sc = Scenario {
            revenue: 86.71e6,
            fixed_cost: 1e6,
            var_cost: 2e6,
            delay: 1,
        };
        assert_eq!(g[0].npv, net_govt_revenue(&sc, &s).unwrap());
        assert!(scenario_grid(&[], &[1.0], &[0], 1.0, &s).is_err());
    }
}
