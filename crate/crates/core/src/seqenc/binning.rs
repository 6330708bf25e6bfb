use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

pub const PERCENTILE_BINS: usize = 100;
pub const WINSOR_PERCENT: f64 = 5.0;

/// Nearest-rank percentile of sorted data: the value at rank ceil(p/100 * n).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Winsorized percentile binning learned from training values.
///
/// A value is clamped to [low, high] and mapped to ceil(100 * F(v)), where F
/// is the empirical CDF of the clamped training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningRule {
    pub winsor_low: f64,
    pub winsor_high: f64,
    /// cuts[k - 1] is the smallest training value whose CDF exceeds k / 100.
    pub cuts: Vec<f64>,
}

pub fn fit_binning(values: &[f64]) -> Result<BinningRule> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return input_err("no finite values to bin");
    }
    if v.len() < 20 {
        warn!("binning fit on only {} values", v.len());
    }
    v.sort_by(f64::total_cmp);
    let low = nearest_rank(&v, WINSOR_PERCENT);
    let high = nearest_rank(&v, 100.0 - WINSOR_PERCENT);
    if low == high {
        warn!("constant binning input; every value maps to one bin");
    }
    for x in &mut v {
        *x = x.clamp(low, high);
    }
    let n = v.len();
    // the CDF at v[i] is (last index holding that value + 1) / n
    let mut cuts = Vec::with_capacity(PERCENTILE_BINS - 1);
    let mut i = 0;
    for k in 1..PERCENTILE_BINS {
        loop {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if (j + 1) * PERCENTILE_BINS > k * n {
                cuts.push(v[i]);
                break;
            }
            i = j + 1;
        }
    }
    Ok(BinningRule {
        winsor_low: low,
        winsor_high: high,
        cuts,
    })
}

impl BinningRule {
    /// Percentile bin in 1..=100.
    pub fn bin(&self, value: f64) -> usize {
        let v = value.clamp(self.winsor_low, self.winsor_high);
        1 + self.cuts.partition_point(|&c| c <= v)
    }

    pub fn token(&self, value: f64) -> String {
        format!("p{}", self.bin(value))
    }
}
