use crate::error::{input_err, Result};
use crate::stats::{average_ranks, sample_variance};

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return input_err("AUC needs both classes");
    }
    Ok((pos, neg))
}

/// Doubled mid-ranks: integer-valued, so rank sums are exact.
fn doubled_ranks(xs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0u64; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        for &k in &order[i..j] {
            out[k] = (i + 1 + j) as u64;
        }
        i = j;
    }
    out
}

/// Area under the ROC curve: P(score+ > score-) + P(tie) / 2.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return input_err("scores and labels differ in length");
    }
    if scores.iter().any(|s| s.is_nan()) {
        return input_err("NaN score");
    }
    let (pos, neg) = class_counts(labels)?;
    let ranks = doubled_ranks(scores);
    let rank_sum: u128 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y)
        .map(|(&r, _)| r as u128)
        .sum();
    // 2U = 2R - n1(n1 + 1), and AUC = U / (n1 n0)
    let u2 = rank_sum - (pos as u128) * (pos as u128 + 1);
    Ok(u2 as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// DeLong standard error of the AUC.
pub fn auc_se(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return input_err("scores and labels differ in length");
    }
    let (pos, neg) = class_counts(labels)?;
    if pos < 2 || neg < 2 {
        return input_err("DeLong SE needs at least two of each class");
    }
    let positives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y).map(|(&s, _)| s).collect();
    let negatives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| !y).map(|(&s, _)| s).collect();
    let all = average_ranks(scores);
    let rp = average_ranks(&positives);
    let rn = average_ranks(&negatives);
    let all_pos: Vec<f64> = all.iter().zip(labels).filter(|(_, &y)| y).map(|(&r, _)| r).collect();
    let all_neg: Vec<f64> = all.iter().zip(labels).filter(|(_, &y)| !y).map(|(&r, _)| r).collect();

    // Structural components: the share of the other class each case beats.
    let v10: Vec<f64> = all_pos.iter().zip(&rp).map(|(a, r)| (a - r) / neg as f64).collect();
    let v01: Vec<f64> = all_neg.iter().zip(&rn).map(|(a, r)| 1.0 - (a - r) / pos as f64).collect();
    let var = sample_variance(&v10) / pos as f64 + sample_variance(&v01) / neg as f64;
    Ok(var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AucEstimate {
    pub auc: f64,
    pub se: f64,
    pub n: usize,
}

pub fn auc_with_se(scores: &[f64], labels: &[bool]) -> Result<AucEstimate> {
    Ok(AucEstimate {
        auc: auc(scores, labels)?,
        se: auc_se(scores, labels)?,
        n: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [false, false, true, true];
        assert_eq!(auc(&s, &y).unwrap(), 0.75);
        assert_eq!(auc(&[0.5; 4], &y).unwrap(), 0.5);
        assert_eq!(auc(&[0.0, 0.1, 0.9, 1.0], &y).unwrap(), 1.0);
        assert!(auc(&s, &[true; 4]).is_err());
    }

    #[test]
    fn delong_matches_hand_computation() {
        // positives 0.35, 0.8; negatives 0.1, 0.4
        // v10 = [0.5, 1.0], v01 = [1.0, 0.5]
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [false, false, true, true];
        let expected = (0.125f64 / 2.0 + 0.125 / 2.0).sqrt();
        assert!((auc_se(&s, &y).unwrap() - expected).abs() < 1e-15);
    }
}
