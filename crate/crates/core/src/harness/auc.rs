use crate::error::{Error, Result};
use crate::numkit::DenseVector;

/// Area under the ROC curve in its Mann–Whitney form:
/// `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)` over all positive/negative pairs.
///
/// Labels are `+1` (positive) and `−1` (negative). Runs in `O(n log n)` via
/// midranks.
pub fn eval_auc(scores: &DenseVector, labels: &DenseVector) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined(
            "AUC needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank of the tie group i..=j
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] > 0.0 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::new(xs.to_vec()).unwrap()
    }

    fn brute_force(scores: &[f64], labels: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] <= 0.0 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] > 0.0 {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn examples() {
        assert_eq!(eval_auc(&v(&[0.1, 0.2, 0.8, 0.9]), &v(&[-1.0, -1.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(eval_auc(&v(&[0.3; 4]), &v(&[-1.0, 1.0, -1.0, 1.0])).unwrap(), 0.5);
        // pairs (0.35,0.1) (0.35,0.4) (0.8,0.1) (0.8,0.4): 3 of 4 ordered
        assert_eq!(eval_auc(&v(&[0.1, 0.4, 0.35, 0.8]), &v(&[-1.0, -1.0, 1.0, 1.0])).unwrap(), 0.75);
        assert!(matches!(
            eval_auc(&v(&[0.1, 0.2]), &v(&[1.0, 1.0])),
            Err(Error::MetricUndefined(_))
        ));
    }

    proptest! {
        #[test]
        fn matches_pair_count(
            data in proptest::collection::vec((0u8..12, proptest::bool::ANY), 2..200)
        ) {
            // Coarse integer scores force plenty of ties.
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 4.0).collect();
            let labels: Vec<f64> = data.iter().map(|(_, p)| if *p { 1.0 } else { -1.0 }).collect();
            let pos = labels.iter().filter(|&&y| y > 0.0).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let fast = eval_auc(&v(&scores), &v(&labels)).unwrap();
            prop_assert!((fast - brute_force(&scores, &labels)).abs() < 1e-12);
        }
    }
}
