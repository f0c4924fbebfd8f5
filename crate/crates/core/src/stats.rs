//! Small numeric helpers shared across methods.

/// Arithmetic mean, summing left to right. Empty input gives NaN.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 || lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Sorts a copy of the values ascending.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Area under the ROC curve via the rank-sum statistic, ties sharing the
/// average rank. `None` when either class is absent.
pub fn auc(target: &[f64], scores: &[f64]) -> Option<f64> {
    let n_pos = target.iter().filter(|&&y| y == 1.0).count();
    let n_neg = target.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
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
        // ranks are 1-based: i+1 ..= j+1
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if target[k] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Some((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

pub fn rmse(target: &[f64], predicted: &[f64]) -> f64 {
    mse(target, predicted).sqrt()
}

pub fn mse(target: &[f64], predicted: &[f64]) -> f64 {
    let sse: f64 = target.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum();
    sse / target.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        // h = 99 p
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.25), 25.75);
        assert_eq!(quantile_sorted(&v, 0.5), 50.5);
        assert_eq!(quantile_sorted(&v, 0.75), 75.25);
        assert_eq!(quantile_sorted(&v, 1.0), 100.0);
    }

    #[test]
    fn auc_handles_ties_and_perfect_ranking() {
        assert_eq!(auc(&[0.0, 1.0], &[0.4, 0.6]), Some(1.0));
        assert_eq!(auc(&[0.0, 1.0], &[0.5, 0.5]), Some(0.5));
        assert_eq!(auc(&[1.0, 0.0], &[0.4, 0.6]), Some(0.0));
        assert_eq!(auc(&[1.0, 1.0], &[0.4, 0.6]), None);
    }

    #[test]
    fn auc_matches_pair_counting() {
        let y = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let s = [0.1, 0.3, 0.3, 0.3, 0.9, 0.8, 0.2];
        // brute force: P(s_pos > s_neg) + 0.5 P(tie)
        let mut acc = 0.0;
        let mut pairs = 0.0;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        acc += 1.0;
                    } else if s[i] == s[j] {
                        acc += 0.5;
                    }
                }
            }
        }
        assert!((auc(&y, &s).unwrap() - acc / pairs).abs() < 1e-15);
    }
}
