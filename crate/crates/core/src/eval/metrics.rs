//! Binary-classification metrics: AUROC and Youden-threshold F1.

use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::UndefinedMetric("non-finite score".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::UndefinedMetric(format!("label {bad} is not binary")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "one class absent ({pos} positives, {neg} negatives)"
        )));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve in its Mann-Whitney form: the probability that a
/// uniformly chosen positive outscores a uniformly chosen negative, with ties
/// counted one half. Computed from tie-averaged ranks in O(n log n).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite"));
    let mut rank = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based positions i+1 ..= j+1 share the average rank.
        let avg = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            rank[order[k]] = avg;
        }
        i = j + 1;
    }
    let positive_rank_sum: f64 = (0..n).filter(|&k| labels[k] == 1).map(|k| rank[k]).sum();
    let u = positive_rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Scan all distinct scores as thresholds under the rule `predict positive
/// iff score >= threshold`, pick the one maximizing sensitivity +
/// specificity (ties resolved toward the lowest threshold), and return it
/// with the F1 score at that operating point.
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    candidates.dedup();

    let mut best: Option<(f64, f64, usize, usize)> = None; // (J, threshold, tp, fp)
    for &t in &candidates {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let sensitivity = tp as f64 / pos as f64;
        let specificity = (neg - fp) as f64 / neg as f64;
        let j = sensitivity + specificity;
        // Strictly-greater keeps the lowest threshold among exact J ties;
        // candidates are scanned in ascending order.
        if best.map_or(true, |(bj, _, _, _)| j > bj) {
            best = Some((j, t, tp, fp));
        }
    }
    let (_, threshold, tp, fp) = best.expect("non-empty candidate set");
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / pos as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((threshold, f1))
}

/// Fraction of positive labels.
pub fn incidence(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64
}
