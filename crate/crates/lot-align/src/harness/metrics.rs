//! Classification metrics: accuracy, macro F1, and macro one-vs-rest AUC
//! through the rank statistic with midrank tie handling.

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, LabelVector};

/// One evaluation's scores. AUC is `None` when fewer than two classes are
/// present in the truth labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsTriple {
    pub acc: f64,
    pub auc: Option<f64>,
    pub f1: f64,
}

/// Accuracy (argmax, lowest-index tie-break), macro F1 and macro
/// one-vs-rest AUC, both averaged over the classes present in `y_true`.
pub fn metrics(y_true: &LabelVector, scores: &DenseMatrix) -> Result<MetricsTriple> {
    let n = y_true.len();
    if scores.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} score rows vs {} labels",
            scores.rows(),
            n
        )));
    }
    if scores.cols() != y_true.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "{} score columns vs {} classes",
            scores.cols(),
            y_true.num_classes()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyInput("metrics"));
    }
    if !scores.all_finite() {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }

    let c = y_true.num_classes();
    let predicted: Vec<usize> = (0..n).map(|i| argmax(scores.row(i))).collect();
    let acc = predicted
        .iter()
        .zip(y_true.labels())
        .filter(|(&p, &t)| p == t)
        .count() as f64
        / n as f64;

    let counts = y_true.class_counts();
    let present: Vec<usize> = (0..c).filter(|&cls| counts[cls] > 0).collect();

    let mut f1_sum = 0.0;
    for &cls in &present {
        let tp = (0..n)
            .filter(|&i| predicted[i] == cls && y_true[i] == cls)
            .count() as f64;
        let fp = (0..n)
            .filter(|&i| predicted[i] == cls && y_true[i] != cls)
            .count() as f64;
        let fn_ = (0..n)
            .filter(|&i| predicted[i] != cls && y_true[i] == cls)
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        f1_sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    let f1 = f1_sum / present.len() as f64;

    let mut auc_sum = 0.0;
    let mut auc_classes = 0usize;
    for &cls in &present {
        let positives = counts[cls];
        let negatives = n - positives;
        if negatives == 0 {
            continue;
        }
        auc_sum += binary_auc_ovr(y_true, scores, cls);
        auc_classes += 1;
    }
    let auc = if auc_classes > 0 {
        Some(auc_sum / auc_classes as f64)
    } else {
        None
    };

    Ok(MetricsTriple { acc, auc, f1 })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// One-vs-rest AUC for one class from the Mann-Whitney rank statistic, with
/// average (mid) ranks over tied scores.
fn binary_auc_ovr(y_true: &LabelVector, scores: &DenseMatrix, cls: usize) -> f64 {
    let n = y_true.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[(a, cls)]
            .partial_cmp(&scores[(b, cls)])
            .expect("finite scores")
    });

    // midranks: average 1-based rank within each tie group
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[(order[end], cls)] == scores[(order[start], cls)] {
            end += 1;
        }
        let mid = (start + 1 + end) as f64 / 2.0; // mean of ranks start+1 ..= end
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }

    let positives = y_true.labels().iter().filter(|&&y| y == cls).count() as f64;
    let negatives = n as f64 - positives;
    let rank_sum: f64 = (0..n).filter(|&i| y_true[i] == cls).map(|i| ranks[i]).sum();
    (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives)
}

/// Row-wise softmax, for turning logits into scores.
pub fn softmax_scores(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}
