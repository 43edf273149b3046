//! Threshold-free and thresholded evaluation measures for binary decisions:
//! confusion counts, ROC curves, AUC, accuracy, and Cohen's kappa.
//!
//! All thresholding uses the strict-inequality convention: an item is
//! predicted positive iff its score is strictly greater than the threshold.
//! Every module in this crate routes decisions through [`confusion_at`] or
//! the calibrators' `decide`, which share that convention.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors for metric computations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("input vectors have mismatched lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("input vectors are empty")]
    EmptyInput,
    #[error("both classes must be present, but labels contain only {0}")]
    SingleClass(u8),
}

/// Confusion-matrix counts at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    /// Total sample size.
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    /// Fraction of correct predictions.
    pub fn accuracy(&self) -> f64 {
        (self.true_pos + self.true_neg) as f64 / self.total() as f64
    }
}

/// An ROC curve: one `(fpr, tpr)` point per distinct score threshold, swept
/// from above the maximum score down, plus the all-positive endpoint.
///
/// `thresholds[i]` reproduces `points[i]` through [`confusion_at`]: the first
/// threshold is the maximum score (nothing is strictly above it), the last is
/// negative infinity (everything is predicted positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` pairs, starting at (0, 0) and ending at (1, 1).
    pub points: Vec<(f64, f64)>,
    /// Threshold producing each point under the strict `>` rule.
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    /// Area under the curve by the trapezoid rule.
    pub fn trapezoid_area(&self) -> f64 {
        let mut area = 0.0;
        for w in self.points.windows(2) {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            area += (x2 - x1) * (y1 + y2) / 2.0;
        }
        area
    }

    /// Serialize as CSV with columns `threshold,fpr,tpr` for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for (t, (fpr, tpr)) in self.thresholds.iter().zip(&self.points) {
            out.push_str(&format!("{t},{fpr},{tpr}\n"));
        }
        out
    }
}

fn check_lengths(scores_len: usize, labels_len: usize) -> Result<(), MetricsError> {
    if scores_len != labels_len {
        return Err(MetricsError::LengthMismatch {
            left: scores_len,
            right: labels_len,
        });
    }
    if scores_len == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize), MetricsError> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(MetricsError::SingleClass(0));
    }
    if neg == 0 {
        return Err(MetricsError::SingleClass(1));
    }
    Ok((pos, neg))
}

/// Confusion counts at `threshold`, predicting positive iff `score > threshold`.
pub fn confusion_at(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ConfusionCounts, MetricsError> {
    check_lengths(scores.len(), labels.len())?;
    let mut counts = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y == 1) {
            (true, true) => counts.true_pos += 1,
            (true, false) => counts.false_pos += 1,
            (false, false) => counts.true_neg += 1,
            (false, true) => counts.false_neg += 1,
        }
    }
    Ok(counts)
}

/// ROC curve over all distinct score thresholds. Tied scores collapse to a
/// single point; both classes must be present.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve, MetricsError> {
    check_lengths(scores.len(), labels.len())?;
    let (n_pos, n_neg) = class_counts(labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    points.push((0.0, 0.0));
    thresholds.push(scores[order[0]]);

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        // consume the whole tied group before emitting a point
        while i < order.len() && scores[order[i]] == value {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        thresholds.push(if i < order.len() {
            scores[order[i]]
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok(RocCurve { points, thresholds })
}

/// AUC by the Mann-Whitney rank statistic; tied cross-class pairs count 1/2.
pub fn auc_rank(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(scores.len(), labels.len())?;
    let (n_pos, n_neg) = class_counts(labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // midrank sum of the positive class
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        let start = i;
        while i < order.len() && scores[order[i]] == value {
            i += 1;
        }
        // 1-based midrank shared by the tied group [start, i)
        let midrank = (start + i + 1) as f64 / 2.0;
        for &idx in &order[start..i] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// AUC by trapezoidal integration of [`roc_curve`].
pub fn auc_trapezoid(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    Ok(roc_curve(scores, labels)?.trapezoid_area())
}

/// Area under the ROC curve, in `[0, 1]`.
///
/// Computed by both the rank statistic and trapezoidal integration; the two
/// routes must agree to 1e-12 and the rank value is returned.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    let by_rank = auc_rank(scores, labels)?;
    let by_trapezoid = auc_trapezoid(scores, labels)?;
    assert!(
        (by_rank - by_trapezoid).abs() <= 1e-12,
        "AUC routes disagree: rank={by_rank}, trapezoid={by_trapezoid}"
    );
    Ok(by_rank)
}

/// Fraction of indices where prediction equals label.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(predictions.len(), labels.len())?;
    let agree = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(agree as f64 / labels.len() as f64)
}

/// Cohen's kappa: chance-corrected agreement with a random baseline of 0.
///
/// Returns 0 when the expected chance agreement is exactly 1 (both marginals
/// degenerate and identical), where the statistic is otherwise undefined.
pub fn kappa(predictions: &[u8], labels: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(predictions.len(), labels.len())?;
    let n = labels.len() as f64;
    let observed = accuracy(predictions, labels)?;
    let pred_pos = predictions.iter().filter(|&&p| p == 1).count() as f64;
    let label_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let expected = (pred_pos / n) * (label_pos / n) + ((n - pred_pos) / n) * ((n - label_pos) / n);
    if expected >= 1.0 {
        return Ok(0.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}
