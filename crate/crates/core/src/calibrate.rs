//! Score-to-decision transforms: logistic (Platt) scaling, isotonic
//! regression with interpolated prediction, and a single-threshold decision
//! stump, behind one fit/decide contract.
//!
//! All fits are deterministic. Decisions use strict inequalities: a
//! probabilistic calibrator decides positive iff its predicted probability
//! exceeds 0.5, a stump iff the raw score exceeds its threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors for calibrator fitting.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CalibrateError {
    #[error("input vectors are empty")]
    EmptyInput,
    #[error("input vectors have mismatched lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("both classes must be present, but labels contain only {0}")]
    SingleClass(u8),
}

/// Calibration method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Logistic,
    Isotonic,
    Stump,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Logistic, Method::Isotonic, Method::Stump];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Logistic => "logistic",
            Method::Isotonic => "isotonic",
            Method::Stump => "stump",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(Method::Logistic),
            "isotonic" => Ok(Method::Isotonic),
            "stump" => Ok(Method::Stump),
            other => Err(format!("unknown calibration method `{other}`")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings for the logistic fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// L2 penalty on both coefficients; keeps separable fits finite.
    pub l2: f64,
    pub max_iter: usize,
    /// Stop when the parameter step falls below this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-6,
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

/// Fitted sigmoid `p(s) = 1 / (1 + exp(-(beta0 + beta1 * s)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticCalibrator {
    pub beta0: f64,
    pub beta1: f64,
}

impl LogisticCalibrator {
    /// Predicted probability of the positive class.
    pub fn predict(&self, score: f64) -> f64 {
        sigmoid(self.beta0 + self.beta1 * score)
    }
}

/// Fitted monotone step/interpolation curve: knots at the distinct training
/// scores, fitted values from pool-adjacent-violators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicCalibrator {
    /// Strictly increasing knot positions (duplicates pooled at fit time).
    pub knots_x: Vec<f64>,
    /// Non-decreasing fitted values, one per knot.
    pub knots_y: Vec<f64>,
}

impl IsotonicCalibrator {
    /// Linear interpolation between bracketing knots; clamps to the end
    /// knot values outside the fitted range; an exact knot hit returns its
    /// fitted value.
    pub fn predict(&self, score: f64) -> f64 {
        let xs = &self.knots_x;
        let ys = &self.knots_y;
        if score <= xs[0] {
            return ys[0];
        }
        if score >= *xs.last().unwrap() {
            return *ys.last().unwrap();
        }
        // first knot at or above the query
        let hi = xs.partition_point(|&x| x < score);
        if xs[hi] == score {
            return ys[hi];
        }
        let lo = hi - 1;
        ys[lo] + (score - xs[lo]) / (xs[hi] - xs[lo]) * (ys[hi] - ys[lo])
    }
}

/// Depth-one decision rule: positive iff `score > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StumpCalibrator {
    pub threshold: f64,
}

/// Constant predictor used when a training slice contains a single class;
/// always returns `decision`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantCalibrator {
    pub decision: u8,
}

/// A fitted calibrator of any kind, serializable as JSON with a `kind` tag
/// so it can be stored and replayed in later invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Calibrator {
    Logistic(LogisticCalibrator),
    Isotonic(IsotonicCalibrator),
    Stump(StumpCalibrator),
    Constant(ConstantCalibrator),
}

impl Calibrator {
    /// Binary decision for a raw score. Probabilistic calibrators decide
    /// positive iff p > 0.5; the stump iff score > threshold; boundary
    /// values decide negative.
    pub fn decide(&self, score: f64) -> u8 {
        match self {
            Calibrator::Logistic(c) => u8::from(c.predict(score) > 0.5),
            Calibrator::Isotonic(c) => u8::from(c.predict(score) > 0.5),
            Calibrator::Stump(c) => u8::from(score > c.threshold),
            Calibrator::Constant(c) => c.decision,
        }
    }

    /// Decisions for a whole score slice.
    pub fn decide_all(&self, scores: &[f64]) -> Vec<u8> {
        scores.iter().map(|&s| self.decide(s)).collect()
    }
}

/// Fit the selected method on a training slice.
pub fn fit(
    method: Method,
    scores: &[f64],
    labels: &[u8],
    config: &LogisticConfig,
) -> Result<Calibrator, CalibrateError> {
    match method {
        Method::Logistic => Ok(Calibrator::Logistic(fit_logistic(scores, labels, config)?)),
        Method::Isotonic => Ok(Calibrator::Isotonic(fit_isotonic(scores, labels)?)),
        Method::Stump => Ok(Calibrator::Stump(fit_stump(scores, labels)?)),
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// The logistic fitting objective: summed log-loss plus an L2 penalty of
/// `0.5 * l2 * (alpha0^2 + beta1^2)`, where `alpha0 = beta0 + beta1 * mean(s)`
/// is the intercept in mean-centered score coordinates. Centering makes the
/// penalty invariant under score reflection, so symmetric data fits a
/// symmetric boundary. Exposed so independent optimizers can be compared
/// against the fitted result.
pub fn logistic_objective(scores: &[f64], labels: &[u8], beta0: f64, beta1: f64, l2: f64) -> f64 {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let alpha0 = beta0 + beta1 * mean;
    let mut loss = 0.5 * l2 * (alpha0 * alpha0 + beta1 * beta1);
    for (&s, &y) in scores.iter().zip(labels) {
        let t = beta0 + beta1 * s;
        loss += softplus(t) - f64::from(y) * t;
    }
    loss
}

/// Estimated standard errors of the fitted coefficients from the observed
/// information matrix at the fit.
pub fn logistic_standard_errors(
    scores: &[f64],
    labels: &[u8],
    cal: &LogisticCalibrator,
) -> (f64, f64) {
    debug_assert_eq!(scores.len(), labels.len());
    let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
    for &s in scores {
        let p = cal.predict(s);
        let w = p * (1.0 - p);
        h00 += w;
        h01 += w * s;
        h11 += w * s * s;
    }
    let det = h00 * h11 - h01 * h01;
    ((h11 / det).sqrt(), (h00 / det).sqrt())
}

fn check_fit_input(scores: &[f64], labels: &[u8]) -> Result<(), CalibrateError> {
    if scores.len() != labels.len() {
        return Err(CalibrateError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(CalibrateError::EmptyInput);
    }
    Ok(())
}

/// Fit the sigmoid by iteratively reweighted least squares on the
/// L2-regularized log-loss. Non-convergence within `max_iter` is not an
/// error; the regularizer keeps the optimum finite even for separable data.
pub fn fit_logistic(
    scores: &[f64],
    labels: &[u8],
    config: &LogisticConfig,
) -> Result<LogisticCalibrator, CalibrateError> {
    check_fit_input(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return Err(CalibrateError::SingleClass(0));
    }
    if n_pos == labels.len() {
        return Err(CalibrateError::SingleClass(1));
    }

    // A constant score carries no slope information; predict the base rate.
    let first = scores[0];
    if scores.iter().all(|&s| s == first) {
        return Ok(LogisticCalibrator {
            beta0: fit_intercept_only(labels, config),
            beta1: 0.0,
        });
    }

    // Newton iterations run in mean-centered coordinates, matching the
    // penalty in `logistic_objective` and keeping the solve well conditioned.
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let centered: Vec<f64> = scores.iter().map(|&s| s - mean).collect();

    let (mut alpha0, mut beta1) = (0.0_f64, 0.0_f64);
    let objective =
        |a0: f64, b1: f64| logistic_objective(scores, labels, a0 - b1 * mean, b1, config.l2);
    let mut loss = objective(alpha0, beta1);
    for _ in 0..config.max_iter {
        let (mut g0, mut g1) = (config.l2 * alpha0, config.l2 * beta1);
        let (mut h00, mut h01, mut h11) = (config.l2, 0.0, config.l2);
        for (&u, &y) in centered.iter().zip(labels) {
            let p = sigmoid(alpha0 + beta1 * u);
            let residual = p - f64::from(y);
            g0 += residual;
            g1 += residual * u;
            let w = p * (1.0 - p);
            h00 += w;
            h01 += w * u;
            h11 += w * u * u;
        }
        let det = h00 * h11 - h01 * h01;
        if det.abs() < 1e-300 {
            break;
        }
        let step0 = (h11 * g0 - h01 * g1) / det;
        let step1 = (h00 * g1 - h01 * g0) / det;

        // halve the Newton step until the objective stops increasing
        let mut scale = 1.0;
        let (mut next0, mut next1, mut next_loss);
        loop {
            next0 = alpha0 - scale * step0;
            next1 = beta1 - scale * step1;
            next_loss = objective(next0, next1);
            if next_loss <= loss || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let moved = (next0 - alpha0).abs().max((next1 - beta1).abs());
        alpha0 = next0;
        beta1 = next1;
        loss = next_loss;
        if moved < config.tol {
            break;
        }
    }
    Ok(LogisticCalibrator {
        beta0: alpha0 - beta1 * mean,
        beta1,
    })
}

/// One-dimensional Newton solve for the regularized intercept-only model.
fn fit_intercept_only(labels: &[u8], config: &LogisticConfig) -> f64 {
    let n = labels.len() as f64;
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut beta0 = 0.0_f64;
    for _ in 0..config.max_iter {
        let p = sigmoid(beta0);
        let gradient = n * p - n_pos + config.l2 * beta0;
        let hessian = n * p * (1.0 - p) + config.l2;
        let step = gradient / hessian;
        beta0 -= step;
        if step.abs() < config.tol {
            break;
        }
    }
    beta0
}

/// Monotone least-squares fit of binary labels by pool-adjacent-violators.
pub fn fit_isotonic(scores: &[f64], labels: &[u8]) -> Result<IsotonicCalibrator, CalibrateError> {
    let values: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
    fit_isotonic_values(scores, &values)
}

/// Monotone least-squares fit of arbitrary real targets (used for
/// refitting fitted values; calibration targets live in `[0, 1]`).
///
/// Duplicate scores are pooled to their weighted mean target before the
/// sweep; the monotonicity constraint forces equal fitted values at equal
/// scores, so pooling is exact.
pub fn fit_isotonic_values(
    scores: &[f64],
    targets: &[f64],
) -> Result<IsotonicCalibrator, CalibrateError> {
    if scores.len() != targets.len() {
        return Err(CalibrateError::LengthMismatch {
            left: scores.len(),
            right: targets.len(),
        });
    }
    if scores.is_empty() {
        return Err(CalibrateError::EmptyInput);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // pool duplicate x to (x, weighted sum, weight)
    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &idx in &order {
        let x = scores[idx];
        if xs.last() == Some(&x) {
            *sums.last_mut().unwrap() += targets[idx];
            *weights.last_mut().unwrap() += 1.0;
        } else {
            xs.push(x);
            sums.push(targets[idx]);
            weights.push(1.0);
        }
    }

    // blocks as (start knot index, weighted sum, weight)
    let mut blocks: Vec<(usize, f64, f64)> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        blocks.push((i, sums[i], weights[i]));
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.1 / prev.2 <= last.1 / last.2 {
                break;
            }
            blocks.pop();
            blocks.pop();
            blocks.push((prev.0, prev.1 + last.1, prev.2 + last.2));
        }
    }

    let mut knots_y = vec![0.0; xs.len()];
    for (b, &(start, sum, weight)) in blocks.iter().enumerate() {
        let end = if b + 1 < blocks.len() {
            blocks[b + 1].0
        } else {
            xs.len()
        };
        let mean = sum / weight;
        for y in &mut knots_y[start..end] {
            *y = mean;
        }
    }
    Ok(IsotonicCalibrator {
        knots_x: xs,
        knots_y,
    })
}

/// Pick the threshold maximizing training accuracy under the fixed
/// orientation `score > threshold => positive`. Candidates are the midpoints
/// of adjacent distinct scores plus one value below the minimum and one
/// above the maximum; ties take the smallest candidate.
pub fn fit_stump(scores: &[f64], labels: &[u8]) -> Result<StumpCalibrator, CalibrateError> {
    check_fit_input(scores, labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // distinct values with per-group positive/negative counts
    let mut values: Vec<f64> = Vec::new();
    let mut pos_counts: Vec<usize> = Vec::new();
    let mut neg_counts: Vec<usize> = Vec::new();
    for &idx in &order {
        let x = scores[idx];
        if values.last() != Some(&x) {
            values.push(x);
            pos_counts.push(0);
            neg_counts.push(0);
        }
        if labels[idx] == 1 {
            *pos_counts.last_mut().unwrap() += 1;
        } else {
            *neg_counts.last_mut().unwrap() += 1;
        }
    }
    let total_pos: usize = pos_counts.iter().sum();

    // candidate after group k predicts groups > k positive
    let mut best_threshold = values[0] - 1.0;
    let mut best_correct = total_pos; // everything predicted positive
    let mut neg_below = 0;
    let mut pos_below = 0;
    for k in 0..values.len() {
        neg_below += neg_counts[k];
        pos_below += pos_counts[k];
        let candidate = if k + 1 < values.len() {
            (values[k] + values[k + 1]) / 2.0
        } else {
            values[k] + 1.0
        };
        let correct = neg_below + (total_pos - pos_below);
        if correct > best_correct {
            best_correct = correct;
            best_threshold = candidate;
        }
    }
    Ok(StumpCalibrator {
        threshold: best_threshold,
    })
}
