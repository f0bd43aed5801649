//! Loss functions over a batch of predicted probabilities.
//!
//! Every loss returns its scalar value together with the gradient with respect to
//! the predictions (not logits); the model composes the sigmoid derivative.
//!
//! Soft-F1 treats the true-positive, false-positive and false-negative counts as
//! sums of probabilities, row-wise over the label axis:
//!
//! ```text
//! tp = Σ y·p    fp = Σ (1-y)·p    fn = Σ y·(1-p)
//! P  = tp / (tp + fp + ε)         R  = tp / (tp + fn + ε)
//! sF1 = 2PR / (P + R + ε)         (NaN replaced by 0)
//! ```
//!
//! and the loss is `1 - mean(sF1)` over the batch.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Epsilon used by the reference Keras implementation (`K.epsilon()`).
pub const DEFAULT_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Bce,
    OneMinusSoftF1,
    /// `(1 - sF1) * bce`
    Product,
    /// `(1 - sF1) + bce`
    Sum,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Bce,
        LossKind::OneMinusSoftF1,
        LossKind::Product,
        LossKind::Sum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::OneMinusSoftF1 => "one_minus_soft_f1",
            LossKind::Product => "product",
            LossKind::Sum => "sum",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown loss {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub epsilon: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "loss epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(LossSpec { kind, epsilon })
    }

    pub fn evaluate(&self, truth: ArrayView2<f64>, pred: ArrayView2<f64>) -> Result<LossOutput> {
        match self.kind {
            LossKind::Bce => bce(truth, pred, self.epsilon),
            LossKind::OneMinusSoftF1 => one_minus_soft_f1(truth, pred, self.epsilon),
            LossKind::Product => product_loss(truth, pred, self.epsilon),
            LossKind::Sum => sum_loss(truth, pred, self.epsilon),
        }
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::Bce,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// d(value)/d(prediction), shape `(batch, k)`.
    pub gradient: Array2<f64>,
}

/// Per-sample soft-F1 terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftF1Row {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_shapes(truth: &ArrayView2<f64>, pred: &ArrayView2<f64>) -> Result<()> {
    if truth.dim() != pred.dim() {
        return Err(Error::ShapeMismatch {
            expected: truth.dim(),
            actual: pred.dim(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// Mean binary cross-entropy over every element of the batch.
///
/// Predictions are clamped to `[eps, 1 - eps]` before the log; clamped
/// coordinates get a zero gradient.
pub fn bce(truth: ArrayView2<f64>, pred: ArrayView2<f64>, eps: f64) -> Result<LossOutput> {
    check_shapes(&truth, &pred)?;
    let n = truth.len() as f64;
    let mut total = 0.0;
    let mut gradient = Array2::zeros(pred.dim());
    // row-major walk keeps the summation order fixed
    Zip::from(&mut gradient)
        .and(&truth)
        .and(&pred)
        .for_each(|g, &y, &p| {
            let q = p.clamp(eps, 1.0 - eps);
            total -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            if p >= eps && p <= 1.0 - eps {
                *g = (-y / q + (1.0 - y) / (1.0 - q)) / n;
            }
        });
    Ok(LossOutput {
        value: total / n,
        gradient,
    })
}

/// Row-wise soft true/false positive counts, precision, recall and soft F1.
pub fn soft_f1_components(
    truth: ArrayView2<f64>,
    pred: ArrayView2<f64>,
    eps: f64,
) -> Result<Vec<SoftF1Row>> {
    check_shapes(&truth, &pred)?;
    Ok(truth
        .rows()
        .into_iter()
        .zip(pred.rows())
        .map(|(y, p)| {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for (&y, &p) in y.iter().zip(p.iter()) {
                tp += y * p;
                fp += (1.0 - y) * p;
                fn_ += y * (1.0 - p);
            }
            let precision = tp / (tp + fp + eps);
            let recall = tp / (tp + fn_ + eps);
            let f1 = 2.0 * precision * recall / (precision + recall + eps);
            SoftF1Row {
                tp,
                fp,
                fn_,
                precision,
                recall,
                f1: if f1.is_nan() { 0.0 } else { f1 },
            }
        })
        .collect())
}

/// `1 - mean(sF1)` with its analytic gradient.
pub fn one_minus_soft_f1(
    truth: ArrayView2<f64>,
    pred: ArrayView2<f64>,
    eps: f64,
) -> Result<LossOutput> {
    let rows = soft_f1_components(truth, pred, eps)?;
    let batch = rows.len() as f64;
    let mut gradient = Array2::zeros(pred.dim());
    let mut f1_sum = 0.0;
    for (i, row) in rows.iter().enumerate() {
        f1_sum += row.f1;
        let (p, r) = (row.precision, row.recall);
        let raw = 2.0 * p * r / (p + r + eps);
        if raw.is_nan() {
            // NaN-guarded rows contribute a constant zero
            continue;
        }
        let a = row.tp + row.fp + eps;
        let b = row.tp + row.fn_ + eps;
        let s = p + r + eps;
        let df_dp = 2.0 * r * (r + eps) / (s * s);
        let df_dr = 2.0 * p * (p + eps) / (s * s);
        let mut g_row = gradient.row_mut(i);
        for (j, g) in g_row.iter_mut().enumerate() {
            let y = truth[[i, j]];
            // b = Σy + ε does not depend on the prediction
            let dprec = y / a - row.tp / (a * a);
            let drec = y / b;
            let d = -(df_dp * dprec + df_dr * drec) / batch;
            *g = if d.is_finite() { d } else { 0.0 };
        }
    }
    Ok(LossOutput {
        value: 1.0 - f1_sum / batch,
        gradient,
    })
}

/// `(1 - sF1) * bce`, both factors reduced to scalars first.
pub fn product_loss(truth: ArrayView2<f64>, pred: ArrayView2<f64>, eps: f64) -> Result<LossOutput> {
    let f = one_minus_soft_f1(truth, pred, eps)?;
    let b = bce(truth, pred, eps)?;
    let gradient = &b.gradient * f.value + &f.gradient * b.value;
    Ok(LossOutput {
        value: f.value * b.value,
        gradient,
    })
}

/// `(1 - sF1) + bce`.
pub fn sum_loss(truth: ArrayView2<f64>, pred: ArrayView2<f64>, eps: f64) -> Result<LossOutput> {
    let f = one_minus_soft_f1(truth, pred, eps)?;
    let b = bce(truth, pred, eps)?;
    Ok(LossOutput {
        value: f.value + b.value,
        gradient: f.gradient + b.gradient,
    })
}
