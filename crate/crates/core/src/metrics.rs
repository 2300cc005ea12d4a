//! Prediction quality against ground truth and distances between matrices.

use crate::error::{Error, Result};
use crate::model::{ConfusionMatrix, Labels};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub fraction_incorrect: f64,
    pub distance_weighted: f64,
    pub emd_score: f64,
    pub jsd_score: f64,
}

impl MetricReport {
    pub fn evaluate(
        pred: &Labels,
        truth: &Labels,
        pred_matrix: &ConfusionMatrix,
        true_matrix: &ConfusionMatrix,
    ) -> Result<Self> {
        Ok(Self {
            fraction_incorrect: fraction_incorrect(pred, truth)?,
            distance_weighted: distance_weighted_score(pred, truth)?,
            emd_score: emd_score(pred_matrix, true_matrix)?,
            jsd_score: jsd_score(pred_matrix, true_matrix)?,
        })
    }
}

fn check_items(pred: &Labels, truth: &Labels) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    Ok(())
}

fn check_matrices(p: &ConfusionMatrix, q: &ConfusionMatrix) -> Result<()> {
    if p.ratings() != q.ratings() {
        return Err(Error::DimensionMismatch {
            expected: p.ratings(),
            found: q.ratings(),
        });
    }
    Ok(())
}

/// Share of items whose predicted rating differs from the truth (0 when
/// there are no items).
pub fn fraction_incorrect(pred: &Labels, truth: &Labels) -> Result<f64> {
    check_items(pred, truth)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let wrong = pred.0.iter().zip(&truth.0).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Mean absolute rating error.
pub fn distance_weighted_score(pred: &Labels, truth: &Labels) -> Result<f64> {
    check_items(pred, truth)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: u64 = pred
        .0
        .iter()
        .zip(&truth.0)
        .map(|(&a, &b)| a.abs_diff(b) as u64)
        .sum();
    Ok(total as f64 / pred.len() as f64)
}

/// Earth mover's distance between two distributions on `1..=R` with unit
/// spacing, divided by `R - 1` so that it lies in `[0, 1]`.
pub fn emd_column(p: &[f64], q: &[f64]) -> f64 {
    let r = p.len();
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for k in 0..r - 1 {
        cp += p[k];
        cq += q[k];
        total += (cp - cq).abs();
    }
    total / (r - 1) as f64
}

/// Jensen-Shannon divergence in bits.
pub fn jsd_column(p: &[f64], q: &[f64]) -> f64 {
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (2.0 * x / (x + y)).log2())
            .sum()
    };
    (0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p)).clamp(0.0, 1.0)
}

/// Sum of per-column normalized EMDs, in `[0, R]`.
pub fn emd_score(p: &ConfusionMatrix, q: &ConfusionMatrix) -> Result<f64> {
    check_matrices(p, q)?;
    Ok((1..=p.ratings())
        .map(|j| emd_column(&p.column(j), &q.column(j)))
        .sum())
}

/// Sum of per-column Jensen-Shannon divergences, in `[0, R]`.
pub fn jsd_score(p: &ConfusionMatrix, q: &ConfusionMatrix) -> Result<f64> {
    check_matrices(p, q)?;
    Ok((1..=p.ratings())
        .map(|j| jsd_column(&p.column(j), &q.column(j)))
        .sum())
}
