//! Feature MSE, softmax cross-entropy and their weighted combination
//! `L = L_ce + β (L_mse + L_lsh)`.
//!
//! Every function here works on a single sample; batch means are taken by
//! the trainer.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};

/// `‖f_t - f_s‖² / D`.
pub fn mse_feature_loss(f_t: &[f64], f_s: &[f64]) -> Result<f64> {
    check_dims(f_t, f_s)?;
    let sq: f64 = f_t.iter().zip(f_s).map(|(t, s)| (t - s) * (t - s)).sum();
    Ok(sq / f_t.len() as f64)
}

/// Gradient of [`mse_feature_loss`] with respect to `f_s`.
pub fn mse_feature_grad(f_t: &[f64], f_s: &[f64]) -> Result<Vec<f64>> {
    check_dims(f_t, f_s)?;
    let scale = 2.0 / f_t.len() as f64;
    Ok(f_t.iter().zip(f_s).map(|(t, s)| scale * (s - t)).collect())
}

fn check_dims(f_t: &[f64], f_s: &[f64]) -> Result<()> {
    if f_t.is_empty() {
        return Err(invalid("feature vectors must be non-empty"));
    }
    check_len("student feature", f_s.len(), f_t.len())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Returns `(-ln softmax(logits)[label], softmax(logits) - onehot(label))`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    // ln Σ exp(z_i) = max + ln(1 + Σ_{i≠top} exp(z_i - max)), via ln_1p so
    // near-zero losses keep their relative precision.
    let top = argmax(logits);
    let max = logits[top];
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, z)| (z - max).exp())
        .sum();
    let loss = (max - logits[label]) + rest.ln_1p();
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            },
        )
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub ce: f64,
    pub mse: f64,
    pub lsh: f64,
    pub beta: f64,
}

pub fn combined_loss(ce: f64, mse: f64, lsh: f64, beta: f64) -> LossReport {
    debug_assert!(beta >= 0.0);
    LossReport {
        total: ce + beta * (mse + lsh),
        ce,
        mse,
        lsh,
        beta,
    }
}

/// A [`LossReport`] tagged with its logging step, serialized as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct LossLogLine {
    pub step: usize,
    pub ce: f64,
    pub mse: f64,
    pub lsh: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossReport {
    pub fn log_line(&self, step: usize) -> LossLogLine {
        LossLogLine {
            step,
            ce: self.ce,
            mse: self.mse,
            lsh: self.lsh,
            beta: self.beta,
            total: self.total,
        }
    }
}
