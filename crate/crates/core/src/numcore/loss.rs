use alloc::{format, vec::Vec};

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` accepted by [`kl_divergence`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + libm::log(logits.iter().map(|&z| libm::exp(z - m)).sum::<f64>())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| libm::exp(z - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy output: loss, predicted distribution and logit gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub d_logits: Vec<f64>,
}

pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<CrossEntropy> {
    let classes = logits.len();
    if classes < 2 || label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let lse = log_sum_exp(logits);
    let probs = softmax(logits);
    let mut d_logits = probs.clone();
    d_logits[label] -= 1.0;
    Ok(CrossEntropy { loss: lse - logits[label], probs, d_logits })
}

/// `KL(p ‖ softmax(q_logits))` and its gradient with respect to `q_logits`.
/// `p` is a constant; `0 · ln 0` is taken as 0.
pub fn kl_divergence(p: &[f64], q_logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != q_logits.len() {
        return Err(Error::Dimension(format!("p has {} classes, q has {}", p.len(), q_logits.len())));
    }
    if p.iter().any(|&v| v.is_nan() || v < 0.0) {
        return Err(Error::InvalidDistribution(format!("negative or NaN entry in {p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    let lse = log_sum_exp(q_logits);
    let kl: f64 = p
        .iter()
        .zip(q_logits)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &z)| pi * (libm::log(pi) - (z - lse)))
        .sum();
    let q = softmax(q_logits);
    let grad = q.iter().zip(p).map(|(qi, pi)| qi - pi).collect();
    Ok((kl.max(0.0), grad))
}
