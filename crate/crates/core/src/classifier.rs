//! The interface adversarial and virtual adversarial training need from a
//! model: logits for an input matrix, and backpropagation to both the
//! parameters and the input.

use alloc::vec::Vec;

use crate::encoder::EncodedInstance;
use crate::error::Result;
use crate::numcore::{softmax, softmax_cross_entropy, Matrix};

pub trait Classifier {
    type Grads;
    type Cache;

    /// Logits for input `x`, which must have the shape of `inst.x`. `inst`
    /// supplies segment boundaries and the valid length.
    fn forward(&self, inst: &EncodedInstance, x: &Matrix) -> Result<(Vec<f64>, Self::Cache)>;

    /// Backpropagates `d_logits`, accumulating parameter gradients into
    /// `grads` when given. Returns the unmasked gradient with respect to `x`.
    fn backward(
        &self,
        inst: &EncodedInstance,
        x: &Matrix,
        cache: &Self::Cache,
        d_logits: &[f64],
        grads: Option<&mut Self::Grads>,
    ) -> Result<Matrix>;

    fn zero_grads(&self) -> Self::Grads;
}

/// `p(x, θ)`.
pub fn predict<C: Classifier>(model: &C, inst: &EncodedInstance) -> Result<Vec<f64>> {
    let (logits, _) = model.forward(inst, &inst.x)?;
    Ok(softmax(&logits))
}

/// Cross-entropy at input `x` with its gradients scaled by `weight`.
/// Returns the unscaled loss and the scaled, unmasked input gradient.
pub fn cross_entropy_step<C: Classifier>(
    model: &C,
    inst: &EncodedInstance,
    x: &Matrix,
    label: usize,
    weight: f64,
    grads: Option<&mut C::Grads>,
) -> Result<(f64, Matrix)> {
    let (logits, cache) = model.forward(inst, x)?;
    let ce = softmax_cross_entropy(&logits, label)?;
    let d_logits: Vec<f64> = ce.d_logits.iter().map(|g| g * weight).collect();
    let d_x = model.backward(inst, x, &cache, &d_logits, grads)?;
    Ok((ce.loss, d_x))
}

pub fn cross_entropy_loss<C: Classifier>(model: &C, inst: &EncodedInstance, x: &Matrix, label: usize) -> Result<f64> {
    let (logits, _) = model.forward(inst, x)?;
    Ok(softmax_cross_entropy(&logits, label)?.loss)
}

/// `a + b` for matrices of equal shape.
pub fn add_matrices(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    out.add_scaled(b, 1.0);
    out
}
