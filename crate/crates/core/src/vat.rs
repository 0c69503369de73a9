//! Virtual adversarial training: the KL smoothness loss, its perturbation
//! found by finite-difference power iteration on the KL Hessian, and the
//! semi-supervised objective.

use alloc::{format, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::adversarial::{random_masked_direction, scale_to_norm, Perturbation, MIN_GRAD_NORM};
use crate::classifier::{cross_entropy_step, Classifier};
use crate::encoder::{BlockKind, EncodedInstance, PerturbScope};
use crate::error::{Error, Result};
use crate::numcore::{kl_divergence, softmax, Matrix, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VatConfig {
    /// Perturbation norm of the word-embedding block.
    pub eps_embedding: f64,
    /// Perturbation norm of each remaining feature block.
    pub eps_other: f64,
    pub xi: f64,
    pub power_iters: usize,
    pub lambda: f64,
    /// `|D_ul| / |D_l|` in non-star mode.
    pub unlabeled_ratio: usize,
    pub unlabeled_batch: usize,
    /// Use the labeled set, labels dropped, as the unlabeled pool.
    pub star: bool,
}

impl Default for VatConfig {
    fn default() -> Self {
        Self {
            eps_embedding: 2.0,
            eps_other: 0.01,
            xi: 1e-6,
            power_iters: 1,
            lambda: 1.0,
            unlabeled_ratio: 1,
            unlabeled_batch: 128,
            star: false,
        }
    }
}

impl VatConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("vat.eps_embedding", self.eps_embedding), ("vat.eps_other", self.eps_other), ("vat.xi", self.xi)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("vat.lambda must be non-negative, got {}", self.lambda)));
        }
        if self.power_iters == 0 || self.unlabeled_ratio == 0 || self.unlabeled_batch == 0 {
            return Err(Error::Config(format!(
                "vat.power_iters, vat.unlabeled_ratio and vat.unlabeled_batch must be positive ({}, {}, {})",
                self.power_iters, self.unlabeled_ratio, self.unlabeled_batch
            )));
        }
        Ok(())
    }
}

/// Virtual adversarial perturbation starting from a random direction.
pub fn vat_perturbation<C: Classifier>(
    model: &C,
    inst: &EncodedInstance,
    cfg: &VatConfig,
    rng: &mut RandomSource,
) -> Result<Perturbation> {
    let mask = inst.mask_for(PerturbScope::All);
    let d0 = random_masked_direction(&mask, 1.0, rng);
    vat_perturbation_from(model, inst, cfg, &d0)
}

/// Power iteration `d ← normalize(∇_r KL(p(x) ‖ p(x + r)) at r = ξd)` run
/// `cfg.power_iters` times from `d0`, followed by blockwise scaling: the
/// embedding block to `eps_embedding`, every other block to `eps_other`.
/// Blocks whose share of the direction is below 1e-12 are left at zero.
pub fn vat_perturbation_from<C: Classifier>(
    model: &C,
    inst: &EncodedInstance,
    cfg: &VatConfig,
    d0: &Matrix,
) -> Result<Perturbation> {
    let mask = inst.mask_for(PerturbScope::All);
    let mut d = d0.clone();
    d.hadamard_assign(&mask);
    let mut d = scale_to_norm(d, 1.0).r;
    if d.frobenius_norm() == 0.0 {
        return Ok(Perturbation::zeros_like(&inst.x));
    }
    let p = softmax(&model.forward(inst, &inst.x)?.0);
    for _ in 0..cfg.power_iters {
        let mut x_probe = inst.x.clone();
        x_probe.add_scaled(&d, cfg.xi);
        let (q_logits, cache) = model.forward(inst, &x_probe)?;
        let (_, d_q) = kl_divergence(&p, &q_logits)?;
        let mut g = model.backward(inst, &x_probe, &cache, &d_q, None)?;
        g.hadamard_assign(&mask);
        let next = scale_to_norm(g, 1.0);
        if next.is_zero() {
            return Ok(Perturbation::zeros_like(&inst.x));
        }
        d = next.r;
    }
    Ok(Perturbation { r: scale_blocks(d, inst, cfg) })
}

fn scale_blocks(mut d: Matrix, inst: &EncodedInstance, cfg: &VatConfig) -> Matrix {
    let rows = inst.valid_len.min(d.rows());
    for (kind, cols) in inst.layout.blocks() {
        let target = if kind == BlockKind::Embedding { cfg.eps_embedding } else { cfg.eps_other };
        let norm = libm::sqrt((0..rows).map(|r| d.row(r)[cols.clone()].iter().map(|v| v * v).sum::<f64>()).sum());
        let s = if norm < MIN_GRAD_NORM { 0.0 } else { target / norm };
        for r in 0..rows {
            d.row_mut(r)[cols.clone()].iter_mut().for_each(|v| *v *= s);
        }
    }
    d
}

/// L2 norm of `r` restricted to one feature block of `inst`'s layout.
pub fn block_norm(r: &Matrix, inst: &EncodedInstance, kind: BlockKind) -> f64 {
    let cols = inst.layout.range(kind);
    libm::sqrt((0..r.rows()).map(|row| r.row(row)[cols.clone()].iter().map(|v| v * v).sum::<f64>()).sum())
}

/// `KL(p(x) ‖ p(x + r))` with `p(x)` held constant: gradients (scaled by
/// `weight`) flow only through the perturbed pass.
pub fn vat_loss_with<C: Classifier>(
    model: &C,
    inst: &EncodedInstance,
    r: &Perturbation,
    weight: f64,
    grads: Option<&mut C::Grads>,
) -> Result<f64> {
    let p = softmax(&model.forward(inst, &inst.x)?.0);
    vat_loss_against(model, inst, &p, r, weight, grads)
}

/// `KL(p || q(x + r))` for a fixed target distribution `p`.
pub fn vat_loss_against<C: Classifier>(
    model: &C,
    inst: &EncodedInstance,
    p: &[f64],
    r: &Perturbation,
    weight: f64,
    grads: Option<&mut C::Grads>,
) -> Result<f64> {
    let x_adv = r.apply(&inst.x);
    let (q_logits, cache) = model.forward(inst, &x_adv)?;
    let (kl, d_q) = kl_divergence(p, &q_logits)?;
    if let Some(g) = grads {
        let d_q: Vec<f64> = d_q.iter().map(|v| v * weight).collect();
        model.backward(inst, &x_adv, &cache, &d_q, Some(g))?;
    }
    Ok(kl)
}

/// Draws `r_vadv` for `inst` and evaluates [`vat_loss_with`].
pub fn vat_loss<C: Classifier>(
    model: &C,
    inst: &EncodedInstance,
    cfg: &VatConfig,
    rng: &mut RandomSource,
    weight: f64,
    grads: Option<&mut C::Grads>,
) -> Result<f64> {
    let r = vat_perturbation(model, inst, cfg, rng)?;
    vat_loss_with(model, inst, &r, weight, grads)
}

/// Mean labeled cross-entropy plus `λ` times the mean VAT loss over the
/// unlabeled batch. Gradients of the objective accumulate into `grads`.
pub fn combined_vat_objective<C: Classifier>(
    model: &C,
    labeled: &[EncodedInstance],
    unlabeled: &[EncodedInstance],
    cfg: &VatConfig,
    rng: &mut RandomSource,
    grads: &mut C::Grads,
) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::Empty("labeled batch"));
    }
    let w = 1.0 / labeled.len() as f64;
    let mut supervised = 0.0;
    for inst in labeled {
        let label = inst.label.ok_or(Error::Empty("label on labeled instance"))?;
        supervised += cross_entropy_step(model, inst, &inst.x, label, w, Some(grads))?.0;
    }
    supervised *= w;
    if unlabeled.is_empty() || cfg.lambda == 0.0 {
        return Ok(supervised);
    }
    let wu = cfg.lambda / unlabeled.len() as f64;
    let mut smooth = 0.0;
    for inst in unlabeled {
        smooth += vat_loss(model, inst, cfg, rng, wu, Some(grads))?;
    }
    Ok(supervised + cfg.lambda * smooth / unlabeled.len() as f64)
}
