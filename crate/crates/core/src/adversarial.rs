//! Supervised adversarial training: fast-gradient perturbations, the
//! multi-example set built by jittering them, and the combined loss.

use alloc::{format, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::classifier::{add_matrices, cross_entropy_step, Classifier};
use crate::encoder::{EncodedInstance, PerturbScope};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, RandomSource};

/// Gradients below this norm are treated as a flat loss surface.
pub const MIN_GRAD_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvConfig {
    pub epsilon: f64,
    pub scope: PerturbScope,
    /// Size of the adversarial set; 0 disables the adversarial term.
    pub m: usize,
    /// Norm of each jitter relative to `epsilon`.
    pub jitter_ratio: f64,
    pub alpha: f64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        Self { epsilon: 0.01, scope: PerturbScope::Embedding, m: 1, jitter_ratio: 0.1, alpha: 1.0 }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("adv.epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !(self.jitter_ratio > 0.0 && self.jitter_ratio < 1.0) {
            return Err(Error::Config(format!("adv.jitter_ratio must lie in (0, 1), got {}", self.jitter_ratio)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("adv.alpha must be non-negative, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// An additive input perturbation, zero outside its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub r: Matrix,
}

impl Perturbation {
    pub fn zeros_like(x: &Matrix) -> Self {
        Self { r: Matrix::zeros(x.rows(), x.cols()) }
    }

    pub fn norm(&self) -> f64 {
        self.r.frobenius_norm()
    }

    pub fn is_zero(&self) -> bool {
        self.r.as_slice().iter().all(|&v| v == 0.0)
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        add_matrices(x, &self.r)
    }
}

/// `epsilon · g / ‖g‖₂` for the masked loss gradient `g`, or zero when
/// `‖g‖₂` falls below [`MIN_GRAD_NORM`]. Model gradients are not touched.
pub fn fgm_perturbation<C: Classifier>(model: &C, inst: &EncodedInstance, label: usize, cfg: &AdvConfig) -> Result<Perturbation> {
    let (_, mut g) = cross_entropy_step(model, inst, &inst.x, label, 1.0, None)?;
    g.hadamard_assign(&inst.mask_for(cfg.scope));
    Ok(scale_to_norm(g, cfg.epsilon))
}

/// Rescales `g` to L2 norm `target`; zero when `g` is (numerically) zero.
pub(crate) fn scale_to_norm(mut g: Matrix, target: f64) -> Perturbation {
    let n = g.frobenius_norm();
    if n < MIN_GRAD_NORM {
        g.fill(0.0);
    } else {
        g.scale(target / n);
    }
    Perturbation { r: g }
}

/// Standard-normal direction over the non-zero entries of `mask`, scaled to
/// norm `target`.
pub(crate) fn random_masked_direction(mask: &Matrix, target: f64, rng: &mut RandomSource) -> Matrix {
    let mut d = Matrix::zeros(mask.rows(), mask.cols());
    for (v, &m) in d.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        if m != 0.0 {
            *v = rng.normal() * m;
        }
    }
    scale_to_norm(d, target).r
}

/// The adversarial set `{r_adv + e_i}` of size `cfg.m`: element 0 is `r_adv`
/// itself, every later element adds an isotropic jitter of norm
/// `jitter_ratio · epsilon` restricted to `mask`.
pub fn multi_adv_set(r_adv: &Perturbation, mask: &Matrix, cfg: &AdvConfig, rng: &mut RandomSource) -> Vec<Perturbation> {
    let mut set = Vec::with_capacity(cfg.m);
    if cfg.m == 0 {
        return set;
    }
    set.push(r_adv.clone());
    for _ in 1..cfg.m {
        let e = random_masked_direction(mask, cfg.jitter_ratio * cfg.epsilon, rng);
        let mut r = add_matrices(&r_adv.r, &e);
        r.hadamard_assign(mask);
        set.push(Perturbation { r });
    }
    set
}

/// `L(x,y) + α Σ_{r ∈ D_adv} L(x + r, y)` for one labeled instance.
///
/// Gradients of every pass, scaled by `weight` (and `α` for adversarial
/// passes), accumulate into `grads`. Perturbations are constants.
pub fn adversarial_loss<C: Classifier>(
    model: &C,
    inst: &EncodedInstance,
    cfg: &AdvConfig,
    rng: &mut RandomSource,
    weight: f64,
    grads: &mut C::Grads,
) -> Result<f64> {
    let label = inst.label.ok_or(Error::Empty("label on adversarial training instance"))?;
    let (mut loss, _) = cross_entropy_step(model, inst, &inst.x, label, weight, Some(grads))?;
    if cfg.m == 0 {
        return Ok(loss);
    }
    let r_adv = fgm_perturbation(model, inst, label, cfg)?;
    let mask = inst.mask_for(cfg.scope);
    for r in multi_adv_set(&r_adv, &mask, cfg, rng) {
        let x_adv = r.apply(&inst.x);
        let (l, _) = cross_entropy_step(model, inst, &x_adv, label, weight * cfg.alpha, Some(grads))?;
        loss += cfg.alpha * l;
    }
    Ok(loss)
}
