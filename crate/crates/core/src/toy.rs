//! A softmax-linear classifier over a single input row, small enough to
//! analyse the VAT smoothness loss in closed form.

use alloc::vec;
use alloc::vec::Vec;

use crate::classifier::Classifier;
use crate::encoder::{EncodedInstance, FeatureLayout, PerturbScope};
use crate::error::{Error, Result};
use crate::numcore::{kl_divergence, softmax, Matrix, RandomSource};

/// `logits = W x` for `x` a `1 × n` input.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinear {
    pub w: Matrix,
}

impl SoftmaxLinear {
    pub fn random(classes: usize, inputs: usize, scale: f64, rng: &mut RandomSource) -> Self {
        Self { w: Matrix::filled_with(classes, inputs, |_, _| rng.uniform(-scale, scale)) }
    }

    /// Wraps `x` as an instance whose single feature block is the embedding block.
    pub fn instance(x: &[f64]) -> EncodedInstance {
        let layout = FeatureLayout::with_widths([x.len(), 0, 0, 0, 0, 0]);
        let m = Matrix::from_vec(1, x.len(), x.to_vec()).expect("row input");
        EncodedInstance::from_matrix(m, 1, (0, 0), layout, PerturbScope::All, None).expect("toy instance")
    }
}

impl Classifier for SoftmaxLinear {
    type Grads = Matrix;
    type Cache = ();

    fn forward(&self, _inst: &EncodedInstance, x: &Matrix) -> Result<(Vec<f64>, ())> {
        if x.shape() != (1, self.w.cols()) {
            return Err(Error::Dimension(alloc::format!("toy input {:?}, expected (1, {})", x.shape(), self.w.cols())));
        }
        Ok(((0..self.w.rows()).map(|c| crate::numcore::dot(self.w.row(c), x.row(0))).collect(), ()))
    }

    fn backward(
        &self,
        _inst: &EncodedInstance,
        x: &Matrix,
        _cache: &(),
        d_logits: &[f64],
        mut grads: Option<&mut Matrix>,
    ) -> Result<Matrix> {
        let mut dx = Matrix::zeros(1, self.w.cols());
        for (c, &g) in d_logits.iter().enumerate() {
            crate::numcore::axpy(g, self.w.row(c), dx.row_mut(0));
            if let Some(gw) = grads.as_deref_mut().map(|m| m.row_mut(c)) {
                crate::numcore::axpy(g, x.row(0), gw);
            }
        }
        Ok(dx)
    }

    fn zero_grads(&self) -> Matrix {
        Matrix::zeros(self.w.rows(), self.w.cols())
    }
}

/// `KL(p(x) ‖ p(x + r))` evaluated directly.
pub fn toy_kl(model: &SoftmaxLinear, x: &[f64], r: &[f64]) -> f64 {
    let inst = SoftmaxLinear::instance(x);
    let p = softmax(&model.forward(&inst, &inst.x).expect("toy forward").0);
    let xr: Vec<f64> = x.iter().zip(r).map(|(a, b)| a + b).collect();
    let q = model.forward(&inst, &Matrix::from_vec(1, xr.len(), xr).expect("row")).expect("toy forward").0;
    kl_divergence(&p, &q).expect("valid p").0
}

/// Central second differences of [`toy_kl`] in `r` at `r = 0`.
pub fn kl_hessian_fd(model: &SoftmaxLinear, x: &[f64], h: f64) -> Matrix {
    let n = x.len();
    let k = |r: &[f64]| toy_kl(model, x, r);
    let mut hess = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let at = |si: f64, sj: f64| {
                let mut r = vec![0.0; n];
                r[i] += si * h;
                r[j] += sj * h;
                k(&r)
            };
            hess.as_mut_slice()[i * n + j] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    hess
}

/// Unit eigenvector of the largest eigenvalue of a symmetric 2×2 matrix.
pub fn dominant_eigenvector_2x2(m: &Matrix) -> [f64; 2] {
    let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let theta = 0.5 * libm::atan2(2.0 * b, a - d);
    [libm::cos(theta), libm::sin(theta)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvector_of_diagonal_and_rotated() {
        let m = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 3.0]]).unwrap();
        let v = dominant_eigenvector_2x2(&m);
        assert!(v[0].abs() < 1e-12 && (v[1].abs() - 1.0).abs() < 1e-12);
        let m = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let v = dominant_eigenvector_2x2(&m);
        assert!((v[0] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn hessian_matches_closed_form() {
        let mut rng = RandomSource::new(3);
        let model = SoftmaxLinear::random(2, 2, 1.0, &mut rng);
        let x = [0.3, -0.7];
        let inst = SoftmaxLinear::instance(&x);
        let p = softmax(&model.forward(&inst, &inst.x).unwrap().0);
        let h = kl_hessian_fd(&model, &x, 1e-4);
        for i in 0..2 {
            for j in 0..2 {
                let mut e = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        let cov = if a == b { p[a] * (1.0 - p[a]) } else { -p[a] * p[b] };
                        e += model.w[(a, i)] * cov * model.w[(b, j)];
                    }
                }
                assert!((h[(i, j)] - e).abs() < 1e-6, "{i}{j}: {} vs {e}", h[(i, j)]);
            }
        }
    }
}
