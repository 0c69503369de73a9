//! Piecewise convolutional classifier: same-padded convolution over token
//! rows, max pooling over the three entity-delimited segments, tanh, and a
//! fully connected softmax layer.

use alloc::{format, vec, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::encoder::{EncodedInstance, FeatureTables, TableGrads};
use crate::error::{Error, Result};
use crate::numcore::{
    affine_backward, affine_forward, axpy, conv1d_backward_into, conv1d_forward_prefix, segment_max_pool,
    segment_max_pool_backward, softmax, tanh_backward, tanh_forward, Matrix, RandomSource,
};

pub const CLASSES: usize = 2;
pub const DEFAULT_FILTERS: usize = 400;
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcnnDims {
    pub input_dim: usize,
    pub filters: usize,
    pub window: usize,
}

/// Convolution and output-layer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pcnn {
    pub conv_filters: Matrix,
    pub conv_bias: Vec<f64>,
    pub fc_w: Matrix,
    pub fc_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcnnGrads {
    pub conv_filters: Matrix,
    pub conv_bias: Vec<f64>,
    pub fc_w: Matrix,
    pub fc_b: Vec<f64>,
}

impl PcnnGrads {
    pub fn sum_squares(&self) -> f64 {
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        sq(self.conv_filters.as_slice()) + sq(&self.conv_bias) + sq(self.fc_w.as_slice()) + sq(&self.fc_b)
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub featmap: Matrix,
    pub argmax: Vec<Option<usize>>,
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut RandomSource) -> Matrix {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    Matrix::filled_with(rows, cols, |_, _| rng.uniform(-bound, bound))
}

impl Pcnn {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(dims: PcnnDims, seed: u64) -> Self {
        let mut rng = RandomSource::new(seed);
        let conv_in = dims.window * dims.input_dim;
        let conv_filters = glorot(dims.filters, conv_in, conv_in, dims.filters, &mut rng);
        let fc_w = glorot(CLASSES, 3 * dims.filters, 3 * dims.filters, CLASSES, &mut rng);
        Self { conv_filters, conv_bias: vec![0.0; dims.filters], fc_w, fc_b: vec![0.0; CLASSES] }
    }

    pub fn zeros(dims: PcnnDims) -> Self {
        Self {
            conv_filters: Matrix::zeros(dims.filters, dims.window * dims.input_dim),
            conv_bias: vec![0.0; dims.filters],
            fc_w: Matrix::zeros(CLASSES, 3 * dims.filters),
            fc_b: vec![0.0; CLASSES],
        }
    }

    pub fn filters(&self) -> usize {
        self.conv_filters.rows()
    }

    pub fn zero_grads(&self) -> PcnnGrads {
        PcnnGrads {
            conv_filters: Matrix::zeros(self.conv_filters.rows(), self.conv_filters.cols()),
            conv_bias: vec![0.0; self.conv_bias.len()],
            fc_w: Matrix::zeros(self.fc_w.rows(), self.fc_w.cols()),
            fc_b: vec![0.0; self.fc_b.len()],
        }
    }

    /// Logits for input matrix `x`. Rows at or beyond `valid_len` are
    /// padding and read as zero.
    pub fn forward_matrix(&self, x: &Matrix, boundaries: (usize, usize), valid_len: usize) -> Result<(Vec<f64>, ForwardCache)> {
        if valid_len > x.rows() {
            return Err(Error::Dimension(format!("valid length {valid_len} exceeds {} input rows", x.rows())));
        }
        let featmap = conv1d_forward_prefix(x, &self.conv_filters, &self.conv_bias, valid_len)?;
        let pool = segment_max_pool(&featmap, boundaries, valid_len)?;
        let hidden = tanh_forward(&pool.pooled);
        let logits = affine_forward(&hidden, &self.fc_w, &self.fc_b)?;
        Ok((logits.clone(), ForwardCache { featmap, argmax: pool.argmax, pooled: pool.pooled, hidden, logits }))
    }

    pub fn forward(&self, inst: &EncodedInstance) -> Result<(Vec<f64>, ForwardCache)> {
        self.forward_matrix(&inst.x, inst.boundaries, inst.valid_len)
    }

    pub fn predict(&self, inst: &EncodedInstance) -> Result<Vec<f64>> {
        Ok(softmax(&self.forward(inst)?.0))
    }

    /// Backpropagation through output layer, tanh, pooling routes and the
    /// convolution. Parameter gradients accumulate into `grads` when given;
    /// the returned input gradient is unmasked.
    pub fn backward_matrix(
        &self,
        x: &Matrix,
        cache: &ForwardCache,
        d_logits: &[f64],
        grads: Option<&mut PcnnGrads>,
    ) -> Result<Matrix> {
        let f_count = self.filters();
        if cache.hidden.len() != 3 * f_count || d_logits.len() != self.fc_b.len() || cache.featmap.rows() > x.rows() {
            return Err(Error::Dimension(format!(
                "stale forward cache: {} pooled units for {f_count} filters",
                cache.hidden.len()
            )));
        }
        let (d_hidden, d_fc_w, d_fc_b) = affine_backward(&cache.hidden, &self.fc_w, d_logits)?;
        let d_pooled = tanh_backward(&cache.hidden, &d_hidden);
        let d_featmap = segment_max_pool_backward(&cache.argmax, &d_pooled, cache.featmap.rows(), f_count);
        let mut d_x = Matrix::zeros(x.rows(), x.cols());
        match grads {
            Some(g) => {
                g.fc_w.add_scaled(&d_fc_w, 1.0);
                axpy(1.0, &d_fc_b, &mut g.fc_b);
                conv1d_backward_into(
                    x,
                    &self.conv_filters,
                    &d_featmap,
                    Some(&mut d_x),
                    Some((&mut g.conv_filters, &mut g.conv_bias)),
                )?;
            }
            None => conv1d_backward_into(x, &self.conv_filters, &d_featmap, Some(&mut d_x), None)?,
        }
        Ok(d_x)
    }

    /// Parameter gradients and the input gradient masked by `inst.mask`.
    pub fn backward(&self, inst: &EncodedInstance, cache: &ForwardCache, d_logits: &[f64]) -> Result<(PcnnGrads, Matrix)> {
        let mut grads = self.zero_grads();
        let mut d_x = self.backward_matrix(&inst.x, cache, d_logits, Some(&mut grads))?;
        d_x.hadamard_assign(&inst.mask);
        Ok((grads, d_x))
    }
}

impl Classifier for Pcnn {
    type Grads = PcnnGrads;
    type Cache = ForwardCache;

    fn forward(&self, inst: &EncodedInstance, x: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
        self.forward_matrix(x, inst.boundaries, inst.valid_len)
    }

    fn backward(
        &self,
        _inst: &EncodedInstance,
        x: &Matrix,
        cache: &ForwardCache,
        d_logits: &[f64],
        grads: Option<&mut PcnnGrads>,
    ) -> Result<Matrix> {
        self.backward_matrix(x, cache, d_logits, grads)
    }

    fn zero_grads(&self) -> PcnnGrads {
        Pcnn::zero_grads(self)
    }
}

/// All trainable state: the network plus the lookup tables that build its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub net: Pcnn,
    pub tables: FeatureTables,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub net: PcnnGrads,
    pub tables: TableGrads,
}

impl ModelGrads {
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.net.sum_squares() + self.tables.sum_squares())
    }
}

impl ModelParams {
    pub fn dims(&self) -> PcnnDims {
        PcnnDims {
            input_dim: self.tables.layout.width(),
            filters: self.net.filters(),
            window: self.net.conv_filters.cols() / self.tables.layout.width(),
        }
    }
}

impl Classifier for ModelParams {
    type Grads = ModelGrads;
    type Cache = ForwardCache;

    fn forward(&self, inst: &EncodedInstance, x: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
        self.net.forward_matrix(x, inst.boundaries, inst.valid_len)
    }

    fn backward(
        &self,
        inst: &EncodedInstance,
        x: &Matrix,
        cache: &ForwardCache,
        d_logits: &[f64],
        grads: Option<&mut ModelGrads>,
    ) -> Result<Matrix> {
        match grads {
            Some(g) => {
                let d_x = self.net.backward_matrix(x, cache, d_logits, Some(&mut g.net))?;
                if let Some(ids) = &inst.ids {
                    self.tables.accumulate_grads(ids, &d_x, &mut g.tables);
                }
                Ok(d_x)
            }
            None => self.net.backward_matrix(x, cache, d_logits, None),
        }
    }

    fn zero_grads(&self) -> ModelGrads {
        ModelGrads { net: self.net.zero_grads(), tables: self.tables.zero_grads() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{FeatureLayout, PerturbScope};
    use crate::numcore::{conv1d_forward, softmax_cross_entropy};

    fn dims() -> PcnnDims {
        PcnnDims { input_dim: 12, filters: 8, window: 3 }
    }

    fn small_instance(seed: u64) -> EncodedInstance {
        let mut rng = RandomSource::new(seed);
        let valid_len = 4 + rng.below(7);
        let x = Matrix::filled_with(10, 12, |r, _| if r < valid_len { rng.uniform(-1.0, 1.0) } else { 0.0 });
        let s1 = rng.below(valid_len - 1);
        let s2 = s1 + 1 + rng.below(valid_len - s1 - 1);
        let layout = FeatureLayout::with_widths([4, 2, 2, 1, 1, 2]);
        EncodedInstance::from_matrix(x, valid_len, (s1, s2), layout, PerturbScope::Embedding, Some(rng.below(2))).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_bias_and_bounded_weights() {
        let a = Pcnn::init(dims(), 5);
        assert_eq!(a, Pcnn::init(dims(), 5));
        assert_ne!(a, Pcnn::init(dims(), 6));
        assert!(a.conv_bias.iter().chain(&a.fc_b).all(|&b| b == 0.0));
        let fc_bound = libm::sqrt(6.0 / (24.0 + 2.0));
        assert!(a.fc_w.as_slice().iter().all(|w| w.abs() <= fc_bound));
        let conv_bound = libm::sqrt(6.0 / (36.0 + 8.0));
        assert!(a.conv_filters.as_slice().iter().all(|w| w.abs() <= conv_bound));
        // The draws should actually spread over the interval.
        assert!(a.fc_w.max_abs() > 0.5 * fc_bound);
    }

    #[test]
    fn zero_model_predicts_uniform() {
        let inst = EncodedInstance::from_matrix(
            Matrix::zeros(10, 12),
            5,
            (1, 3),
            FeatureLayout::with_widths([4, 2, 2, 1, 1, 2]),
            PerturbScope::All,
            None,
        )
        .unwrap();
        let net = Pcnn::zeros(dims());
        let (logits, _) = net.forward(&inst).unwrap();
        assert_eq!(logits, vec![0.0, 0.0]);
        assert_eq!(net.predict(&inst).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn doubling_output_weights_doubles_logits() {
        let inst = small_instance(3);
        let mut net = Pcnn::init(dims(), 1);
        let (a, _) = net.forward(&inst).unwrap();
        net.fc_w.scale(2.0);
        let (b, _) = net.forward(&inst).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_composition_of_layers() {
        let inst = small_instance(9);
        let net = Pcnn::init(dims(), 2);
        let (logits, cache) = net.forward(&inst).unwrap();
        let full = conv1d_forward(&inst.x, &net.conv_filters, &net.conv_bias).unwrap();
        let featmap = Matrix::from_vec(inst.valid_len, 8, full.rows_slice(0, inst.valid_len).to_vec()).unwrap();
        let pool = segment_max_pool(&featmap, inst.boundaries, inst.valid_len).unwrap();
        let hidden = tanh_forward(&pool.pooled);
        let expected = affine_forward(&hidden, &net.fc_w, &net.fc_b).unwrap();
        assert_eq!(cache.pooled.len(), 24);
        for (a, b) in logits.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_invariant_to_logit_shift() {
        let inst = small_instance(4);
        let mut net = Pcnn::init(dims(), 3);
        let p = net.predict(&inst).unwrap();
        net.fc_b.iter_mut().for_each(|b| *b += 7.5);
        let q = net.predict(&inst).unwrap();
        assert!((p[0] - q[0]).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(net.predict(&inst).unwrap(), q);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let inst = small_instance(5);
        let net = Pcnn::init(dims(), 4);
        let (_, cache) = net.forward(&inst).unwrap();
        let (g, d_x) = net.backward(&inst, &cache, &[0.0, 0.0]).unwrap();
        assert_eq!(g.sum_squares(), 0.0);
        assert_eq!(d_x.max_abs(), 0.0);
    }

    #[test]
    fn masked_input_gradient_is_zero_outside_mask() {
        let inst = small_instance(6);
        let net = Pcnn::init(dims(), 6);
        let (logits, cache) = net.forward(&inst).unwrap();
        let ce = softmax_cross_entropy(&logits, inst.label.unwrap()).unwrap();
        let (_, d_x) = net.backward(&inst, &cache, &ce.d_logits).unwrap();
        for (g, m) in d_x.as_slice().iter().zip(inst.mask.as_slice()) {
            if *m == 0.0 {
                assert_eq!(*g, 0.0);
            }
        }
        assert!(d_x.max_abs() > 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let inst = small_instance(7);
        let net = Pcnn::init(dims(), 1);
        let other = Pcnn::init(PcnnDims { filters: 5, ..dims() }, 1);
        let (_, cache) = other.forward(&inst).unwrap();
        assert!(net.backward(&inst, &cache, &[1.0, -1.0]).is_err());
    }
}
