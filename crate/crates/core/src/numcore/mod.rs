//! Dense numerics: matrices, layer forward/backward contracts, losses, a
//! finite-difference checker and the seedable random source.

mod gradcheck;
mod layers;
mod loss;
mod matrix;
mod rng;

pub use gradcheck::{grad_check, grad_check_with_step, relative_error, FD_STEP};
pub use layers::{
    affine_backward, affine_forward, conv1d_backward, conv1d_backward_into, conv1d_forward,
    conv1d_forward_prefix, segment_max_pool, segment_max_pool_backward, segment_ranges, tanh_backward,
    tanh_forward, ConvGrads, ConvShape, SegmentPool,
};
pub use loss::{kl_divergence, log_sum_exp, softmax, softmax_cross_entropy, CrossEntropy, DISTRIBUTION_TOLERANCE};
pub use matrix::{axpy, dot, l2_norm, Matrix};
pub use rng::RandomSource;
