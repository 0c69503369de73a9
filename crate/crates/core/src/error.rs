use alloc::string::String;

/// Errors raised by the numeric core and the model pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("window size {window} does not fit sequence of length {len}")]
    InvalidWindow { window: usize, len: usize },
    #[error("segment boundaries out of order: s1={s1} s2={s2} valid_len={valid_len}")]
    Boundary { s1: usize, s2: usize, valid_len: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid span: {0}")]
    Span(String),
    #[error("degenerate embedding table (max absolute component is zero)")]
    DegenerateEmbeddings,
    #[error("instance skipped: {0}")]
    InstanceSkipped(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot split {n} instances into {k} folds")]
    Folds { n: usize, k: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("non-finite loss at step {step} (lr={lr:e}, grad norm={grad_norm:e})")]
    NonFiniteLoss { step: usize, lr: f64, grad_norm: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
