//! Piecewise-CNN relation classification with adversarial (FGM, multiple
//! adversarial examples) and virtual adversarial training.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI and
//! configuration parsing live in the `advreg` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adversarial;
pub mod classifier;
pub mod corpus;
pub mod encoder;
pub mod gradsuite;
mod error;
pub mod harness;
pub mod numcore;
pub mod pcnn;
pub mod synth;
pub mod toy;
pub mod vat;

pub use error::{Error, Result};
