//! Desk-scale laboratory for deep clustering: train a small convnet on its
//! own KMeans pseudo-labels, measure alignment/convergence diagnostics, and
//! evaluate the learned features with linear probes.

pub mod clustering;
pub mod data;
pub mod error;
pub mod features;
pub mod ia_select;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
