//! Feature extraction and postprocessing ahead of clustering.

pub mod extract;
pub mod matrix;
pub mod pca;
pub mod postprocess;

pub use extract::extract_features;
pub use matrix::FeatureMatrix;
pub use pca::{fit_pca, PcaModel, WHITEN_EPSILON};
pub use postprocess::{l2_normalize_rows, postprocess};
