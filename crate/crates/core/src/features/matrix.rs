//! Dense N×D feature matrix produced by a network forward pass.

use crate::error::{Error, Result};

/// Row-major feature matrix: one row per dataset image, tagged with the
/// network layer the rows were read from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f32>,
    pub source_layer: String,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>, source_layer: impl Into<String>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Invalid(format!(
                "feature matrix: {} values for {n}×{d}",
                data.len()
            )));
        }
        let m = FeatureMatrix { n, d, data, source_layer: source_layer.into() };
        m.check_finite()?;
        Ok(m)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature matrix entry ({}, {})",
                pos / self.d,
                pos % self.d
            )));
        }
        Ok(())
    }
}
