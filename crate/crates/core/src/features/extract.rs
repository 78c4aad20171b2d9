//! Whole-dataset feature extraction through a frozen network.

use super::matrix::FeatureMatrix;
use crate::data::{transform_dataset, ImageDataset, Phase, TransformSpec};
use crate::error::Result;
use crate::nn::{Mode, Network, Upto};
use crate::tensor::Tensor;

/// Feeds every image through the network in Eval mode (deterministic
/// Cluster-phase transforms) and stacks the feature vectors in dataset
/// order. Results are independent of `batch_size`: Eval-mode batchnorm
/// uses running statistics, so samples never interact.
pub fn extract_features(
    net: &mut Network,
    ds: &ImageDataset,
    spec: &TransformSpec,
    batch_size: usize,
) -> Result<FeatureMatrix> {
    assert!(batch_size > 0, "batch_size must be positive");
    let prior_mode = net.mode();
    net.set_mode(Mode::Eval);
    let transformed = transform_dataset(ds, spec, Phase::Cluster, 0)?;
    let (n, c, h, w) = transformed.dims4();
    let d = net.feature_dim();
    let mut data = vec![0.0f32; n * d];
    let src = transformed.data();
    let image_len = c * h * w;
    for start in (0..n).step_by(batch_size) {
        let end = (start + batch_size).min(n);
        let batch = Tensor::from_vec(
            &[end - start, c, h, w],
            src[start * image_len..end * image_len].to_vec(),
        );
        let feats = net.forward(&batch, Upto::Features)?;
        data[start * d..end * d].copy_from_slice(feats.data());
    }
    net.set_mode(prior_mode);
    FeatureMatrix::new(n, d, data, net.feature_layer())
}
