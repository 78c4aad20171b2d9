//! Linear probing: multinomial logistic regression on frozen features.

use serde::{Deserialize, Serialize};

use crate::data::{ImageDataset, TransformSpec};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureMatrix};
use crate::nn::layers::Linear;
use crate::nn::sgd::sgd_step;
use crate::nn::{softmax_cross_entropy, Network};
use crate::rng::{derive_seed, shuffle, stream};
use crate::tensor::Tensor;

/// Probe optimizer settings (the probed network's own hyperparameters do
/// not apply to the probe head).
const PROBE_LR: f32 = 0.01;
const PROBE_MOMENTUM: f32 = 0.9;
const PROBE_BATCH: usize = 128;

/// Accuracy of a linear classifier trained on frozen features.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProbeReport {
    pub layer: String,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

fn argmax_rows(logits: &Tensor<f32>) -> Vec<u32> {
    let (n, k) = logits.dims2();
    let data = logits.data();
    (0..n)
        .map(|i| {
            let row = &data[i * k..(i + 1) * k];
            let mut best = 0usize;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

fn head_accuracy(head: &mut Linear, f: &FeatureMatrix, truth: &[u32]) -> f64 {
    let mut hits = 0usize;
    for start in (0..f.n).step_by(PROBE_BATCH) {
        let end = (start + PROBE_BATCH).min(f.n);
        let x = Tensor::from_vec(&[end - start, f.d], f.data[start * f.d..end * f.d].to_vec());
        let logits = head.forward(&x, false);
        let predicted = argmax_rows(&logits);
        hits += predicted.iter().zip(&truth[start..end]).filter(|(p, t)| p == t).count();
    }
    hits as f64 / f.n as f64
}

/// Freezes the network, extracts `layer` features for both datasets once
/// (deterministic Cluster-phase transforms, no augmentation), and trains a
/// softmax head with SGD (lr 0.01, momentum 0.9, batch 128) for `epochs`.
/// The feature extractor is bitwise untouched.
pub fn linear_probe(
    net: &mut Network,
    layer: &str,
    train: &ImageDataset,
    test: &ImageDataset,
    spec: &TransformSpec,
    epochs: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if layer != net.feature_layer() && layer != "features" {
        return Err(Error::Invalid(format!(
            "layer {layer:?} not probeable; this network exposes {:?} (alias \"features\")",
            net.feature_layer()
        )));
    }
    if epochs == 0 {
        return Err(Error::Config("probe epochs must be positive".into()));
    }
    let train_truth = train.labels_u32()?;
    let test_truth = test.labels_u32()?;
    let classes = train.class_count.max(test.class_count);
    let before = net.extractor_fingerprint();
    let train_f = extract_features(net, train, spec, PROBE_BATCH)?;
    let test_f = extract_features(net, test, spec, PROBE_BATCH)?;
    let mut head = Linear::<f32>::new(train_f.d, classes, &mut stream(seed, "probe-head", 0));
    let mut vw = vec![0.0f32; head.w.len()];
    let mut vb = vec![0.0f32; head.b.len()];
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train_f.n).collect();
        shuffle(&mut stream(seed, "probe-shuffle", epoch as u64), &mut order);
        for batch in order.chunks(PROBE_BATCH) {
            let mut x = Vec::with_capacity(batch.len() * train_f.d);
            let mut y = Vec::with_capacity(batch.len());
            for &i in batch {
                x.extend_from_slice(train_f.row(i));
                y.push(train_truth[i]);
            }
            let xt = Tensor::from_vec(&[batch.len(), train_f.d], x);
            let logits = head.forward(&xt, true);
            let (_, dlogits) = softmax_cross_entropy(&logits, &y)?;
            head.zero_grad();
            head.backward(&dlogits);
            sgd_step(&mut head.w, &head.dw, &mut vw, PROBE_LR, PROBE_MOMENTUM, 0.0);
            sgd_step(&mut head.b, &head.db, &mut vb, PROBE_LR, PROBE_MOMENTUM, 0.0);
        }
    }
    let train_accuracy = head_accuracy(&mut head, &train_f, &train_truth);
    let test_accuracy = head_accuracy(&mut head, &test_f, &test_truth);
    if net.extractor_fingerprint() != before {
        return Err(Error::Invalid("probe mutated the feature extractor".into()));
    }
    Ok(ProbeReport { layer: net.feature_layer().to_string(), epochs, train_accuracy, test_accuracy })
}

/// Derives the probe seed a run uses, so external callers reproduce the
/// run's own probe exactly.
pub fn probe_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, "probe", 0)
}
