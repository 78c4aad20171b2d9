//! The cluster→train loop: alternate pseudo-label generation and supervised
//! epochs for a configured number of cycles.

use std::path::Path;
use std::time::Instant;

use super::config::RunConfig;
use crate::clustering::{kmeans, KMEANS_MAX_ITER, KMEANS_TOL};
use crate::data::{transform_dataset, ImageDataset, Phase};
use crate::error::{Error, Result};
use crate::features::{extract_features, fit_pca, postprocess};
use crate::io::save_checkpoint;
use crate::metrics::{cycle_consistency, nmi};
use crate::nn::{build_network, Mode, Network, Sgd, Upto};
use crate::rng::{derive_seed, shuffle, stream};
use crate::tensor::Tensor;

/// Everything measured during one cycle.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub cycle: usize,
    /// KMeans objective of the labels trained on this cycle (carried
    /// forward unchanged through halted cycles).
    pub inertia: f64,
    /// NMI against the previous cycle's pseudo-labels; absent at cycle 0.
    pub nmi_prev: Option<f64>,
    /// NMI against ground truth, when the dataset has labels.
    pub nmi_truth: Option<f64>,
    pub loss_mean: f64,
    pub extract_secs: f64,
    pub cluster_secs: f64,
    pub train_secs: f64,
}

/// Output of [`run_deepcluster`]: per-cycle records, the pseudo-label
/// history, and the trained network.
#[derive(Debug)]
pub struct RunLog {
    pub cycles: Vec<CycleRecord>,
    pub labels_per_cycle: Vec<Vec<u32>>,
    pub net: Network,
    pub clustering_invocations: usize,
}

/// File written next to the run outputs when a cycle produces non-finite
/// values, capturing the network state at the failure.
pub const DIAGNOSTIC_CHECKPOINT: &str = "diagnostic.dckp";

fn non_finite_abort(
    err: Error,
    cycle: usize,
    net: &Network,
    diagnostics_dir: Option<&Path>,
) -> Error {
    let mut message = format!("cycle {cycle}: {err}");
    if let Some(dir) = diagnostics_dir {
        let path = dir.join(DIAGNOSTIC_CHECKPOINT);
        match save_checkpoint(&path, net) {
            Ok(()) => message.push_str(&format!("; network state saved to {}", path.display())),
            Err(save_err) => message.push_str(&format!("; diagnostic save failed: {save_err}")),
        }
    }
    Error::NonFinite(message)
}

/// Runs the full loop on an already-loaded dataset. Each cycle either
/// clusters fresh features (Eval-mode extraction, optional PCA+whitening,
/// L2 normalization, KMeans) and resets the head, or — once `halt_cycle`
/// clustering rounds have happened — reuses the previous labels; it then
/// trains `epochs_per_cycle` shuffled epochs of SGD. A non-finite loss or
/// activation aborts the run, saving a diagnostic checkpoint into
/// `diagnostics_dir` when one is given.
pub fn run_deepcluster(
    config: &RunConfig,
    ds: &ImageDataset,
    diagnostics_dir: Option<&Path>,
) -> Result<RunLog> {
    config.validate()?;
    let spec = config.resolved_transforms();
    let truth = ds.labels.as_ref().map(|_| ds.labels_u32()).transpose()?;
    let mut net = build_network(&config.network_config(), derive_seed(config.seed, "init", 0))?;
    let mut sgd = Sgd::new(config.learning_rate, config.momentum, config.weight_decay)?;
    let kmeans_seed = derive_seed(config.seed, "kmeans", 0);
    let mut cycles: Vec<CycleRecord> = Vec::with_capacity(config.num_cycles);
    let mut labels_per_cycle: Vec<Vec<u32>> = Vec::with_capacity(config.num_cycles);
    let mut clustering_invocations = 0usize;
    let mut last_inertia = f64::NAN;
    for cycle in 0..config.num_cycles {
        let clustering_active = config.halt_cycle.map_or(true, |h| cycle < h);
        let (labels, inertia, extract_secs, cluster_secs) = if clustering_active {
            let t_extract = Instant::now();
            let raw = extract_features(&mut net, ds, &spec, config.batch_size)
                .map_err(|e| non_finite_abort(e, cycle, &net, diagnostics_dir))?;
            let extract_secs = t_extract.elapsed().as_secs_f64();
            let t_cluster = Instant::now();
            let pca = match config.pca_components {
                Some(d) => Some(fit_pca(&raw, d)?),
                None => None,
            };
            let processed = postprocess(&raw, pca.as_ref())?;
            let result = kmeans(&processed, config.num_clusters, kmeans_seed, KMEANS_MAX_ITER, KMEANS_TOL)?;
            let cluster_secs = t_cluster.elapsed().as_secs_f64();
            clustering_invocations += 1;
            net.reset_head(config.num_clusters, derive_seed(config.seed, "head", cycle as u64))?;
            sgd.reset_velocity("head.");
            (result.assignments, result.inertia, extract_secs, cluster_secs)
        } else {
            let labels = labels_per_cycle.last().expect("halt_cycle ≥ 1 guarantees a prior cycle").clone();
            (labels, last_inertia, 0.0, 0.0)
        };
        let nmi_prev = match labels_per_cycle.last() {
            Some(prev) => Some(cycle_consistency(prev, &labels)?),
            None => None,
        };
        let nmi_truth = match &truth {
            Some(t) => Some(nmi(&labels, t)?),
            None => None,
        };
        let t_train = Instant::now();
        let loss_mean = train_cycle(config, ds, &mut net, &mut sgd, &labels, cycle)
            .map_err(|e| non_finite_abort(e, cycle, &net, diagnostics_dir))?;
        let train_secs = t_train.elapsed().as_secs_f64();
        last_inertia = inertia;
        cycles.push(CycleRecord {
            cycle,
            inertia,
            nmi_prev,
            nmi_truth,
            loss_mean,
            extract_secs,
            cluster_secs,
            train_secs,
        });
        labels_per_cycle.push(labels);
    }
    Ok(RunLog { cycles, labels_per_cycle, net, clustering_invocations })
}

/// One cycle's training: `epochs_per_cycle` passes over freshly transformed
/// (train-phase) images in a seeded shuffle order. Returns the mean
/// per-sample loss across the whole cycle.
fn train_cycle(
    config: &RunConfig,
    ds: &ImageDataset,
    net: &mut Network,
    sgd: &mut Sgd,
    labels: &[u32],
    cycle: usize,
) -> Result<f64> {
    net.set_mode(Mode::Train);
    let spec = config.resolved_transforms();
    let mut loss_sum = 0.0f64;
    let mut sample_count = 0usize;
    for epoch in 0..config.epochs_per_cycle {
        let salt = ((cycle as u64) << 32) | epoch as u64;
        let transformed =
            transform_dataset(ds, &spec, Phase::Train, derive_seed(config.seed, "epoch", salt))?;
        let (_, c, h, w) = transformed.dims4();
        let image_len = c * h * w;
        let src = transformed.data();
        let mut order: Vec<usize> = (0..ds.n).collect();
        shuffle(&mut stream(config.seed, "shuffle", salt), &mut order);
        for batch_indices in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(batch_indices.len() * image_len);
            let mut targets = Vec::with_capacity(batch_indices.len());
            for &i in batch_indices {
                batch.extend_from_slice(&src[i * image_len..(i + 1) * image_len]);
                targets.push(labels[i]);
            }
            let x = Tensor::from_vec(&[batch_indices.len(), c, h, w], batch);
            let logits = net.forward(&x, Upto::Logits)?;
            let (loss, dlogits) = crate::nn::softmax_cross_entropy(&logits, &targets)?;
            net.zero_grad();
            net.backward(&dlogits)?;
            sgd.step(net);
            loss_sum += loss * batch_indices.len() as f64;
            sample_count += batch_indices.len();
        }
    }
    Ok(loss_sum / sample_count as f64)
}
