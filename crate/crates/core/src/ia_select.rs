//! Hyperparameter selection without training: sample the alignment of
//! untrained-feature k-means with ground truth across many weight
//! initializations, then rank candidate values by median.

use serde::{Deserialize, Serialize};

use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::nn::build_network;
use crate::pipeline::config::RunConfig;
use crate::rng::derive_seed;

/// Seed count used by the CLI when none is given. Sampling variance at 20
/// is small enough that medians are stable across seed bases; 100 remains
/// available for tighter estimates.
pub const DESK_DEFAULT_N_SEEDS: usize = 20;

/// IA samples for one candidate value of one hyperparameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IaDistribution {
    pub hyperparam: String,
    pub value: f64,
    /// `(seed, ia)` pairs, one per weight initialization, in seed order.
    pub samples: Vec<(u64, f64)>,
    pub median: f64,
}

impl IaDistribution {
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// 25th percentile of the samples, the first ranking tie-breaker.
    pub fn p25(&self) -> f64 {
        let values: Vec<f64> = self.samples.iter().map(|&(_, v)| v).collect();
        p25(&values)
    }
}

/// Exact order-statistic median; even counts resolve to the midpoint of the
/// two central values.
fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("ia values are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// 25th percentile with linear interpolation between order statistics.
fn p25(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("ia values are finite"));
    let pos = 0.25 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn require_positive_integer(name: &str, value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 || value > u32::MAX as f64 {
        return Err(Error::Config(format!("{name} must be a positive integer, got {value}")));
    }
    Ok(value as usize)
}

/// Returns `base` with `name` set to `value`, re-validated. Accepts the
/// config fields whose choice the IA statistic is meant to guide.
pub fn apply_hyperparam(base: &RunConfig, name: &str, value: f64) -> Result<RunConfig> {
    let mut child = base.clone();
    match name {
        "k" => child.num_clusters = require_positive_integer(name, value)?,
        "pca" => child.pca_components = Some(require_positive_integer(name, value)?),
        "batch_size" => child.batch_size = require_positive_integer(name, value)?,
        "lr" => child.learning_rate = value as f32,
        "weight_decay" => child.weight_decay = value as f32,
        "momentum" => child.momentum = value as f32,
        other => {
            return Err(Error::Config(format!(
                "unknown hyperparameter {other:?}; expected k, pca, batch_size, lr, weight_decay, or momentum"
            )))
        }
    }
    child.validate()?;
    Ok(child)
}

/// Computes IA once per seed in `[seed_base, seed_base + n_seeds)`, each on
/// a freshly initialized network. No training occurs; every network is
/// discarded with its initial weights intact.
pub fn sample_ia(
    config: &RunConfig,
    ds: &ImageDataset,
    hyperparam: &str,
    value: f64,
    n_seeds: usize,
    seed_base: u64,
) -> Result<IaDistribution> {
    if n_seeds == 0 {
        return Err(Error::Config("n_seeds must be positive".into()));
    }
    let child = apply_hyperparam(config, hyperparam, value)?;
    let spec = child.resolved_transforms();
    let netcfg = child.network_config();
    let mut samples = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let seed = seed_base + i as u64;
        let mut net = build_network(&netcfg, derive_seed(seed, "init", 0))?;
        let ia = metrics::ia(
            &mut net,
            ds,
            &spec,
            child.pca_components,
            child.num_clusters,
            child.batch_size,
            seed,
        )?;
        samples.push((seed, ia));
    }
    let values: Vec<f64> = samples.iter().map(|&(_, v)| v).collect();
    Ok(IaDistribution {
        hyperparam: hyperparam.to_string(),
        value,
        median: median(&values),
        samples,
    })
}

/// Orders candidates best-first: descending median, ties broken by higher
/// 25th percentile, then by lower candidate value.
pub fn rank_candidates(dists: &[IaDistribution]) -> Result<Vec<IaDistribution>> {
    if dists.len() < 2 {
        return Err(Error::Invalid("ranking needs at least two distributions".into()));
    }
    let name = &dists[0].hyperparam;
    if dists.iter().any(|d| &d.hyperparam != name) {
        return Err(Error::Invalid("cannot rank distributions over different hyperparameters".into()));
    }
    let mut ranked = dists.to_vec();
    ranked.sort_by(|a, b| {
        b.median
            .partial_cmp(&a.median)
            .unwrap()
            .then(b.p25().partial_cmp(&a.p25()).unwrap())
            .then(a.value.partial_cmp(&b.value).unwrap())
    });
    Ok(ranked)
}
