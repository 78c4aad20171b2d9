//! Hyperparameter sweeps: one full run per candidate value, shared base
//! config, results aggregated into a comparison table.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::nn::build_network;
use crate::pipeline::config::RunConfig;
use crate::pipeline::orchestrator::{run_deepcluster, RunLog};
use crate::pipeline::probe::{linear_probe, probe_seed, ProbeReport};
use crate::rng::derive_seed;

/// Which config field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    Seed,
    Halt,
    Pca,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Seed => "seed",
            SweepAxis::Halt => "halt",
            SweepAxis::Pca => "pca",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "seed" => Ok(SweepAxis::Seed),
            "halt" => Ok(SweepAxis::Halt),
            "pca" => Ok(SweepAxis::Pca),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?}; expected k, seed, halt, or pca"
            ))),
        }
    }
}

/// Summary row for one sweep child, flattened for the comparison CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub value: u64,
    /// Alignment of k-means on the *untrained* network with ground truth.
    /// Absent on the halt axis, where it is constant by construction.
    pub ia: Option<f64>,
    pub final_inertia: f64,
    pub final_loss: f64,
    pub final_nmi_truth: Option<f64>,
    pub probe: ProbeReport,
}

/// Returns `base` with `axis` set to `value` and the result re-validated.
pub fn apply_axis(base: &RunConfig, axis: SweepAxis, value: u64) -> Result<RunConfig> {
    let mut child = base.clone();
    match axis {
        SweepAxis::K => child.num_clusters = value as usize,
        SweepAxis::Seed => child.seed = value,
        SweepAxis::Halt => child.halt_cycle = Some(value as usize),
        SweepAxis::Pca => child.pca_components = Some(value as usize),
    }
    child.validate()?;
    Ok(child)
}

/// Runs one full pipeline (clustered training + linear probe) per value.
///
/// Values are deduplicated and processed in ascending order, which is also
/// the output order. All child configs are validated before the first run
/// starts; runtime failures abort the sweep but `on_child` has already seen
/// every completed entry, so partial results survive.
pub fn run_sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[u64],
    train: &ImageDataset,
    test: &ImageDataset,
    mut on_child: impl FnMut(&RunConfig, &RunLog, &SweepOutcome) -> Result<()>,
) -> Result<Vec<SweepOutcome>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != values.len() {
        return Err(Error::Config(format!("duplicate values in {axis} sweep")));
    }
    let children: Vec<RunConfig> = sorted
        .iter()
        .map(|&v| apply_axis(base, axis, v))
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::with_capacity(children.len());
    for (child, &value) in children.iter().zip(&sorted) {
        let ia = match axis {
            SweepAxis::Halt => None,
            _ => {
                let mut fresh =
                    build_network(&child.network_config(), derive_seed(child.seed, "init", 0))?;
                Some(metrics::ia(
                    &mut fresh,
                    train,
                    &child.resolved_transforms(),
                    child.pca_components,
                    child.num_clusters,
                    child.batch_size,
                    child.seed,
                )?)
            }
        };
        let mut log = run_deepcluster(child, train, None)?;
        let layer = log.net.feature_layer();
        let probe = linear_probe(
            &mut log.net,
            layer,
            train,
            test,
            &child.resolved_transforms(),
            child.probe_epochs,
            probe_seed(child.seed),
        )?;
        let last = log.cycles.last().expect("num_cycles >= 1 is validated");
        let outcome = SweepOutcome {
            value,
            ia,
            final_inertia: last.inertia,
            final_loss: last.loss_mean,
            final_nmi_truth: last.nmi_truth,
            probe,
        };
        on_child(child, &log, &outcome)?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}
