//! Run configuration: the JSON contract every experiment starts from.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{DatasetId, ImageDataset, Split, TransformSpec};
use crate::error::{Error, Result};
use crate::nn::{Architecture, NetworkConfig};

/// The config format this build reads and writes.
pub const CONFIG_FORMAT_VERSION: u32 = 1;

fn default_true() -> bool {
    true
}

fn default_epochs_per_cycle() -> usize {
    1
}

fn default_probe_epochs() -> usize {
    20
}

/// Full description of one training run. Serialized verbatim into run
/// manifests, so every field round-trips through JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub dataset: DatasetId,
    /// Deterministic training-set truncation; unset uses the full split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    /// Dataset root; unset falls back to `DCL_DATA_ROOT`, then `data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_root: Option<PathBuf>,
    pub architecture: Architecture,
    #[serde(default = "default_true")]
    pub use_batchnorm: bool,
    /// Preprocessing overrides; unset uses the dataset defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transforms: Option<TransformSpec>,
    pub learning_rate: f32,
    pub weight_decay: f32,
    pub momentum: f32,
    pub batch_size: usize,
    pub num_cycles: usize,
    #[serde(default = "default_epochs_per_cycle")]
    pub epochs_per_cycle: usize,
    pub num_clusters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_components: Option<usize>,
    /// Clustering stops after this many cycles (1-based); later cycles
    /// train on the last pseudo-labels. Unset clusters every cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halt_cycle: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_probe_epochs")]
    pub probe_epochs: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.format_version != CONFIG_FORMAT_VERSION {
            return fail(format!(
                "format_version {} unsupported (this build reads {CONFIG_FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.num_clusters < 2 {
            return fail(format!("num_clusters must be at least 2, got {}", self.num_clusters));
        }
        if self.num_cycles == 0 {
            return fail("num_cycles must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.epochs_per_cycle == 0 {
            return fail("epochs_per_cycle must be positive".into());
        }
        if self.probe_epochs == 0 {
            return fail("probe_epochs must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be nonnegative, got {}", self.weight_decay));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if let Some(h) = self.halt_cycle {
            if h == 0 || h > self.num_cycles {
                return fail(format!(
                    "halt_cycle {h} outside [1, num_cycles = {}]",
                    self.num_cycles
                ));
            }
        }
        if self.pca_components == Some(0) {
            return fail("pca_components must be positive when set".into());
        }
        if self.max_samples == Some(0) {
            return fail("max_samples must be positive when set".into());
        }
        self.resolved_transforms().validate(self.dataset.geometry().0)?;
        Ok(())
    }

    /// The transform chain this run uses: explicit overrides or the
    /// dataset defaults.
    pub fn resolved_transforms(&self) -> TransformSpec {
        self.transforms.clone().unwrap_or_else(|| self.dataset.default_transforms())
    }

    /// Network description implied by dataset geometry and transforms. The
    /// initial head width equals `num_clusters`; every clustering step
    /// resets it to the same width.
    pub fn network_config(&self) -> NetworkConfig {
        let spec = self.resolved_transforms();
        NetworkConfig {
            architecture: self.architecture,
            input_channels: self.dataset.geometry().0,
            input_size: spec.crop_size,
            use_batchnorm: self.use_batchnorm,
            use_sobel: spec.sobel,
            num_classes: self.num_clusters,
        }
    }

    /// Dataset root resolution order: config field, `DCL_DATA_ROOT`, `data`.
    pub fn resolve_data_root(&self) -> PathBuf {
        if let Some(root) = &self.data_root {
            return root.clone();
        }
        if let Ok(root) = env::var("DCL_DATA_ROOT") {
            if !root.is_empty() {
                return PathBuf::from(root);
            }
        }
        PathBuf::from("data")
    }

    /// Loads one split, applying `max_samples` truncation to the training
    /// split only (evaluation always sees the full split).
    pub fn load_split(&self, split: Split) -> Result<ImageDataset> {
        let ds = crate::data::load_dataset(&self.resolve_data_root(), self.dataset, split)?;
        Ok(match (split, self.max_samples) {
            (Split::Train, Some(max)) => ds.subset(max),
            _ => ds,
        })
    }
}

/// Reads a config file. A plain `RunConfig` JSON object is accepted as-is;
/// a run manifest (recognized by its `command` key) yields its embedded
/// config, so any recorded experiment can be replayed directly.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config_value = match &value {
        Value::Object(map) if map.contains_key("command") => map
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Config(format!("{}: manifest has no config", path.display())))?,
        _ => value,
    };
    let config: RunConfig = serde_json::from_value(config_value)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}
