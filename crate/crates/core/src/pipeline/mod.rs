//! The training pipeline: run configuration, the cluster/train cycle
//! orchestrator, linear probing, sweeps, and experiment manifests.

pub mod config;
pub mod manifest;
pub mod orchestrator;
pub mod probe;
pub mod sweep;

pub use config::{load_config, RunConfig, CONFIG_FORMAT_VERSION};
pub use manifest::{
    read_manifest, write_manifest, ExperimentManifest, ManifestCommand, MANIFEST_FILE,
};
pub use orchestrator::{run_deepcluster, CycleRecord, RunLog, DIAGNOSTIC_CHECKPOINT};
pub use probe::{linear_probe, probe_seed, ProbeReport};
pub use sweep::{apply_axis, run_sweep, SweepAxis, SweepOutcome};
