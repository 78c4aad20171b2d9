//! Experiment manifests: the exact resolved configuration of a command,
//! persisted to the output directory before any other artifact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, CONFIG_FORMAT_VERSION};
use crate::error::{Error, Result};

/// Which command produced an output directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestCommand {
    Run,
    Probe,
    IaSample,
    HaltSweep,
    KSweep,
    SeedSweep,
    PcaSweep,
    Export,
}

/// Snapshot of everything needed to replay a command. Feeding a manifest
/// file back as `--config` reproduces the run bitwise.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub format_version: u32,
    pub command: ManifestCommand,
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl ExperimentManifest {
    pub fn new(command: ManifestCommand, config: RunConfig, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentManifest {
            format_version: CONFIG_FORMAT_VERSION,
            command,
            config,
            out_dir: out_dir.into(),
        }
    }
}

/// File name every output directory starts with.
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_manifest(dir: &Path, manifest: &ExperimentManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<ExperimentManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ExperimentManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(&path, format!("bad manifest: {e}")))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::tests::table1_fmnist;

    #[test]
    fn manifest_roundtrips_through_its_directory() {
        let dir = tempfile::tempdir().unwrap();
        let manifest =
            ExperimentManifest::new(ManifestCommand::Run, table1_fmnist(), dir.path());
        write_manifest(dir.path(), &manifest).unwrap();
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn command_names_are_kebab_case() {
        let json = serde_json::to_string(&ManifestCommand::IaSample).unwrap();
        assert_eq!(json, "\"ia-sample\"");
        let json = serde_json::to_string(&ManifestCommand::KSweep).unwrap();
        assert_eq!(json, "\"k-sweep\"");
    }
}
