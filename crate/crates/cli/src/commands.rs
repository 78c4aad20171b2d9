//! Command implementations and the artifact writers they share.

use std::fs;
use std::path::Path;

use dcl_core::data::Split;
use dcl_core::features::extract_features;
use dcl_core::ia_select::{apply_hyperparam, rank_candidates, sample_ia};
use dcl_core::io::{load_checkpoint, save_checkpoint, write_fmat};
use dcl_core::pipeline::{
    linear_probe, load_config, probe_seed, read_manifest, run_deepcluster, run_sweep,
    write_manifest, CycleRecord, ExperimentManifest, ManifestCommand, ProbeReport, RunConfig,
    RunLog, SweepAxis, MANIFEST_FILE,
};
use dcl_core::{Error, Result};

use crate::ExportWhat;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.dckp";
pub const PROBE_FILE: &str = "probe.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const RANKING_FILE: &str = "ranking.csv";
pub const FEATURES_FILE: &str = "features.fmat";

/// Empty cell for absent values; numbers use shortest-round-trip formatting
/// so reruns produce byte-identical CSVs.
fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Creates `out`, refusing a directory that already holds a run, and
/// persists the manifest before anything else may be written there.
fn prepare_out_dir(out: &Path, command: ManifestCommand, config: &RunConfig) -> Result<()> {
    if out.join(MANIFEST_FILE).exists() {
        return Err(Error::Config(format!(
            "{} already contains {MANIFEST_FILE}; pick a fresh --out",
            out.display()
        )));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_manifest(out, &ExperimentManifest::new(command, config.clone(), out))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

fn write_metrics_csv(path: &Path, cycles: &[CycleRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["cycle", "inertia", "nmi_prev", "nmi_truth", "loss"])
        .map_err(|e| csv_err(path, e))?;
    for c in cycles {
        w.write_record([
            c.cycle.to_string(),
            c.inertia.to_string(),
            fmt_opt(c.nmi_prev),
            fmt_opt(c.nmi_truth),
            c.loss_mean.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_timings_csv(path: &Path, cycles: &[CycleRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["cycle", "extract_secs", "cluster_secs", "train_secs"])
        .map_err(|e| csv_err(path, e))?;
    for c in cycles {
        w.write_record([
            c.cycle.to_string(),
            c.extract_secs.to_string(),
            c.cluster_secs.to_string(),
            c.train_secs.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_probe_json(path: &Path, report: &ProbeReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("probe report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Everything a finished run leaves behind besides its manifest.
fn write_run_artifacts(dir: &Path, log: &RunLog, probe: &ProbeReport) -> Result<()> {
    write_metrics_csv(&dir.join(METRICS_FILE), &log.cycles)?;
    write_timings_csv(&dir.join(TIMINGS_FILE), &log.cycles)?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &log.net)?;
    write_probe_json(&dir.join(PROBE_FILE), probe)
}

pub fn run(config_path: &Path, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    config.validate()?;
    prepare_out_dir(out, ManifestCommand::Run, &config)?;
    let train = config.load_split(Split::Train)?;
    let test = config.load_split(Split::Test)?;
    let mut log = run_deepcluster(&config, &train, Some(out))?;
    let layer = log.net.feature_layer();
    let probe = linear_probe(
        &mut log.net,
        layer,
        &train,
        &test,
        &config.resolved_transforms(),
        config.probe_epochs,
        probe_seed(config.seed),
    )?;
    write_run_artifacts(out, &log, &probe)?;
    let last = log.cycles.last().expect("num_cycles >= 1");
    println!(
        "run complete: {} cycles, final loss {:.4}, probe test accuracy {:.4} -> {}",
        log.cycles.len(),
        last.loss_mean,
        probe.test_accuracy,
        out.display()
    );
    Ok(())
}

pub fn sweep(config_path: &Path, out: &Path, axis: &str, values: &[u64]) -> Result<()> {
    let base = load_config(config_path)?;
    base.validate()?;
    let axis: SweepAxis = axis.parse()?;
    let command = match axis {
        SweepAxis::K => ManifestCommand::KSweep,
        SweepAxis::Seed => ManifestCommand::SeedSweep,
        SweepAxis::Halt => ManifestCommand::HaltSweep,
        SweepAxis::Pca => ManifestCommand::PcaSweep,
    };
    prepare_out_dir(out, command, &base)?;
    let train = base.load_split(Split::Train)?;
    let test = base.load_split(Split::Test)?;
    let table_path = out.join(SWEEP_FILE);
    let mut table = csv_writer(&table_path)?;
    table
        .write_record([
            axis.name(),
            "ia",
            "final_inertia",
            "final_loss",
            "final_nmi_truth",
            "probe_train_accuracy",
            "probe_test_accuracy",
        ])
        .map_err(|e| csv_err(&table_path, e))?;
    table.flush().map_err(|e| Error::io(&table_path, e))?;
    // Each finished child is persisted (own directory + table row) before
    // the next one starts, so a failing child loses only itself.
    let outcomes = run_sweep(&base, axis, values, &train, &test, |child, log, outcome| {
        let child_dir = out.join(format!("{axis}-{}", outcome.value));
        prepare_out_dir(&child_dir, ManifestCommand::Run, child)?;
        write_run_artifacts(&child_dir, log, &outcome.probe)?;
        table
            .write_record([
                outcome.value.to_string(),
                fmt_opt(outcome.ia),
                outcome.final_inertia.to_string(),
                outcome.final_loss.to_string(),
                fmt_opt(outcome.final_nmi_truth),
                outcome.probe.train_accuracy.to_string(),
                outcome.probe.test_accuracy.to_string(),
            ])
            .map_err(|e| csv_err(&table_path, e))?;
        table.flush().map_err(|e| Error::io(&table_path, e))?;
        println!(
            "{axis}={}: probe test accuracy {:.4}",
            outcome.value, outcome.probe.test_accuracy
        );
        Ok(())
    })?;
    println!("sweep complete: {} children -> {}", outcomes.len(), table_path.display());
    Ok(())
}

pub fn ia_sample(
    config_path: &Path,
    out: &Path,
    hyperparam: &str,
    values: &[f64],
    seeds: usize,
    seed_base: u64,
) -> Result<()> {
    let base = load_config(config_path)?;
    base.validate()?;
    if values.is_empty() {
        return Err(Error::Config("ia-sample needs at least one value".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("candidate values must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    sorted.dedup();
    if sorted.len() != values.len() {
        return Err(Error::Config(format!("duplicate candidate values for {hyperparam}")));
    }
    for &value in &sorted {
        apply_hyperparam(&base, hyperparam, value)?;
    }
    prepare_out_dir(out, ManifestCommand::IaSample, &base)?;
    let ds = base.load_split(Split::Train)?;
    let samples_path = out.join(SAMPLES_FILE);
    let mut samples = csv_writer(&samples_path)?;
    samples
        .write_record(["hyperparam", "value", "seed", "ia"])
        .map_err(|e| csv_err(&samples_path, e))?;
    let mut dists = Vec::with_capacity(sorted.len());
    for &value in &sorted {
        let dist = sample_ia(&base, &ds, hyperparam, value, seeds, seed_base)?;
        for &(seed, ia) in &dist.samples {
            samples
                .write_record([
                    hyperparam.to_string(),
                    value.to_string(),
                    seed.to_string(),
                    ia.to_string(),
                ])
                .map_err(|e| csv_err(&samples_path, e))?;
        }
        samples.flush().map_err(|e| Error::io(&samples_path, e))?;
        println!(
            "{hyperparam}={value}: median {:.4} over {} seeds",
            dist.median,
            dist.sample_count()
        );
        dists.push(dist);
    }
    let ranked = if dists.len() > 1 { rank_candidates(&dists)? } else { dists };
    let ranking_path = out.join(RANKING_FILE);
    let mut ranking = csv_writer(&ranking_path)?;
    ranking
        .write_record(["rank", "value", "median", "p25", "samples"])
        .map_err(|e| csv_err(&ranking_path, e))?;
    for (i, d) in ranked.iter().enumerate() {
        ranking
            .write_record([
                (i + 1).to_string(),
                d.value.to_string(),
                d.median.to_string(),
                d.p25().to_string(),
                d.sample_count().to_string(),
            ])
            .map_err(|e| csv_err(&ranking_path, e))?;
    }
    ranking.flush().map_err(|e| Error::io(&ranking_path, e))?;
    println!(
        "best {hyperparam}: {} (median {:.4}) -> {}",
        ranked[0].value,
        ranked[0].median,
        ranking_path.display()
    );
    Ok(())
}

pub fn probe(checkpoint: &Path, layer: &str, config_path: &Path, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    config.validate()?;
    let mut net = load_checkpoint(checkpoint)?;
    if layer != net.feature_layer() && layer != "features" {
        return Err(Error::Config(format!(
            "layer {layer:?} is not probeable; this checkpoint exposes {:?} (alias \"features\")",
            net.feature_layer()
        )));
    }
    prepare_out_dir(out, ManifestCommand::Probe, &config)?;
    let train = config.load_split(Split::Train)?;
    let test = config.load_split(Split::Test)?;
    let report = linear_probe(
        &mut net,
        layer,
        &train,
        &test,
        &config.resolved_transforms(),
        config.probe_epochs,
        probe_seed(config.seed),
    )?;
    write_probe_json(&out.join(PROBE_FILE), &report)?;
    println!(
        "probe {}: train accuracy {:.4}, test accuracy {:.4}",
        report.layer, report.train_accuracy, report.test_accuracy
    );
    Ok(())
}

pub fn export(run_dir: &Path, what: ExportWhat) -> Result<()> {
    let manifest = read_manifest(run_dir)?;
    match what {
        ExportWhat::Metrics => {
            let path = run_dir.join(METRICS_FILE);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            print!("{text}");
        }
        ExportWhat::Features => {
            let mut net = load_checkpoint(&run_dir.join(CHECKPOINT_FILE))?;
            let ds = manifest.config.load_split(Split::Train)?;
            let f = extract_features(
                &mut net,
                &ds,
                &manifest.config.resolved_transforms(),
                manifest.config.batch_size,
            )?;
            let path = run_dir.join(FEATURES_FILE);
            write_fmat(&path, &f)?;
            println!("wrote {} ({} x {})", path.display(), f.n, f.d);
        }
    }
    Ok(())
}
