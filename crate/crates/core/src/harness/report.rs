//! CSV and manifest output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{EffectiveConfig, ExperimentConfig, ScatteringConfig};
use super::sweep::{EntryResult, SweepReport};
use crate::effective::{csv_err, fmt_float, Trajectory};
use crate::error::{Error, Result};
use crate::scattering::{Calibration, ScatteringResult};

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Per-entry indicator table.
pub fn write_entry_csv<W: Write>(entry: &EntryResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(super::sweep::IndicatorRow::HEADER).map_err(csv_err)?;
    for row in &entry.rows {
        w.write_record(row.values().iter().map(|&x| fmt_float(x))).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// One line per ladder entry; the fitted exponent repeats on every line.
pub fn write_summary_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n1",
        "n2",
        "dim",
        "alpha_probe",
        "energy_manybody",
        "energy_effective",
        "energy_gap",
        "fitted_exponent",
        "status",
    ])
    .map_err(csv_err)?;
    let exponent = fmt_opt(report.fitted_exponent);
    for e in &report.entries {
        w.write_record([
            e.n1.to_string(),
            e.n2.to_string(),
            e.dim.to_string(),
            fmt_float(e.alpha_probe),
            fmt_float(e.energy_manybody),
            fmt_float(e.energy_effective),
            fmt_float(e.energy_gap()),
            exponent.clone(),
            e.status.label(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

fn write_manifest(dir: &Path, config_source: &str, seed: u64, wall: f64, files: &[PathBuf]) -> Result<PathBuf> {
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "wall_clock_seconds": wall,
        "config": config_source,
        "files": names,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `{prefix}_{N1}_{N2}.csv` per successful entry, `{prefix}_summary.csv`
/// and `manifest.json`; returns the paths written.
pub fn emit_report(report: &SweepReport, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut files = Vec::new();
    for e in report.entries.iter().filter(|e| e.is_ok()) {
        let path = dir.join(format!("{}_{}_{}.csv", config.prefix, e.n1, e.n2));
        write_entry_csv(e, create(&path)?)?;
        files.push(path);
    }
    let path = dir.join(format!("{}_summary.csv", config.prefix));
    write_summary_csv(report, create(&path)?)?;
    files.push(path);
    let manifest = write_manifest(dir, &config.source, report.seed, report.wall_clock_seconds, &files)?;
    files.push(manifest);
    Ok(files)
}

pub fn emit_effective(
    traj: &Trajectory,
    config: &EffectiveConfig,
    dir: &Path,
    wall: f64,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let path = dir.join(format!("{}.csv", config.prefix));
    traj.write_csv(create(&path)?)?;
    let mut files = vec![path];
    if config.snapshots {
        traj.write_snapshots(dir, &config.prefix)?;
    }
    let manifest = write_manifest(dir, &config.source, config.seed, wall, &files)?;
    files.push(manifest);
    Ok(files)
}

/// Results of a scattering run: the base potential, its rescalings and an
/// optional calibration.
#[derive(Clone, Debug)]
pub struct ScatteringReport {
    pub base: ScatteringResult,
    pub scaled: Vec<(u64, ScatteringResult)>,
    pub calibration: Option<Calibration>,
    pub wall_clock_seconds: f64,
}

pub fn emit_scattering(report: &ScatteringReport, config: &ScatteringConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut files = Vec::new();

    let path = dir.join(format!("{}_lengths.csv", config.prefix));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["n", "scattering_length", "g_l1", "g_l2", "g_linf"]).map_err(csv_err)?;
    let mut line = |n: String, r: &ScatteringResult| {
        w.write_record([
            n,
            fmt_float(r.scattering_length),
            fmt_float(r.norms.l1),
            fmt_float(r.norms.l2),
            fmt_float(r.norms.linf),
        ])
        .map_err(csv_err)
    };
    line(String::new(), &report.base)?;
    for (n, r) in &report.scaled {
        line(n.to_string(), r)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    drop(w);
    files.push(path);

    let path = dir.join(format!("{}_profile.csv", config.prefix));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["r", "f", "g"]).map_err(csv_err)?;
    let b = &report.base;
    for i in 0..b.radii.len() {
        w.write_record([fmt_float(b.radii[i]), fmt_float(b.f[i]), fmt_float(b.g[i])])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    drop(w);
    files.push(path);

    if let Some(cal) = &report.calibration {
        let path = dir.join(format!("{}_calibration.csv", config.prefix));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["c", "residual_scattering_length"]).map_err(csv_err)?;
        for &(c, a) in &cal.scan {
            w.write_record([fmt_float(c), fmt_float(a)]).map_err(csv_err)?;
        }
        w.write_record([fmt_float(cal.spec.constant()), fmt_float(cal.residual)])
            .map_err(csv_err)?;
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        drop(w);
        files.push(path);
    }
    let manifest = write_manifest(dir, &config.source, 0, report.wall_clock_seconds, &files)?;
    files.push(manifest);
    Ok(files)
}
