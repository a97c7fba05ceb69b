//! Configuration, experiment runners and report output.

mod config;
mod report;
mod sweep;

use std::time::Instant;

pub use config::{
    parse_config, parse_effective_config, parse_scattering_config, CalibrationRequest, EffectiveConfig,
    ExperimentConfig, OrbitalShape, PotentialShape, RadialShape, ScalingChoice, ScatteringConfig, DEFAULT_DT,
    DEFAULT_PROBE_TIME, DEFAULT_XI,
};
pub use report::{
    emit_effective, emit_report, emit_scattering, write_entry_csv, write_summary_csv, ScatteringReport,
};
pub use sweep::{run_convergence_sweep, run_entry, EntryResult, EntryStatus, IndicatorRow, SweepReport};

use crate::effective::{evolve, OrbitalState, Trajectory};
use crate::error::Result;
use crate::scattering::{calibrate_w, scattering_length, BoxPotentialSpec, CalibrationOptions};

/// Integrates the configured effective system; returns the trajectory and
/// the wall-clock time in seconds.
pub fn run_effective(config: &EffectiveConfig) -> Result<(Trajectory, f64)> {
    let start = Instant::now();
    let state = OrbitalState::new(config.initial_fields()?)?;
    let traj = evolve(&state, &config.spec, config.t_final, config.dt, config.sample_every)?;
    Ok((traj, start.elapsed().as_secs_f64()))
}

pub fn run_scattering(config: &ScatteringConfig) -> Result<ScatteringReport> {
    let start = Instant::now();
    let v = config.potential()?;
    let r_max = config.r_max.unwrap_or(3.0 * v.support_radius());
    let base = scattering_length(&v, r_max)?;
    let scaled = config
        .scaled
        .iter()
        .map(|&n| {
            let vn = v.scaled(n as f64, config.beta);
            let r = r_max * (n as f64).powf(-config.beta);
            Ok((n, scattering_length(&vn, r)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let calibration = match &config.calibration {
        None => None,
        Some(req) => {
            let n = req.particles as f64;
            let template = BoxPotentialSpec::template(req.species, base.scattering_length, req.beta, req.particles)?;
            Some(calibrate_w(&v.scaled(n, req.beta), &template, CalibrationOptions::default())?)
        }
    };
    Ok(ScatteringReport {
        base,
        scaled,
        calibration,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
