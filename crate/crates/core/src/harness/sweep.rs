//! The convergence ladder: exact dynamics against the effective Hartree flow
//! for a sequence of particle numbers.

use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::effective::{hartree_energy, step, OrbitalState};
use crate::error::Result;
use crate::indicators::{
    alpha_11, counting_projectors, derivative_decomposition, reduce, trace_distance, weight_expectation, weight_m,
    MarginalKind, Species, WeightFunction,
};
use crate::manybody::{
    build_basis_with_cap, energy_with, product_state, Hamiltonian, KrylovOptions, ManyBodyState, Propagator,
};

/// Indicators of one many-body state against the effective orbitals at the
/// same time. `C_*_im` are the imaginary parts of the derivative terms; the
/// weights are species-A expectations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndicatorRow {
    pub t: f64,
    pub alpha_11: f64,
    pub trace_dist: f64,
    pub alpha_10: f64,
    pub alpha_01: f64,
    pub c_v1_im: f64,
    pub c_v2_im: f64,
    pub c_v12_im: f64,
    pub weight_s: f64,
    pub weight_n: f64,
    pub weight_m: f64,
}

impl IndicatorRow {
    pub const HEADER: [&'static str; 11] = [
        "t",
        "alpha_11",
        "trace_dist",
        "alpha_10",
        "alpha_01",
        "C_V1_im",
        "C_V2_im",
        "C_V12_im",
        "weight_s",
        "weight_n",
        "weight_m",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.t,
            self.alpha_11,
            self.trace_dist,
            self.alpha_10,
            self.alpha_01,
            self.c_v1_im,
            self.c_v2_im,
            self.c_v12_im,
            self.weight_s,
            self.weight_n,
            self.weight_m,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EntryStatus {
    Ok,
    Failed(String),
}

impl EntryStatus {
    pub fn label(&self) -> String {
        match self {
            EntryStatus::Ok => "ok".into(),
            EntryStatus::Failed(msg) => format!("error: {msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryResult {
    pub n1: usize,
    pub n2: usize,
    pub dim: usize,
    pub rows: Vec<IndicatorRow>,
    /// `α⁽¹'¹⁾` at the probe time.
    pub alpha_probe: f64,
    /// Energies per particle at `t = 0`.
    pub energy_manybody: f64,
    pub energy_effective: f64,
    pub status: EntryStatus,
}

impl EntryResult {
    pub fn energy_gap(&self) -> f64 {
        (self.energy_manybody - self.energy_effective).abs()
    }

    pub fn is_ok(&self) -> bool {
        self.status == EntryStatus::Ok
    }

    fn failed(n1: usize, n2: usize, message: String) -> Self {
        EntryResult {
            n1,
            n2,
            dim: 0,
            rows: Vec::new(),
            alpha_probe: f64::NAN,
            energy_manybody: f64::NAN,
            energy_effective: f64::NAN,
            status: EntryStatus::Failed(message),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub entries: Vec<EntryResult>,
    /// Least-squares slope of `log α(t*)` against `log(N₁+N₂)`.
    pub fitted_exponent: Option<f64>,
    pub wall_clock_seconds: f64,
    pub seed: u64,
}

/// Runs every ladder entry (in parallel, results in ladder order). An entry
/// that fails is reported with its error instead of aborting the sweep.
pub fn run_convergence_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    let start = Instant::now();
    config.grid()?;
    let entries: Vec<EntryResult> = config
        .ladder
        .par_iter()
        .map(|&(n1, n2)| run_entry(config, n1, n2).unwrap_or_else(|e| EntryResult::failed(n1, n2, e.to_string())))
        .collect();
    let fitted_exponent = fit_exponent(&entries);
    Ok(SweepReport {
        entries,
        fitted_exponent,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
    })
}

fn sample_steps(config: &ExperimentConfig) -> (usize, usize) {
    let steps = ((config.t_final / config.dt).round() as usize).max(1);
    let probe = ((config.probe_time / config.dt).round() as usize).clamp(1, steps);
    (steps, probe)
}

pub fn run_entry(config: &ExperimentConfig, n1: usize, n2: usize) -> Result<EntryResult> {
    let grid = config.grid()?;
    let basis = build_basis_with_cap(&grid, n1, n2, config.cap)?;
    let spec = config.hamiltonian(&grid, n1, n2)?;
    let effective = config.effective_spec(&spec)?;
    let propagator = Propagator::new(
        Hamiltonian::new(&spec, &basis)?,
        KrylovOptions {
            dimension: config.krylov_dim,
            tolerance: config.krylov_tol,
            ..KrylovOptions::default()
        },
    );
    let u0 = config.u0.sample(&grid)?;
    let v0 = config.v0.sample(&grid)?;
    let mut psi = product_state(&u0, &v0, &basis)?;
    let mut orbitals = OrbitalState::new(vec![u0, v0])?;
    let energy_manybody = energy_with(propagator.hamiltonian(), &psi);
    let energy_effective = hartree_energy(&orbitals, &effective)?;

    let weights = [WeightFunction::s(n1), WeightFunction::n(n1), weight_m(n1, config.xi)?];
    let (steps, probe) = sample_steps(config);
    let mut rows = vec![indicators(&psi, &orbitals, &spec, &weights, 0.0)?];
    let mut alpha_probe = f64::NAN;
    let mut last = 0;
    for n in 1..=steps {
        orbitals = step(&orbitals, &effective, config.dt)?;
        if n % config.sample_every == 0 || n == probe || n == steps {
            psi = propagator.propagate(&psi, (n - last) as f64 * config.dt)?;
            last = n;
            let row = indicators(&psi, &orbitals, &spec, &weights, n as f64 * config.dt)?;
            if n == probe {
                alpha_probe = row.alpha_11;
            }
            rows.push(row);
        }
    }
    Ok(EntryResult {
        n1,
        n2,
        dim: basis.dim(),
        rows,
        alpha_probe,
        energy_manybody,
        energy_effective,
        status: EntryStatus::Ok,
    })
}

fn indicators(
    psi: &ManyBodyState,
    orbitals: &OrbitalState,
    spec: &crate::manybody::HamiltonianSpec,
    weights: &[WeightFunction; 3],
    t: f64,
) -> Result<IndicatorRow> {
    let (u, v) = (&orbitals.components[0], &orbitals.components[1]);
    let g11 = reduce(psi, MarginalKind::OneOne)?;
    let g10 = g11.trace_out_b()?;
    let g01 = g11.trace_out_a()?;
    let h = u.grid().spacing().sqrt();
    let phi: Vec<_> = u.values().iter().map(|z| z * h).collect();
    let chi: Vec<_> = v.values().iter().map(|z| z * h).collect();
    let unit = |w: Vec<num_complex::Complex64>| {
        let n = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        w.into_iter().map(|z| z / n).collect::<Vec<_>>()
    };
    let derivative = derivative_decomposition(psi, u, v, spec)?;
    let projectors = counting_projectors(&psi.basis, u, Species::A)?;
    Ok(IndicatorRow {
        t,
        alpha_11: alpha_11(psi, u, v)?,
        trace_dist: trace_distance(&g11, u, v)?,
        alpha_10: 1.0 - g10.expectation(&unit(phi)),
        alpha_01: 1.0 - g01.expectation(&unit(chi)),
        c_v1_im: derivative.c_v1.im,
        c_v2_im: derivative.c_v2.im,
        c_v12_im: derivative.c_v12.im,
        weight_s: weight_expectation(psi, &weights[0], &projectors)?,
        weight_n: weight_expectation(psi, &weights[1], &projectors)?,
        weight_m: weight_expectation(psi, &weights[2], &projectors)?,
    })
}

fn fit_exponent(entries: &[EntryResult]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.is_ok() && e.alpha_probe > 0.0)
        .map(|e| (((e.n1 + e.n2) as f64).ln(), e.alpha_probe.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    const SMALL: &str = r#"
[grid]
sites = 4
length = 4.0
[system]
v1 = { shape = "gaussian", amplitude = 2.0, width = 1.0 }
v12 = { shape = "gaussian", amplitude = 1.0, width = 1.0 }
[ladder]
entries = [[1, 1], [2, 2]]
[time]
t_final = 0.05
dt = 0.01
sample_every = 2
probe_time = 0.03
"#;

    #[test]
    fn sampling_schedule_and_probe() {
        let c = parse_config(SMALL).unwrap();
        let r = run_convergence_sweep(&c).unwrap();
        assert_eq!(r.entries.len(), 2);
        let e = &r.entries[1];
        assert!(e.is_ok());
        let ts: Vec<f64> = e.rows.iter().map(|r| r.t).collect();
        assert_eq!(ts.len(), 5);
        for (t, want) in ts.iter().zip([0.0, 0.02, 0.03, 0.04, 0.05]) {
            assert!((t - want).abs() < 1e-15);
        }
        assert_eq!(e.alpha_probe, e.rows[2].alpha_11);
        assert!(e.rows[0].alpha_11.abs() < 1e-12);
        assert!(r.fitted_exponent.is_none());
    }

    #[test]
    fn failing_entry_is_reported() {
        let mut c = parse_config(SMALL).unwrap();
        c.cap = 20;
        let r = run_convergence_sweep(&c).unwrap();
        assert!(r.entries[0].is_ok());
        assert!(matches!(r.entries[1].status, EntryStatus::Failed(_)));
    }

    #[test]
    fn exponent_fit_recovers_power_law() {
        let mk = |n: usize| EntryResult {
            alpha_probe: 3.0 * ((2 * n) as f64).powf(-1.5),
            ..EntryResult::failed(n, n, String::new())
        };
        let mut entries: Vec<EntryResult> = (1..=4).map(mk).collect();
        entries.iter_mut().for_each(|e| e.status = EntryStatus::Ok);
        assert!((fit_exponent(&entries).unwrap() + 1.5).abs() < 1e-12);
    }
}
