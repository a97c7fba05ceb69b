//! Split-step integration of the effective one-body systems: coupled Hartree,
//! coupled Gross-Pitaevskii, Rabi-coupled pseudo-spinor and spin-1 spinor.
//!
//! Each step is a Strang splitting `P(dt/2) K(dt) P(dt/2)`. The kinetic flow is
//! exact in Fourier space. The potential flow is local in space:
//!
//! - Hartree/GP: densities are frozen by a pure phase multiplication, so the
//!   substep is exact.
//! - Rabi: the common density `|u|²+|v|²` is invariant under both the phase and
//!   the `σ_x` rotation, so the two commute and the substep is exact.
//! - Spin-1: implicit midpoint, solved by fixed-point iteration. It conserves
//!   the quadratic invariants (total mass and magnetization) exactly and is
//!   symmetric, so the splitting stays second order and time-reversible.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{write_field, ConvolutionKernel, Field, Grid};

const EIGHT_PI: f64 = 8.0 * PI;
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which discrete `−Δ` the kinetic flow uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Kinetic {
    /// `|k|²` in Fourier space.
    #[default]
    Spectral,
    /// Periodic 3-point stencil, matching the many-body hopping term.
    Stencil,
}

impl Kinetic {
    pub fn symbol(self, grid: &Grid) -> Vec<f64> {
        match self {
            Kinetic::Spectral => grid.laplacian_symbol(),
            Kinetic::Stencil => grid.stencil_symbol(),
        }
    }
}

/// Time-dependent Rabi field `B(t)`.
#[derive(Clone)]
pub struct RabiField(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl RabiField {
    pub fn constant(b: f64) -> Self {
        RabiField(Arc::new(move |_| b))
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RabiField(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for RabiField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RabiField(B(0) = {})", self.at(0.0))
    }
}

#[derive(Clone, Debug)]
pub struct HartreeCoupling {
    pub c1: f64,
    pub c2: f64,
    pub v1: Field,
    pub v2: Field,
    pub v12: Field,
    k1: ConvolutionKernel,
    k2: ConvolutionKernel,
    k12: ConvolutionKernel,
}

#[derive(Clone, Debug)]
pub enum Coupling {
    Hartree(HartreeCoupling),
    GrossPitaevskii {
        c1: f64,
        c2: f64,
        a1: f64,
        a2: f64,
        a12: f64,
    },
    Rabi {
        a: f64,
        field: RabiField,
    },
    Spin1 {
        a: f64,
    },
}

#[derive(Clone, Debug)]
pub struct CouplingSpec {
    pub coupling: Coupling,
    pub kinetic: Kinetic,
}

fn check_fractions(c1: f64) -> Result<(f64, f64)> {
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(Error::InvalidInput(format!("population fraction c1 = {c1} not in (0, 1)")));
    }
    Ok((c1, 1.0 - c1))
}

fn check_even_real(name: &str, v: &Field) -> Result<()> {
    let g = v.grid();
    let m = g.points_per_axis();
    let scale = v.values().iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
    for (i, z) in v.values().iter().enumerate() {
        if !z.re.is_finite() || z.im.abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!("potential {name} must be real and finite")));
        }
        let idx = g.unflatten(i);
        let mut j = 0;
        for axis in 0..g.dim() {
            j = j * m + (m - idx[axis]) % m;
        }
        if (v.values()[j].re - z.re).abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!("potential {name} is not even under x -> -x")));
        }
    }
    Ok(())
}

impl CouplingSpec {
    pub fn hartree(c1: f64, v1: Field, v2: Field, v12: Field) -> Result<Self> {
        let (c1, c2) = check_fractions(c1)?;
        v1.check_grid(&v2)?;
        v1.check_grid(&v12)?;
        check_even_real("V1", &v1)?;
        check_even_real("V2", &v2)?;
        check_even_real("V12", &v12)?;
        Ok(CouplingSpec {
            coupling: Coupling::Hartree(HartreeCoupling {
                c1,
                c2,
                k1: ConvolutionKernel::new(&v1)?,
                k2: ConvolutionKernel::new(&v2)?,
                k12: ConvolutionKernel::new(&v12)?,
                v1,
                v2,
                v12,
            }),
            kinetic: Kinetic::Spectral,
        })
    }

    pub fn gross_pitaevskii(c1: f64, a1: f64, a2: f64, a12: f64) -> Result<Self> {
        let (c1, c2) = check_fractions(c1)?;
        if ![a1, a2, a12].iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidInput("scattering lengths must be finite".into()));
        }
        Ok(CouplingSpec {
            coupling: Coupling::GrossPitaevskii { c1, c2, a1, a2, a12 },
            kinetic: Kinetic::Spectral,
        })
    }

    pub fn rabi(a: f64, field: RabiField) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidInput("scattering length must be finite".into()));
        }
        Ok(CouplingSpec {
            coupling: Coupling::Rabi { a, field },
            kinetic: Kinetic::Spectral,
        })
    }

    pub fn spin1(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidInput("scattering length must be finite".into()));
        }
        Ok(CouplingSpec {
            coupling: Coupling::Spin1 { a },
            kinetic: Kinetic::Spectral,
        })
    }

    pub fn with_kinetic(mut self, kinetic: Kinetic) -> Self {
        self.kinetic = kinetic;
        self
    }

    pub fn mode_name(&self) -> &'static str {
        match self.coupling {
            Coupling::Hartree(_) => "hartree",
            Coupling::GrossPitaevskii { .. } => "gross_pitaevskii",
            Coupling::Rabi { .. } => "rabi",
            Coupling::Spin1 { .. } => "spin1",
        }
    }

    pub fn component_count(&self) -> usize {
        match self.coupling {
            Coupling::Spin1 { .. } => 3,
            _ => 2,
        }
    }

    /// Whether each component's mass is separately conserved.
    pub fn conserves_component_masses(&self) -> bool {
        matches!(self.coupling, Coupling::Hartree(_) | Coupling::GrossPitaevskii { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalState {
    pub components: Vec<Field>,
    pub time: f64,
}

impl OrbitalState {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::ComponentMismatch { expected: 2, found: 0 });
        }
        for c in &components[1..] {
            components[0].check_grid(c)?;
        }
        Ok(OrbitalState { components, time: 0.0 })
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.components.iter().map(Field::norm_sqr).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    fn check(&self, spec: &CouplingSpec) -> Result<()> {
        let expected = spec.component_count();
        if self.components.len() != expected {
            return Err(Error::ComponentMismatch {
                expected,
                found: self.components.len(),
            });
        }
        if let Coupling::Hartree(h) = &spec.coupling {
            self.components[0].check_grid(&h.v1)?;
        }
        Ok(())
    }
}

/// Precomputed propagator for a fixed `dt`.
struct Stepper<'a> {
    spec: &'a CouplingSpec,
    dt: f64,
    kinetic_phase: Vec<Complex64>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a CouplingSpec, grid: &Grid, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt} must be finite and nonzero")));
        }
        let kinetic_phase = spec
            .kinetic
            .symbol(grid)
            .into_iter()
            .map(|s| Complex64::from_polar(1.0, -s * dt))
            .collect();
        Ok(Stepper { spec, dt, kinetic_phase })
    }

    fn step(&self, state: &OrbitalState) -> Result<OrbitalState> {
        let t = state.time;
        let half = 0.5 * self.dt;
        let mut comps = state.components.clone();
        self.potential(&mut comps, half, t + 0.25 * self.dt)?;
        for c in comps.iter_mut() {
            c.apply_complex_symbol(&self.kinetic_phase);
        }
        self.potential(&mut comps, half, t + 0.75 * self.dt)?;
        if !comps.iter().all(Field::is_finite) {
            return Err(Error::NonFinite(format!("orbital state after step at t = {t}")));
        }
        Ok(OrbitalState {
            components: comps,
            time: t + self.dt,
        })
    }

    /// Flow of the local (potential) part for a time `tau`; `t_mid` is the
    /// midpoint of the substep, where time-dependent fields are evaluated.
    fn potential(&self, comps: &mut [Field], tau: f64, t_mid: f64) -> Result<()> {
        match &self.spec.coupling {
            Coupling::Hartree(h) => {
                let (ru, rv) = (comps[0].density(), comps[1].density());
                let (k1u, k12v) = (h.k1.apply(&ru), h.k12.apply(&rv));
                let (k2v, k12u) = (h.k2.apply(&rv), h.k12.apply(&ru));
                let (u, v) = split_pair(comps);
                for (i, z) in u.values_mut().iter_mut().enumerate() {
                    *z *= Complex64::from_polar(1.0, -tau * (k1u[i] + h.c2 * k12v[i]));
                }
                for (i, z) in v.values_mut().iter_mut().enumerate() {
                    *z *= Complex64::from_polar(1.0, -tau * (k2v[i] + h.c1 * k12u[i]));
                }
            }
            &Coupling::GrossPitaevskii { c1, c2, a1, a2, a12 } => {
                let (u, v) = split_pair(comps);
                for (zu, zv) in u.values_mut().iter_mut().zip(v.values_mut().iter_mut()) {
                    let (ru, rv) = (zu.norm_sqr(), zv.norm_sqr());
                    *zu *= Complex64::from_polar(1.0, -tau * EIGHT_PI * (a1 * ru + c2 * a12 * rv));
                    *zv *= Complex64::from_polar(1.0, -tau * EIGHT_PI * (a2 * rv + c1 * a12 * ru));
                }
            }
            Coupling::Rabi { a, field } => {
                let theta = field.at(t_mid) * tau;
                let (c, s) = (theta.cos(), theta.sin());
                let (u, v) = split_pair(comps);
                for (zu, zv) in u.values_mut().iter_mut().zip(v.values_mut().iter_mut()) {
                    let rho = zu.norm_sqr() + zv.norm_sqr();
                    let phase = Complex64::from_polar(1.0, -tau * EIGHT_PI * a * rho);
                    let (pu, pv) = (*zu * phase, *zv * phase);
                    *zu = pu * c - I * s * pv;
                    *zv = pv * c - I * s * pu;
                }
            }
            &Coupling::Spin1 { a } => {
                let n = comps[0].values().len();
                for i in 0..n {
                    let y0 = [comps[0].values()[i], comps[1].values()[i], comps[2].values()[i]];
                    let y1 = spin1_implicit_midpoint(y0, EIGHT_PI * a, tau)?;
                    for (c, z) in comps.iter_mut().zip(y1) {
                        c.values_mut()[i] = z;
                    }
                }
            }
        }
        Ok(())
    }
}

fn split_pair(comps: &mut [Field]) -> (&mut Field, &mut Field) {
    let (a, b) = comps.split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Local spin-1 nonlinearity, without the `8πa` prefactor.
fn spin1_rhs([u, v, w]: [Complex64; 3]) -> [Complex64; 3] {
    let (ru, rv, rw) = (u.norm_sqr(), v.norm_sqr(), w.norm_sqr());
    [
        rv * u + w.conj() * v * v + ru * u - rw * u,
        ru * v + 2.0 * v.conj() * w * u + rw * v,
        rv * w + u.conj() * v * v - ru * w + rw * w,
    ]
}

fn spin1_implicit_midpoint(y0: [Complex64; 3], g: f64, tau: f64) -> Result<[Complex64; 3]> {
    let scale = 1.0 + y0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let advance = |mid: [Complex64; 3]| {
        let f = spin1_rhs(mid);
        [0, 1, 2].map(|c| y0[c] - I * (tau * g) * f[c])
    };
    let mut y1 = advance(y0);
    for _ in 0..200 {
        let mid = [0, 1, 2].map(|c| 0.5 * (y0[c] + y1[c]));
        let next = advance(mid);
        let change = (0..3).map(|c| (next[c] - y1[c]).norm()).fold(0.0, f64::max);
        y1 = next;
        if change <= 4.0 * f64::EPSILON * scale {
            return Ok(y1);
        }
    }
    Err(Error::ImplicitNotConverged)
}

/// One Strang step of length `dt` (negative `dt` integrates backward).
pub fn step(state: &OrbitalState, spec: &CouplingSpec, dt: f64) -> Result<OrbitalState> {
    state.check(spec)?;
    Stepper::new(spec, state.grid(), dt)?.step(state)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<OrbitalState>,
    pub masses: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    /// Present in spin-1 mode only.
    pub magnetization: Option<Vec<f64>>,
}

impl Trajectory {
    fn push(&mut self, state: &OrbitalState, spec: &CouplingSpec) -> Result<()> {
        self.times.push(state.time);
        self.masses.push(state.masses());
        self.energies.push(conserved_energy(state, spec)?);
        if let Coupling::Spin1 { .. } = spec.coupling {
            self.magnetization
                .get_or_insert_with(Vec::new)
                .push(magnetization(state)?);
        }
        self.states.push(state.clone());
        Ok(())
    }

    pub fn final_state(&self) -> Option<&OrbitalState> {
        self.states.last()
    }

    /// Largest deviation of each component's mass from its initial value.
    pub fn mass_drift(&self) -> Vec<f64> {
        let Some(first) = self.masses.first() else {
            return Vec::new();
        };
        (0..first.len())
            .map(|c| {
                self.masses
                    .iter()
                    .map(|m| (m[c] - first[c]).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn total_mass_drift(&self) -> f64 {
        let Some(first) = self.masses.first() else {
            return 0.0;
        };
        let m0: f64 = first.iter().sum();
        self.masses
            .iter()
            .map(|m| (m.iter().sum::<f64>() - m0).abs())
            .fold(0.0, f64::max)
    }

    pub fn relative_energy_drift(&self) -> f64 {
        let Some(&e0) = self.energies.first() else {
            return 0.0;
        };
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
            / e0.abs().max(f64::MIN_POSITIVE)
    }

    /// CSV columns `t, mass_1, mass_2[, mass_3], energy[, magnetization]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let ncomp = self.masses.first().map_or(2, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=ncomp).map(|c| format!("mass_{c}")));
        header.push("energy".into());
        if self.magnetization.is_some() {
            header.push("magnetization".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_float(*t)];
            row.extend(self.masses[i].iter().map(|&m| fmt_float(m)));
            row.push(fmt_float(self.energies[i]));
            if let Some(mag) = &self.magnetization {
                row.push(fmt_float(mag[i]));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    /// Writes every sampled component as `<stem>_s<sample>_c<component>.field`.
    pub fn write_snapshots(&self, dir: &Path, stem: &str) -> Result<()> {
        for (s, state) in self.states.iter().enumerate() {
            for (c, field) in state.components.iter().enumerate() {
                let path = dir.join(format!("{stem}_s{s:05}_c{}.field", c + 1));
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_field(field, std::io::BufWriter::new(file)).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Floats with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Repeated [`step`] up to time `T`, sampling every `sample_every` steps (the
/// initial and final states are always sampled).
pub fn evolve(
    state: &OrbitalState,
    spec: &CouplingSpec,
    t_final: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    if !(t_final > 0.0 && dt > 0.0 && dt <= t_final) {
        return Err(Error::InvalidInput(format!(
            "need 0 < dt <= T, got dt = {dt}, T = {t_final}"
        )));
    }
    if sample_every == 0 {
        return Err(Error::InvalidInput("sample_every must be at least 1".into()));
    }
    state.check(spec)?;
    let stepper = Stepper::new(spec, state.grid(), dt)?;
    let steps = ((t_final / dt).round() as usize).max(1);
    let mut traj = Trajectory::default();
    traj.push(state, spec)?;
    let mut current = state.clone();
    for n in 1..=steps {
        current = stepper.step(&current)?;
        if n % sample_every == 0 || n == steps {
            traj.push(&current, spec)?;
        }
    }
    Ok(traj)
}

/// `⟨f, (−Δ) f⟩` under the chosen kinetic discretization.
pub fn kinetic_energy(f: &Field, kinetic: Kinetic) -> f64 {
    let symbol = kinetic.symbol(f.grid());
    let mut data = f.values().to_vec();
    f.grid().forward(&mut data);
    let n = f.grid().total_points() as f64;
    data.iter()
        .zip(&symbol)
        .map(|(z, s)| z.norm_sqr() * s)
        .sum::<f64>()
        * f.grid().cell_volume()
        / n
}

fn integrate(grid: &Grid, values: impl Iterator<Item = f64>) -> f64 {
    values.sum::<f64>() * grid.cell_volume()
}

/// Energy of the coupled Hartree system, per particle:
/// `c₁(⟨u,−Δu⟩ + ½⟨|u|², V₁∗|u|²⟩) + c₂(⟨v,−Δv⟩ + ½⟨|v|², V₂∗|v|²⟩) + c₁c₂⟨|u|², V₁₂∗|v|²⟩`.
///
/// The population weights make it the functional whose flow is the coupled
/// system, so it is conserved; it is also the large-N limit of the many-body
/// energy per particle on product states.
pub fn hartree_energy(state: &OrbitalState, spec: &CouplingSpec) -> Result<f64> {
    let Coupling::Hartree(h) = &spec.coupling else {
        return Err(Error::WrongMode {
            expected: "hartree",
            found: spec.mode_name(),
        });
    };
    state.check(spec)?;
    let (u, v) = (&state.components[0], &state.components[1]);
    let g = u.grid();
    let (ru, rv) = (u.density(), v.density());
    let pair = |k: &ConvolutionKernel, a: &[f64], b: &[f64]| {
        let conv = k.apply(b);
        integrate(g, a.iter().zip(&conv).map(|(x, y)| x * y))
    };
    let eu = kinetic_energy(u, spec.kinetic) + 0.5 * pair(&h.k1, &ru, &ru);
    let ev = kinetic_energy(v, spec.kinetic) + 0.5 * pair(&h.k2, &rv, &rv);
    Ok(h.c1 * eu + h.c2 * ev + h.c1 * h.c2 * pair(&h.k12, &ru, &rv))
}

/// Gross-Pitaevskii energy as printed for the mixture:
/// `⟨u,−Δu⟩ + ⟨v,−Δv⟩ + 4πa₁∫|u|⁴ + 4πa₂∫|v|⁴ + 8πa₁₂∫|u|²|v|²`.
///
/// This is conserved by the flow when `a₁₂ = 0` or, more generally, only up to
/// the population weighting; see [`conserved_energy`] for the exact invariant.
pub fn gp_energy(state: &OrbitalState, spec: &CouplingSpec) -> Result<f64> {
    let &Coupling::GrossPitaevskii { a1, a2, a12, .. } = &spec.coupling else {
        return Err(Error::WrongMode {
            expected: "gross_pitaevskii",
            found: spec.mode_name(),
        });
    };
    state.check(spec)?;
    let (u, v) = (&state.components[0], &state.components[1]);
    let g = u.grid();
    let (ru, rv) = (u.density(), v.density());
    let quartic = |a: &[f64], b: &[f64]| integrate(g, a.iter().zip(b).map(|(x, y)| x * y));
    Ok(kinetic_energy(u, spec.kinetic)
        + kinetic_energy(v, spec.kinetic)
        + 4.0 * PI * a1 * quartic(&ru, &ru)
        + 4.0 * PI * a2 * quartic(&rv, &rv)
        + EIGHT_PI * a12 * quartic(&ru, &rv))
}

/// The exact Hamiltonian functional of the flow in each mode.
///
/// Hartree: [`hartree_energy`]. GP: the population-weighted GP energy. Rabi:
/// `Σ⟨ψ,−Δψ⟩ + 4πa∫ρ² + 2B(t)Re∫ū v` (conserved for constant `B`). Spin-1:
/// `Σ⟨ψ,−Δψ⟩ + 8πa∫(|u|²|v|² + |v|²|w|² + ½|u|⁴ + ½|w|⁴ − |u|²|w|² + 2Re(ū w̄ v²))`.
pub fn conserved_energy(state: &OrbitalState, spec: &CouplingSpec) -> Result<f64> {
    state.check(spec)?;
    let comps = &state.components;
    let g = state.grid();
    let kin: Vec<f64> = comps.iter().map(|c| kinetic_energy(c, spec.kinetic)).collect();
    let dens: Vec<Vec<f64>> = comps.iter().map(Field::density).collect();
    let quartic = |a: &[f64], b: &[f64]| integrate(g, a.iter().zip(b).map(|(x, y)| x * y));
    match &spec.coupling {
        Coupling::Hartree(_) => hartree_energy(state, spec),
        &Coupling::GrossPitaevskii { c1, c2, a1, a2, a12 } => Ok(c1
            * (kin[0] + 4.0 * PI * a1 * quartic(&dens[0], &dens[0]))
            + c2 * (kin[1] + 4.0 * PI * a2 * quartic(&dens[1], &dens[1]))
            + c1 * c2 * EIGHT_PI * a12 * quartic(&dens[0], &dens[1])),
        Coupling::Rabi { a, field } => {
            let rho: Vec<f64> = dens[0].iter().zip(&dens[1]).map(|(x, y)| x + y).collect();
            let overlap = comps[0].inner(&comps[1])?;
            Ok(kin[0] + kin[1] + 4.0 * PI * a * quartic(&rho, &rho) + 2.0 * field.at(state.time) * overlap.re)
        }
        &Coupling::Spin1 { a } => {
            let (u, v, w) = (comps[0].values(), comps[1].values(), comps[2].values());
            let local = integrate(
                g,
                (0..u.len()).map(|i| {
                    let (ru, rv, rw) = (dens[0][i], dens[1][i], dens[2][i]);
                    ru * rv + rw * rv + 0.5 * ru * ru + 0.5 * rw * rw - ru * rw
                        + 2.0 * (u[i].conj() * w[i].conj() * v[i] * v[i]).re
                }),
            );
            Ok(kin.iter().sum::<f64>() + EIGHT_PI * a * local)
        }
    }
}

/// `∫(|u|² − |w|²)` for a three-component state.
pub fn magnetization(state: &OrbitalState) -> Result<f64> {
    if state.components.len() != 3 {
        return Err(Error::ComponentMismatch {
            expected: 3,
            found: state.components.len(),
        });
    }
    Ok(state.components[0].norm_sqr() - state.components[2].norm_sqr())
}
