//! Experiment configuration: TOML documents with fixed sections, strict keys
//! and error messages that name the offending key path.

use std::f64::consts::TAU;
use std::path::PathBuf;

use num_complex::Complex64;
use toml::{Table, Value};

use crate::effective::{Coupling, CouplingSpec, Kinetic, RabiField};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::manybody::{sector_dimension, HamiltonianSpec, DEFAULT_DIMENSION_CAP};
use crate::scattering::{RadialPotential, Species};

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Consumes keys from a parsed document; whatever is left at the end is an
/// unknown key.
struct Reader {
    root: Table,
}

impl Reader {
    fn parse(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| {
            let message = e.message().to_string();
            config_err("<document>", message)
        })?;
        Ok(Reader { root })
    }

    fn section(&mut self, name: &str) -> Result<Section> {
        match self.root.remove(name) {
            None => Ok(Section {
                path: name.to_string(),
                table: Table::new(),
            }),
            Some(Value::Table(table)) => Ok(Section {
                path: name.to_string(),
                table,
            }),
            Some(_) => Err(config_err(name, "expected a section")),
        }
    }

    fn finish(self) -> Result<()> {
        match self.root.keys().next() {
            Some(k) => Err(config_err(k.clone(), "unknown section or key")),
            None => Ok(()),
        }
    }
}

struct Section {
    path: String,
    table: Table,
}

impl Section {
    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => as_f64(&v).map(Some).ok_or_else(|| config_err(self.key(key), "expected a number")),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&mut self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| config_err(self.key(key), "missing required key"))
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        let v = match default {
            Some(d) => self.f64_or(key, d)?,
            None => self.f64_req(key)?,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(config_err(self.key(key), format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(_) => Err(config_err(self.key(key), "expected a nonnegative integer")),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn usize_req(&mut self, key: &str) -> Result<usize> {
        self.usize_opt(key)?.ok_or_else(|| config_err(self.key(key), "missing required key"))
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64> {
        Ok(self.usize_opt(key)?.map(|v| v as u64).unwrap_or(default))
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(config_err(self.key(key), "expected true or false")),
        }
    }

    fn string_opt(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(config_err(self.key(key), "expected a string")),
        }
    }

    fn sub(&mut self, key: &str) -> Result<Option<Section>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Table(table)) => Ok(Some(Section {
                path: self.key(key),
                table,
            })),
            Some(_) => Err(config_err(self.key(key), "expected a table")),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            Some(k) => Err(config_err(self.key(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Even pair-potential profile of the displacement.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialShape {
    Zero,
    /// `A exp(−x²/(2w²))`.
    Gaussian { amplitude: f64, width: f64 },
    /// `A` for `|x| ≤ w`, else 0.
    Square { amplitude: f64, width: f64 },
}

impl PotentialShape {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            PotentialShape::Zero => 0.0,
            PotentialShape::Gaussian { amplitude, width } => amplitude * (-x * x / (2.0 * width * width)).exp(),
            PotentialShape::Square { amplitude, width } => {
                if x.abs() <= width {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    /// Radially symmetric sample `V(|d|)` on every displacement of the grid.
    pub fn sample(&self, grid: &Grid) -> Field {
        let dim = grid.dim();
        Field::from_displacement_fn(grid, |d| {
            let r = d[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
            self.eval(r)
        })
    }

    fn read(section: &mut Section, key: &str) -> Result<Self> {
        let Some(mut s) = section.sub(key)? else {
            return Ok(PotentialShape::Zero);
        };
        let shape = s.string_opt("shape")?.unwrap_or_else(|| "gaussian".into());
        let out = match shape.as_str() {
            "zero" => PotentialShape::Zero,
            "gaussian" => PotentialShape::Gaussian {
                amplitude: s.f64_req("amplitude")?,
                width: s.positive("width", None)?,
            },
            "square" => PotentialShape::Square {
                amplitude: s.f64_req("amplitude")?,
                width: s.positive("width", None)?,
            },
            other => return Err(config_err(s.key("shape"), format!("unknown shape `{other}`"))),
        };
        s.finish()?;
        Ok(out)
    }
}

/// Smooth periodic orbital
/// `(1 + μ cos θ) exp(i(wθ₀ + τ sin θ))`, with `θ = 2π(x − s)/L`, `θ₀ = 2πx/L`,
/// summed over axes in the phase and multiplied over axes in the amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalShape {
    pub modulation: f64,
    pub winding: i64,
    pub twist: f64,
    pub shift: f64,
    /// Squared L² norm after normalization.
    pub mass: f64,
}

impl OrbitalShape {
    pub fn new(modulation: f64, winding: i64, twist: f64, shift: f64) -> Self {
        OrbitalShape {
            modulation,
            winding,
            twist,
            shift,
            mass: 1.0,
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        let l = grid.length();
        let dim = grid.dim();
        let raw = Field::from_fn(grid, |x| {
            let mut amp = 1.0;
            let mut phase = 0.0;
            for &xa in &x[..dim] {
                let theta = TAU * (xa - self.shift) / l;
                amp *= 1.0 + self.modulation * theta.cos();
                phase += self.winding as f64 * TAU * xa / l + self.twist * theta.sin();
            }
            Complex64::from_polar(amp, phase)
        });
        if self.mass == 0.0 {
            return Ok(Field::zeros(grid));
        }
        let mut f = raw.normalized()?;
        f.scale(Complex64::new(self.mass.sqrt(), 0.0));
        Ok(f)
    }

    fn read(section: &mut Section, key: &str, default: OrbitalShape) -> Result<Self> {
        let Some(mut s) = section.sub(key)? else {
            return Ok(default);
        };
        let winding = match s.take("winding") {
            None => default.winding,
            Some(Value::Integer(i)) => i,
            Some(_) => return Err(config_err(s.key("winding"), "expected an integer")),
        };
        let out = OrbitalShape {
            modulation: s.f64_or("modulation", default.modulation)?,
            winding,
            twist: s.f64_or("twist", default.twist)?,
            shift: s.f64_or("shift", default.shift)?,
            mass: s.f64_or("mass", default.mass)?,
        };
        if !(out.modulation.abs() < 1.0) {
            return Err(config_err(s.key("modulation"), "must lie in (-1, 1)"));
        }
        if !(out.mass >= 0.0 && out.mass.is_finite()) {
            return Err(config_err(s.key("mass"), "must be nonnegative"));
        }
        s.finish()?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalingChoice {
    MeanField,
    BetaFamily { beta: f64 },
}

/// Convergence-sweep configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub sites: usize,
    pub length: f64,
    pub scaling: ScalingChoice,
    pub v1: PotentialShape,
    pub v2: PotentialShape,
    pub v12: PotentialShape,
    pub u0: OrbitalShape,
    pub v0: OrbitalShape,
    pub ratio_fixed: bool,
    pub ladder: Vec<(usize, usize)>,
    pub cap: usize,
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub probe_time: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub xi: f64,
    pub out_dir: Option<PathBuf>,
    pub prefix: String,
    pub seed: u64,
    /// The document this config was parsed from, echoed into manifests.
    pub source: String,
}

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_XI: f64 = 0.2;
pub const DEFAULT_PROBE_TIME: f64 = 0.5;

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::lattice(self.sites, self.length)
    }

    /// Lattice Hamiltonian for one ladder entry.
    pub fn hamiltonian(&self, grid: &Grid, n1: usize, n2: usize) -> Result<HamiltonianSpec> {
        match self.scaling {
            ScalingChoice::MeanField => HamiltonianSpec::mean_field(
                grid,
                &self.v1.sample(grid),
                &self.v2.sample(grid),
                &self.v12.sample(grid),
                n1,
                n2,
            ),
            ScalingChoice::BetaFamily { beta } => {
                let (a, b, c) = (self.v1.clone(), self.v2.clone(), self.v12.clone());
                HamiltonianSpec::beta_family(
                    grid,
                    [&move |x| a.eval(x), &move |x| b.eval(x), &move |x| c.eval(x)],
                    beta,
                    n1,
                    n2,
                )
            }
        }
    }

    /// Stencil-kinetic Hartree system matching a lattice Hamiltonian.
    pub fn effective_spec(&self, spec: &HamiltonianSpec) -> Result<CouplingSpec> {
        let (v1, v2, v12) = spec.effective_potentials()?;
        Ok(CouplingSpec::hartree(spec.c1(), v1, v2, v12)?.with_kinetic(Kinetic::Stencil))
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut doc = Reader::parse(text)?;

    let mut grid = doc.section("grid")?;
    let sites = grid.usize_req("sites")?;
    if sites < 2 {
        return Err(config_err("grid.sites", format!("need at least 2 sites, got {sites}")));
    }
    let length = grid.positive("length", Some(sites as f64))?;
    grid.finish()?;

    let mut system = doc.section("system")?;
    let scaling = match system.string_opt("scaling")?.as_deref().unwrap_or("mean_field") {
        "mean_field" => ScalingChoice::MeanField,
        "beta_family" => {
            let beta = system.f64_req("beta")?;
            if !(beta > 0.0 && beta < 1.0) {
                return Err(config_err("system.beta", format!("must lie in (0, 1), got {beta}")));
            }
            ScalingChoice::BetaFamily { beta }
        }
        other => return Err(config_err("system.scaling", format!("unknown scaling `{other}`"))),
    };
    let v1 = PotentialShape::read(&mut system, "v1")?;
    let v2 = PotentialShape::read(&mut system, "v2")?;
    let v12 = PotentialShape::read(&mut system, "v12")?;
    let u0 = OrbitalShape::read(&mut system, "u0", OrbitalShape::new(0.5, 1, 0.3, 0.0))?;
    let v0 = OrbitalShape::read(&mut system, "v0", OrbitalShape::new(0.4, -1, 0.2, 0.25 * length))?;
    if u0.mass != 1.0 || v0.mass != 1.0 {
        return Err(config_err("system.u0", "sweep orbitals are normalized; omit `mass`"));
    }
    let ratio_fixed = system.bool_or("ratio_fixed", true)?;
    let seed = system.u64_or("seed", 0)?;
    system.finish()?;

    let mut ladder_sec = doc.section("ladder")?;
    let cap = ladder_sec.usize_or("cap", DEFAULT_DIMENSION_CAP)?;
    let ladder = match ladder_sec.take("entries") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| read_entry(i, item))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(config_err("ladder.entries", "expected an array of [N1, N2] pairs")),
    };
    ladder_sec.finish()?;
    for (i, &(n1, n2)) in ladder.iter().enumerate() {
        let dim = sector_dimension(sites, n1, n2);
        if dim > cap as u128 {
            return Err(config_err(
                format!("ladder.entries[{i}]"),
                format!("Hilbert space dimension {dim} exceeds cap {cap}"),
            ));
        }
    }
    if ratio_fixed {
        if let Some(&(a1, a2)) = ladder.first() {
            for (i, &(n1, n2)) in ladder.iter().enumerate() {
                if n1 * a2 != n2 * a1 {
                    return Err(config_err(
                        format!("ladder.entries[{i}]"),
                        format!("ratio N1/(N1+N2) differs from the first entry ({n1}, {n2}) vs ({a1}, {a2})"),
                    ));
                }
            }
        }
    }

    let mut time = doc.section("time")?;
    let dt = time.positive("dt", Some(DEFAULT_DT))?;
    let probe_time = time.positive("probe_time", Some(DEFAULT_PROBE_TIME))?;
    let t_final = time.positive("t_final", Some(probe_time))?;
    let sample_every = time.usize_or("sample_every", 50)?;
    let krylov_dim = time.usize_or("krylov_dim", 30)?;
    let krylov_tol = time.positive("krylov_tol", Some(1e-12))?;
    time.finish()?;
    if dt > t_final {
        return Err(config_err("time.dt", format!("dt = {dt} exceeds t_final = {t_final}")));
    }
    if probe_time > t_final * (1.0 + 1e-12) {
        return Err(config_err("time.probe_time", format!("{probe_time} is past t_final = {t_final}")));
    }
    if sample_every == 0 {
        return Err(config_err("time.sample_every", "must be at least 1"));
    }
    if krylov_dim < 2 {
        return Err(config_err("time.krylov_dim", "must be at least 2"));
    }

    let mut ind = doc.section("indicators")?;
    let xi = ind.positive("xi", Some(DEFAULT_XI))?;
    ind.finish()?;

    let mut out = doc.section("output")?;
    let out_dir = out.string_opt("dir")?.map(PathBuf::from);
    let prefix = out.string_opt("prefix")?.unwrap_or_else(|| "sweep".into());
    if prefix.is_empty() || prefix.contains(['/', '\\']) {
        return Err(config_err("output.prefix", "must be a plain file stem"));
    }
    out.finish()?;
    doc.finish()?;

    Ok(ExperimentConfig {
        sites,
        length,
        scaling,
        v1,
        v2,
        v12,
        u0,
        v0,
        ratio_fixed,
        ladder,
        cap,
        t_final,
        dt,
        sample_every,
        probe_time,
        krylov_dim,
        krylov_tol,
        xi,
        out_dir,
        prefix,
        seed,
        source: text.to_string(),
    })
}

fn read_entry(i: usize, item: &Value) -> Result<(usize, usize)> {
    let path = format!("ladder.entries[{i}]");
    let Value::Array(pair) = item else {
        return Err(config_err(path, "expected [N1, N2]"));
    };
    if pair.len() != 2 {
        return Err(config_err(path, "expected exactly two particle numbers"));
    }
    let mut out = [0usize; 2];
    for (j, v) in pair.iter().enumerate() {
        match v {
            Value::Integer(n) if *n >= 1 => out[j] = *n as usize,
            _ => {
                return Err(config_err(
                    format!("{path}[{j}]"),
                    format!("N{} must be a positive integer", j + 1),
                ))
            }
        }
    }
    Ok((out[0], out[1]))
}

/// Configuration of a standalone effective-equation run.
#[derive(Clone, Debug)]
pub struct EffectiveConfig {
    pub grid: Grid,
    pub spec: CouplingSpec,
    pub components: Vec<OrbitalShape>,
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub out_dir: Option<PathBuf>,
    pub prefix: String,
    pub snapshots: bool,
    pub seed: u64,
    pub source: String,
}

impl EffectiveConfig {
    pub fn initial_fields(&self) -> Result<Vec<Field>> {
        self.components.iter().map(|c| c.sample(&self.grid)).collect()
    }
}

pub fn parse_effective_config(text: &str) -> Result<EffectiveConfig> {
    let mut doc = Reader::parse(text)?;

    let mut g = doc.section("grid")?;
    let dim = g.usize_or("dim", 1)?;
    let points = g.usize_req("points")?;
    let length = g.positive("length", None)?;
    g.finish()?;
    let grid = Grid::new(dim, points, length).map_err(|e| config_err("grid", e.to_string()))?;

    let mut system = doc.section("system")?;
    let mode = system.string_opt("mode")?.unwrap_or_else(|| "hartree".into());
    let kinetic = match system.string_opt("kinetic")?.as_deref().unwrap_or("spectral") {
        "spectral" => Kinetic::Spectral,
        "stencil" => Kinetic::Stencil,
        other => return Err(config_err("system.kinetic", format!("unknown kinetic `{other}`"))),
    };
    let wrap = |r: Result<CouplingSpec>| r.map_err(|e| config_err("system", e.to_string()));
    let spec = match mode.as_str() {
        "hartree" => {
            let c1 = system.f64_or("c1", 0.5)?;
            let v1 = PotentialShape::read(&mut system, "v1")?.sample(&grid);
            let v2 = PotentialShape::read(&mut system, "v2")?.sample(&grid);
            let v12 = PotentialShape::read(&mut system, "v12")?.sample(&grid);
            wrap(CouplingSpec::hartree(c1, v1, v2, v12))?
        }
        "gross_pitaevskii" => {
            let c1 = system.f64_or("c1", 0.5)?;
            let a1 = system.f64_or("a1", 0.0)?;
            let a2 = system.f64_or("a2", 0.0)?;
            let a12 = system.f64_or("a12", 0.0)?;
            wrap(CouplingSpec::gross_pitaevskii(c1, a1, a2, a12))?
        }
        "rabi" => {
            let a = system.f64_or("a", 0.0)?;
            let b = system.f64_or("rabi_b", 1.0)?;
            wrap(CouplingSpec::rabi(a, RabiField::constant(b)))?
        }
        "spin1" => {
            let a = system.f64_or("a", 0.0)?;
            wrap(CouplingSpec::spin1(a))?
        }
        other => return Err(config_err("system.mode", format!("unknown mode `{other}`"))),
    }
    .with_kinetic(kinetic);
    let count = spec.component_count();
    let defaults = [
        OrbitalShape::new(0.5, 1, 0.3, 0.0),
        OrbitalShape::new(0.4, -1, 0.2, 0.25 * length),
        OrbitalShape::new(0.3, 0, 0.1, 0.5 * length),
    ];
    let mut components = Vec::with_capacity(count);
    for (i, key) in ["u0", "v0", "w0"].iter().enumerate() {
        if i < count {
            components.push(OrbitalShape::read(&mut system, key, defaults[i].clone())?);
        } else if system.table.contains_key(*key) {
            return Err(config_err(system.key(key), format!("mode `{mode}` has {count} components")));
        }
    }
    if matches!(spec.coupling, Coupling::Hartree(_) | Coupling::GrossPitaevskii { .. })
        && components.iter().any(|c| c.mass != 1.0)
    {
        return Err(config_err("system.u0.mass", "mean-field components are normalized individually"));
    }
    let seed = system.u64_or("seed", 0)?;
    system.finish()?;

    let mut time = doc.section("time")?;
    let dt = time.positive("dt", Some(DEFAULT_DT))?;
    let t_final = time.positive("t_final", Some(1.0))?;
    let sample_every = time.usize_or("sample_every", 100)?;
    time.finish()?;
    if dt > t_final {
        return Err(config_err("time.dt", format!("dt = {dt} exceeds t_final = {t_final}")));
    }
    if sample_every == 0 {
        return Err(config_err("time.sample_every", "must be at least 1"));
    }

    let mut out = doc.section("output")?;
    let out_dir = out.string_opt("dir")?.map(PathBuf::from);
    let prefix = out.string_opt("prefix")?.unwrap_or_else(|| "effective".into());
    let snapshots = out.bool_or("snapshots", false)?;
    out.finish()?;
    doc.finish()?;

    Ok(EffectiveConfig {
        grid,
        spec,
        components,
        t_final,
        dt,
        sample_every,
        out_dir,
        prefix,
        snapshots,
        seed,
        source: text.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum RadialShape {
    Square { height: f64, radius: f64 },
    Shell { height: f64, inner: f64, outer: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRequest {
    pub species: Species,
    pub beta: f64,
    pub particles: u64,
}

/// Configuration of a scattering-length computation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringConfig {
    pub shape: RadialShape,
    pub r_max: Option<f64>,
    /// Particle numbers at which to report `a(N^{3β−1}V(N^β·))`.
    pub scaled: Vec<u64>,
    pub beta: f64,
    pub calibration: Option<CalibrationRequest>,
    pub out_dir: Option<PathBuf>,
    pub prefix: String,
    pub source: String,
}

impl ScatteringConfig {
    pub fn potential(&self) -> Result<RadialPotential> {
        match self.shape {
            RadialShape::Square { height, radius } => RadialPotential::square(height, radius),
            RadialShape::Shell { height, inner, outer } => RadialPotential::shell(height, inner, outer),
        }
    }
}

pub fn parse_scattering_config(text: &str) -> Result<ScatteringConfig> {
    let mut doc = Reader::parse(text)?;
    let mut s = doc.section("scattering")?;
    let shape = match s.string_opt("potential")?.as_deref().unwrap_or("square") {
        "square" => RadialShape::Square {
            height: s.positive("height", None)?,
            radius: s.positive("radius", None)?,
        },
        "shell" => {
            let shape = RadialShape::Shell {
                height: s.positive("height", None)?,
                inner: s.positive("inner", None)?,
                outer: s.positive("outer", None)?,
            };
            if let RadialShape::Shell { inner, outer, .. } = shape {
                if outer < inner {
                    return Err(config_err("scattering.outer", "must not be below `inner`"));
                }
            }
            shape
        }
        other => return Err(config_err("scattering.potential", format!("unknown potential `{other}`"))),
    };
    let r_max = s.f64_opt("r_max")?;
    let beta = s.f64_or("beta", 1.0)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(config_err("scattering.beta", format!("must lie in (0, 1], got {beta}")));
    }
    let scaled = match s.take("scaled") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Integer(n) if *n >= 1 => Ok(*n as u64),
                _ => Err(config_err(format!("scattering.scaled[{i}]"), "expected a positive integer")),
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(config_err("scattering.scaled", "expected an array of particle numbers")),
    };
    let calibration = match s.sub("calibration")? {
        None => None,
        Some(mut c) => {
            let species = match c.string_opt("species")?.as_deref().unwrap_or("first") {
                "first" => Species::First,
                "second" => Species::Second,
                "cross" => Species::Cross,
                other => return Err(config_err(c.key("species"), format!("unknown species `{other}`"))),
            };
            let particles = c.usize_req("particles")? as u64;
            if particles < 2 {
                return Err(config_err(c.key("particles"), "need at least 2"));
            }
            let req = CalibrationRequest {
                species,
                beta: c.f64_or("beta", beta)?,
                particles,
            };
            c.finish()?;
            Some(req)
        }
    };
    s.finish()?;
    let mut out = doc.section("output")?;
    let out_dir = out.string_opt("dir")?.map(PathBuf::from);
    let prefix = out.string_opt("prefix")?.unwrap_or_else(|| "scattering".into());
    out.finish()?;
    doc.finish()?;
    Ok(ScatteringConfig {
        shape,
        r_max,
        scaled,
        beta,
        calibration,
        out_dir,
        prefix,
        source: text.to_string(),
    })
}
