//! Reduced densities, condensation functionals and counting-operator algebra
//! on exact many-body states.
//!
//! Orbitals enter as grid fields and are mapped to unit lattice vectors
//! `φ = √h·u / ‖√h·u‖`. Marginals are computed from "split" states
//! `Φ(x₁…, y₁…; rest) = a_{x₁}…b_{y₁}…Ψ / √(N₁…N₂…)`, whose first slots carry the
//! singled-out particles and whose last index runs over the remaining
//! occupation configurations.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::manybody::{
    inner, lattice_orbital, pair_energy, unit, HamiltonianSpec, ManyBodyState, SpeciesBasis, TwoSpeciesBasis,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Species {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginalKind {
    /// One particle of each species, on `ℓ²(M) ⊗ ℓ²(M)` with index `x·M + y`.
    OneOne,
    OneZero,
    ZeroOne,
}

#[derive(Clone, Debug)]
pub struct ReducedDensity {
    pub kind: MarginalKind,
    pub matrix: DMatrix<Complex64>,
    pub n1: usize,
    pub n2: usize,
    pub time: f64,
}

impl ReducedDensity {
    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.total_cmp(b));
        e
    }

    /// `⟨w, γ w⟩` for a lattice vector `w` on this marginal's space.
    pub fn expectation(&self, w: &[Complex64]) -> f64 {
        let n = self.matrix.nrows();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += w[i].conj() * self.matrix[(i, j)] * w[j];
            }
        }
        acc.re
    }

    /// Trace over the B factor of a `(1,1)` marginal.
    pub fn trace_out_b(&self) -> Result<ReducedDensity> {
        self.partial(MarginalKind::OneZero)
    }

    pub fn trace_out_a(&self) -> Result<ReducedDensity> {
        self.partial(MarginalKind::ZeroOne)
    }

    fn partial(&self, kind: MarginalKind) -> Result<ReducedDensity> {
        if self.kind != MarginalKind::OneOne {
            return Err(Error::InvalidInput("partial trace needs a (1,1) marginal".into()));
        }
        let m = (self.matrix.nrows() as f64).sqrt().round() as usize;
        let matrix = DMatrix::from_fn(m, m, |i, j| {
            (0..m)
                .map(|k| match kind {
                    MarginalKind::OneZero => self.matrix[(i * m + k, j * m + k)],
                    _ => self.matrix[(k * m + i, k * m + j)],
                })
                .sum()
        });
        Ok(ReducedDensity {
            kind,
            matrix,
            n1: self.n1,
            n2: self.n2,
            time: self.time,
        })
    }
}

/// `a_{x₁}…a_{x_ka} b_{y₁}…b_{y_kb} Ψ / √(N₁(N₁−1)…·N₂…)`, stored as
/// `[outer][rest_a][rest_b]` with `outer = (x₁,…,y₁,…)` in base `M`.
#[derive(Clone, Debug)]
pub(crate) struct Split {
    pub data: Vec<Complex64>,
    pub sites: usize,
    pub slots: usize,
    pub rest_a: Arc<SpeciesBasis>,
    pub rest_b: Arc<SpeciesBasis>,
}

impl Split {
    pub fn outer_len(&self) -> usize {
        self.sites.pow(self.slots as u32)
    }

    pub fn inner_len(&self) -> usize {
        self.rest_a.len() * self.rest_b.len()
    }

    fn zeros_like(&self) -> Vec<Complex64> {
        vec![ZERO; self.data.len()]
    }

    fn with_data(&self, data: Vec<Complex64>) -> Split {
        Split {
            data,
            sites: self.sites,
            slots: self.slots,
            rest_a: self.rest_a.clone(),
            rest_b: self.rest_b.clone(),
        }
    }

    /// Applies `|φ⟩⟨φ|` (or its complement) to one outer slot.
    fn project(&self, slot: usize, phi: &[Complex64], complement: bool) -> Split {
        let m = self.sites;
        let inner_len = self.inner_len();
        let stride = m.pow((self.slots - 1 - slot) as u32) * inner_len;
        let block = stride * m;
        let mut out = self.zeros_like();
        for base in (0..self.data.len()).step_by(block) {
            for off in 0..stride {
                let overlap: Complex64 = (0..m).map(|x| phi[x].conj() * self.data[base + x * stride + off]).sum();
                for x in 0..m {
                    let p = phi[x] * overlap;
                    let i = base + x * stride + off;
                    out[i] = if complement { self.data[i] - p } else { p };
                }
            }
        }
        self.with_data(out)
    }

    fn project_string(&self, pattern: &[(usize, &[Complex64], bool)]) -> Split {
        pattern
            .iter()
            .fold(self.clone(), |s, &(slot, phi, comp)| s.project(slot, phi, comp))
    }

    /// Multiplies by a function of the outer index.
    fn multiply_outer(&self, f: &[f64]) -> Split {
        let inner_len = self.inner_len();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, z)| z * f[i / inner_len])
            .collect();
        self.with_data(data)
    }

    /// Applies a matrix on the remaining-A index.
    fn apply_rest_a(&self, mat: &DMatrix<Complex64>) -> Split {
        let (da, db) = (self.rest_a.len(), self.rest_b.len());
        let mut out = self.zeros_like();
        for o in 0..self.outer_len() {
            let base = o * da * db;
            for i in 0..da {
                for j in 0..da {
                    let c = mat[(i, j)];
                    if c == ZERO {
                        continue;
                    }
                    for rb in 0..db {
                        out[base + i * db + rb] += c * self.data[base + j * db + rb];
                    }
                }
            }
        }
        self.with_data(out)
    }

    fn apply_rest_b(&self, mat: &DMatrix<Complex64>) -> Split {
        let db = self.rest_b.len();
        let mut out = self.zeros_like();
        for (row_out, row_in) in out.chunks_mut(db).zip(self.data.chunks(db)) {
            for i in 0..db {
                row_out[i] = (0..db).map(|j| mat[(i, j)] * row_in[j]).sum();
            }
        }
        self.with_data(out)
    }

    fn add(&self, other: &Split) -> Split {
        self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    fn sub(&self, other: &Split) -> Split {
        self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }

    fn scale(&self, s: f64) -> Split {
        self.with_data(self.data.iter().map(|z| z * s).collect())
    }

    fn dot(&self, other: &Split) -> Complex64 {
        inner(&self.data, &other.data)
    }

    /// `Σ_r Φ(o, r) conj(Φ(o', r))`.
    fn gram(&self) -> DMatrix<Complex64> {
        let n = self.outer_len();
        let k = self.inner_len();
        let mut g = DMatrix::zeros(n, n);
        for o in 0..n {
            let a = &self.data[o * k..(o + 1) * k];
            for p in o..n {
                let b = &self.data[p * k..(p + 1) * k];
                let z: Complex64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
                g[(o, p)] = z;
                g[(p, o)] = z.conj();
            }
        }
        g
    }
}

/// Removes `ka` particles of species A and `kb` of species B.
pub(crate) fn split(state: &ManyBodyState, ka: usize, kb: usize) -> Result<Split> {
    let basis = &state.basis;
    let (n1, n2) = (basis.n1(), basis.n2());
    if ka > n1 || kb > n2 {
        return Err(Error::InvalidInput(format!(
            "cannot single out ({ka}, {kb}) particles from ({n1}, {n2})"
        )));
    }
    let m = basis.sites();
    let mut cur_a = basis.species_a().clone();
    let mut cur_b = basis.species_b().clone();
    // blocks[o] is a (dA × dB) row-major matrix
    let mut blocks: Vec<Vec<Complex64>> = vec![state.coeffs.clone()];
    let mut norm = 1.0;
    for _ in 0..ka {
        let lower = Arc::new(SpeciesBasis::new(m, cur_a.particles() - 1)?);
        let ann = cur_a.annihilators(&lower);
        let db = cur_b.len();
        norm *= cur_a.particles() as f64;
        blocks = blocks
            .iter()
            .flat_map(|blk| {
                ann.iter().map(|table| {
                    let mut out = vec![ZERO; lower.len() * db];
                    for &(i, j, amp) in table {
                        for ib in 0..db {
                            out[j * db + ib] += blk[i * db + ib] * amp;
                        }
                    }
                    out
                })
            })
            .collect();
        cur_a = lower;
    }
    for _ in 0..kb {
        let lower = Arc::new(SpeciesBasis::new(m, cur_b.particles() - 1)?);
        let ann = cur_b.annihilators(&lower);
        let (da, db, dl) = (cur_a.len(), cur_b.len(), lower.len());
        norm *= cur_b.particles() as f64;
        blocks = blocks
            .iter()
            .flat_map(|blk| {
                ann.iter().map(|table| {
                    let mut out = vec![ZERO; da * dl];
                    for &(i, j, amp) in table {
                        for ia in 0..da {
                            out[ia * dl + j] += blk[ia * db + i] * amp;
                        }
                    }
                    out
                })
            })
            .collect();
        cur_b = lower;
    }
    let s = 1.0 / norm.sqrt();
    Ok(Split {
        data: blocks.into_iter().flatten().map(|z| z * s).collect(),
        sites: m,
        slots: ka + kb,
        rest_a: cur_a,
        rest_b: cur_b,
    })
}

pub fn reduce(state: &ManyBodyState, kind: MarginalKind) -> Result<ReducedDensity> {
    let (ka, kb) = match kind {
        MarginalKind::OneOne => (1, 1),
        MarginalKind::OneZero => (1, 0),
        MarginalKind::ZeroOne => (0, 1),
    };
    Ok(ReducedDensity {
        kind,
        matrix: split(state, ka, kb)?.gram(),
        n1: state.basis.n1(),
        n2: state.basis.n2(),
        time: state.time,
    })
}

fn orbitals(basis: &TwoSpeciesBasis, u: &Field, v: &Field) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    Ok((unit(lattice_orbital(u, basis)?)?, unit(lattice_orbital(v, basis)?)?))
}

fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// `1 − ⟨u⊗v, γ⁽¹'¹⁾ u⊗v⟩`.
pub fn alpha_11(state: &ManyBodyState, u: &Field, v: &Field) -> Result<f64> {
    let gamma = reduce(state, MarginalKind::OneOne)?;
    let (phi, chi) = orbitals(&state.basis, u, v)?;
    Ok(1.0 - gamma.expectation(&kron(&phi, &chi)))
}

/// Reference vector of a marginal: `u⊗v`, `u`, or `v` as unit lattice vectors.
fn reference(kind: MarginalKind, phi: &[Complex64], chi: &[Complex64]) -> Vec<Complex64> {
    match kind {
        MarginalKind::OneOne => kron(phi, chi),
        MarginalKind::OneZero => phi.to_vec(),
        MarginalKind::ZeroOne => chi.to_vec(),
    }
}

/// `Tr|γ − |w⟩⟨w||` for a unit lattice vector `w`.
pub fn trace_distance_to(gamma: &ReducedDensity, w: &[Complex64]) -> Result<f64> {
    let n = gamma.matrix.nrows();
    if w.len() != n {
        return Err(Error::InvalidInput(format!(
            "reference has {} entries, marginal acts on {n}",
            w.len()
        )));
    }
    let mut d = gamma.matrix.clone();
    for i in 0..n {
        for j in 0..n {
            d[(i, j)] -= w[i] * w[j].conj();
        }
    }
    let d = (&d + d.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(SymmetricEigen::new(d).eigenvalues.iter().map(|l| l.abs()).sum())
}

pub fn trace_distance(gamma: &ReducedDensity, u: &Field, v: &Field) -> Result<f64> {
    let m = u.grid().points_per_axis();
    let phi = unit(scaled(u))?;
    let chi = unit(scaled(v))?;
    let w = reference(gamma.kind, &phi, &chi);
    if gamma.kind == MarginalKind::OneOne && gamma.matrix.nrows() != m * m {
        return Err(Error::GridMismatch);
    }
    trace_distance_to(gamma, &w)
}

fn scaled(u: &Field) -> Vec<Complex64> {
    let s = u.grid().spacing().sqrt();
    u.values().iter().map(|z| z * s).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct MarginalBounds {
    /// `max{1 − ⟨u,γ⁽¹'⁰⁾u⟩, 1 − ⟨v,γ⁽⁰'¹⁾v⟩}`.
    pub lhs_max: f64,
    /// `1 − ⟨u⊗v, γ⁽¹'¹⁾ u⊗v⟩`.
    pub middle: f64,
    pub rhs_sum: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
}

impl MarginalBounds {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower_slack >= -tol && self.upper_slack >= -tol
    }
}

pub fn marginal_bounds_check(state: &ManyBodyState, u: &Field, v: &Field) -> Result<MarginalBounds> {
    let (phi, chi) = orbitals(&state.basis, u, v)?;
    let g11 = reduce(state, MarginalKind::OneOne)?;
    let a10 = 1.0 - reduce(state, MarginalKind::OneZero)?.expectation(&phi);
    let a01 = 1.0 - reduce(state, MarginalKind::ZeroOne)?.expectation(&chi);
    let middle = 1.0 - g11.expectation(&kron(&phi, &chi));
    let lhs_max = a10.max(a01);
    let rhs_sum = a10 + a01;
    Ok(MarginalBounds {
        lhs_max,
        middle,
        rhs_sum,
        lower_slack: middle - lhs_max,
        upper_slack: rhs_sum - middle,
    })
}

/// Multiplies the coefficient matrix `C[iA, iB]` by `mat` on one species index.
pub(crate) fn apply_species(basis: &TwoSpeciesBasis, species: Species, mat: &DMatrix<Complex64>, c: &[Complex64]) -> Vec<Complex64> {
    let (da, db) = (basis.species_a().len(), basis.species_b().len());
    let mut out = vec![ZERO; c.len()];
    match species {
        Species::A => {
            for i in 0..da {
                for j in 0..da {
                    let m = mat[(i, j)];
                    if m == ZERO {
                        continue;
                    }
                    for ib in 0..db {
                        out[i * db + ib] += m * c[j * db + ib];
                    }
                }
            }
        }
        Species::B => {
            for (o, row) in out.chunks_mut(db).zip(c.chunks(db)) {
                for i in 0..db {
                    o[i] = (0..db).map(|j| mat[(i, j)] * row[j]).sum();
                }
            }
        }
    }
    out
}

/// Eigenprojections `P_k` of the excitation number `Q = N − a†(φ)a(φ)` on one
/// species' occupation space.
#[derive(Clone, Debug)]
pub struct CountingProjectorSet {
    pub species: Species,
    pub particles: usize,
    pub orbital: Vec<Complex64>,
    pub excitation: DMatrix<Complex64>,
    pub projectors: Vec<DMatrix<Complex64>>,
}

impl CountingProjectorSet {
    /// Projector onto exactly `k` excitations; zero outside `0..=N`.
    pub fn projector(&self, k: usize) -> Option<&DMatrix<Complex64>> {
        self.projectors.get(k)
    }

    pub fn apply(&self, basis: &TwoSpeciesBasis, k: usize, c: &[Complex64]) -> Vec<Complex64> {
        match self.projectors.get(k) {
            Some(p) => apply_species(basis, self.species, p, c),
            None => vec![ZERO; c.len()],
        }
    }

    /// `Σ_k f(k) P_k` as a matrix on the species space.
    pub fn operator(&self, f: impl Fn(usize) -> f64) -> DMatrix<Complex64> {
        let d = self.excitation.nrows();
        self.projectors
            .iter()
            .enumerate()
            .fold(DMatrix::zeros(d, d), |acc, (k, p)| acc + p * Complex64::new(f(k), 0.0))
    }

    /// `‖P_kΨ‖²` for `k = 0..=N`.
    pub fn distribution(&self, state: &ManyBodyState) -> Vec<f64> {
        (0..=self.particles)
            .map(|k| {
                let c = self.apply(&state.basis, k, &state.coeffs);
                c.iter().map(|z| z.norm_sqr()).sum()
            })
            .collect()
    }
}

pub fn counting_projectors(basis: &TwoSpeciesBasis, u: &Field, species: Species) -> Result<CountingProjectorSet> {
    let phi = unit(lattice_orbital(u, basis)?)?;
    let sb = match species {
        Species::A => basis.species_a(),
        Species::B => basis.species_b(),
    };
    counting_projectors_on(sb, phi, species)
}

pub(crate) fn counting_projectors_on(sb: &SpeciesBasis, phi: Vec<Complex64>, species: Species) -> Result<CountingProjectorSet> {
    let n = sb.particles();
    let d = sb.len();
    let number = sb.number_operator(&phi);
    let q = DMatrix::<Complex64>::identity(d, d) * Complex64::new(n as f64, 0.0) - number;
    // spec(Q) ⊂ {0..N}, so P_k is the Lagrange polynomial Π_{j≠k} (Q − j)/(k − j)
    let eye = DMatrix::<Complex64>::identity(d, d);
    let projectors: Vec<DMatrix<Complex64>> = (0..=n)
        .map(|k| {
            (0..=n).filter(|&j| j != k).fold(eye.clone(), |acc, j| {
                let shifted = &q - &eye * Complex64::new(j as f64, 0.0);
                acc * shifted * Complex64::new(1.0 / (k as f64 - j as f64), 0.0)
            })
        })
        .collect();
    let idempotency = projectors
        .iter()
        .map(|p| (p * p - p).iter().fold(0.0f64, |a, z| a.max(z.norm())))
        .fold(0.0, f64::max);
    if idempotency > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "excitation operator spectrum is not in 0..={n} (idempotency defect {idempotency:e})"
        )));
    }
    Ok(CountingProjectorSet {
        species,
        particles: n,
        orbital: phi,
        excitation: q,
        projectors,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeightKind {
    S,
    N,
    M { xi: f64 },
    Custom(Vec<f64>),
}

/// A weight `g(k)` for `k = 0..=N` (values past `N` follow the same formula,
/// or the last value for custom weights).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFunction {
    pub kind: WeightKind,
    pub n: usize,
}

impl WeightFunction {
    pub fn s(n: usize) -> Self {
        WeightFunction { kind: WeightKind::S, n }
    }

    pub fn n(n: usize) -> Self {
        WeightFunction { kind: WeightKind::N, n }
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidInput("custom weights must be finite and nonnegative".into()));
        }
        Ok(WeightFunction {
            n: values.len() - 1,
            kind: WeightKind::Custom(values),
        })
    }

    pub fn eval(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let kf = k as f64;
        match &self.kind {
            WeightKind::S => kf / n,
            WeightKind::N => (kf / n).sqrt(),
            WeightKind::M { xi } => {
                if kf >= n.powf(1.0 - 2.0 * xi) {
                    (kf / n).sqrt()
                } else {
                    0.5 * (n.powf(-1.0 + xi) * kf + n.powf(-xi))
                }
            }
            WeightKind::Custom(v) => v[k.min(v.len() - 1)],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.eval(k)).collect()
    }
}

/// The regularized weight: `√(k/N)` above `k = N^{1−2ξ}`, and the chord
/// `½(N^{ξ−1}k + N^{−ξ})` below it.
pub fn weight_m(n: usize, xi: f64) -> Result<WeightFunction> {
    if !(xi > 0.0 && xi.is_finite()) || n == 0 {
        return Err(Error::InvalidInput(format!("need xi > 0 and N >= 1, got xi = {xi}, N = {n}")));
    }
    Ok(WeightFunction {
        kind: WeightKind::M { xi },
        n,
    })
}

/// `⟨Ψ, ĝΨ⟩ = Σ_k g(k)‖P_kΨ‖²`.
pub fn weight_expectation(state: &ManyBodyState, g: &WeightFunction, projectors: &CountingProjectorSet) -> Result<f64> {
    if g.n != projectors.particles {
        return Err(Error::InvalidInput(format!(
            "weight defined for N = {}, species has {} particles",
            g.n, projectors.particles
        )));
    }
    Ok(projectors
        .distribution(state)
        .iter()
        .enumerate()
        .map(|(k, p)| g.eval(k) * p)
        .sum())
}

/// `m̂ − m̂_j = Σ_k (m(k) − m(k+j)) P_k`.
pub fn shift_difference(projectors: &CountingProjectorSet, weight: &WeightFunction, j: usize) -> DMatrix<Complex64> {
    projectors.operator(|k| weight.eval(k) - weight.eval(k + j))
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_norm(m: &DMatrix<Complex64>) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().fold(0.0, |a, l| a.max(l.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeTerms {
    pub c_v1: Complex64,
    pub c_v2: Complex64,
    pub c_v12: Complex64,
}

impl DerivativeTerms {
    pub fn sum(&self) -> Complex64 {
        self.c_v1 + self.c_v2 + self.c_v12
    }

    /// The predicted `dα/dt = i(C_V1 + C_V2 + C_V12)`.
    pub fn alpha_rate(&self) -> f64 {
        (Complex64::i() * self.sum()).re
    }
}

fn dressed_occupation(n: &[u8], field: &[f64]) -> f64 {
    n.iter().zip(field).map(|(&k, f)| k as f64 * f).sum()
}

/// Commutator expectations `⟨Ψ, [X, 1 − n̂_u n̂_v/(N₁N₂)] Ψ⟩` with `X` the
/// interaction minus its mean-field dressing, split by potential.
pub fn derivative_decomposition(state: &ManyBodyState, u: &Field, v: &Field, spec: &HamiltonianSpec) -> Result<DerivativeTerms> {
    let basis = &state.basis;
    if spec.grid != *basis.grid() || spec.n1 != basis.n1() || spec.n2 != basis.n2() {
        return Err(Error::BasisMismatch);
    }
    let (phi, chi) = orbitals(basis, u, v)?;
    let (sa, sb) = (basis.species_a(), basis.species_b());
    let (da, db) = (sa.len(), sb.len());
    let c = &state.coeffs;
    let na = sa.number_operator(&phi);
    let nb = sb.number_operator(&chi);
    let n_psi = apply_species(basis, Species::B, &nb, &apply_species(basis, Species::A, &na, c));

    let v1u = spec.dressed(&spec.v1, &phi);
    let v2v = spec.dressed(&spec.v2, &chi);
    let v12u = spec.dressed(&spec.v12, &phi);
    let v12v = spec.dressed(&spec.v12, &chi);
    let (c1, c2) = (spec.c1(), spec.c2());
    let m = basis.sites();

    let x1: Vec<f64> = sa.configs().iter().map(|n| spec.g1 * pair_energy(&spec.v1, n) - dressed_occupation(n, &v1u)).collect();
    let x2: Vec<f64> = sb.configs().iter().map(|n| spec.g2 * pair_energy(&spec.v2, n) - dressed_occupation(n, &v2v)).collect();
    let mut x12 = Vec::with_capacity(da * db);
    for na_cfg in sa.configs() {
        for nb_cfg in sb.configs() {
            let mut cross = 0.0;
            for x in 0..m {
                if na_cfg[x] == 0 {
                    continue;
                }
                for y in 0..m {
                    cross += spec.v12[(x + m - y) % m] * na_cfg[x] as f64 * nb_cfg[y] as f64;
                }
            }
            x12.push(spec.g12 * cross - c2 * dressed_occupation(na_cfg, &v12v) - c1 * dressed_occupation(nb_cfg, &v12u));
        }
    }
    let norm = (basis.n1() * basis.n2()) as f64;
    let term = |diag: &dyn Fn(usize) -> f64| -> Complex64 {
        let z: Complex64 = (0..c.len()).map(|i| (c[i] * diag(i)).conj() * n_psi[i]).sum();
        Complex64::new(0.0, -2.0 * z.im / norm)
    };
    Ok(DerivativeTerms {
        c_v1: term(&|i| x1[i / db]),
        c_v2: term(&|i| x2[i % db]),
        c_v12: term(&|i| x12[i]),
    })
}

/// The 16 sandwiches `⟨Φ, (ab)[X, Y](cd) Φ⟩` of the cross commutator, where
/// `Φ` singles out one particle per species, `X = V₁₂(x−y) − (V₁₂∗|v|²)(x) −
/// (V₁₂∗|u|²)(y)` and `Y = (p^A + n̂_u^rest)(p^B + n̂_v^rest)/(N₁N₂)`. Letters
/// name the projector on the A slot first, then the B slot.
#[derive(Clone, Debug)]
pub struct LambdaOmegaTerms {
    pub terms: Vec<(String, Complex64)>,
    /// `⟨Φ, [X, Y] Φ⟩` evaluated without the insertion.
    pub total: Complex64,
}

impl LambdaOmegaTerms {
    pub fn get(&self, left: &str, right: &str) -> Complex64 {
        let key = format!("{left},{right}");
        self.terms
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, z)| *z)
            .unwrap_or_else(|| panic!("no term ({key})"))
    }

    pub fn sum(&self) -> Complex64 {
        self.terms.iter().map(|(_, z)| z).sum()
    }
}

pub fn lambda_omega_terms(state: &ManyBodyState, u: &Field, v: &Field, v12: &[f64]) -> Result<LambdaOmegaTerms> {
    let basis = &state.basis;
    let m = basis.sites();
    if v12.len() != m {
        return Err(Error::InvalidInput(format!("V12 has {} samples, lattice has {m} sites", v12.len())));
    }
    let (phi, chi) = orbitals(basis, u, v)?;
    let spec_like = |f: &[Complex64]| -> Vec<f64> {
        (0..m)
            .map(|x| (0..m).map(|y| v12[(x + m - y) % m] * f[y].norm_sqr()).sum())
            .collect()
    };
    let v12u = spec_like(&phi);
    let v12v = spec_like(&chi);
    let x_diag: Vec<f64> = (0..m * m)
        .map(|o| {
            let (x, y) = (o / m, o % m);
            v12[(x + m - y) % m] - v12v[x] - v12u[y]
        })
        .collect();
    let phi_split = split(state, 1, 1)?;
    let ra = phi_split.rest_a.number_operator(&phi);
    let rb = phi_split.rest_b.number_operator(&chi);
    let norm = 1.0 / (basis.n1() * basis.n2()) as f64;
    let apply_y = |s: &Split| -> Split {
        let t = s.project(1, &chi, false).add(&s.apply_rest_b(&rb));
        t.project(0, &phi, false).add(&t.apply_rest_a(&ra)).scale(norm)
    };
    let comm = |s: &Split| -> Split {
        let xy = apply_y(s).multiply_outer(&x_diag);
        let yx = apply_y(&s.multiply_outer(&x_diag));
        xy.sub(&yx)
    };
    let labels = ["pp", "pq", "qp", "qq"];
    let sandwich = |label: &str| -> Split {
        let b = label.as_bytes();
        phi_split.project_string(&[(0, &phi, b[0] == b'q'), (1, &chi, b[1] == b'q')])
    };
    let sides: Vec<Split> = labels.iter().map(|l| sandwich(l)).collect();
    let mut terms = Vec::with_capacity(16);
    for (i, left) in labels.iter().enumerate() {
        for (j, right) in labels.iter().enumerate() {
            let z = sides[i].dot(&comm(&sides[j]));
            terms.push((format!("{left},{right}"), z));
        }
    }
    Ok(LambdaOmegaTerms {
        terms,
        total: phi_split.dot(&comm(&phi_split)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectedAlpha {
    /// `⟨Ψ, m̂ᴬΨ⟩ + |E − E_eff|`.
    pub alpha_less: f64,
    /// `N₁(N₁−1) Re⟨Ψ, g₁(x₁−x₂) R₍₁₂₎ Ψ⟩`.
    pub correction_same: f64,
    /// `N₁N₂ Re⟨Ψ, g₁₂(x₁−y₁) R₍₁₂₎ Ψ⟩`.
    pub correction_cross: f64,
    pub alpha: f64,
}

/// Many-body energy per particle and the matching effective energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyPair {
    pub many_body: f64,
    pub effective: f64,
}

/// Corrected species-A functional with
/// `R₍₁₂₎ = p₁p₂(m̂ − m̂₂) + (p₁q₂ + q₁p₂)(m̂ − m̂₁)` and `m̂_j P_k = m(k+j) P_k`.
/// The pair functions are indexed by periodic displacement.
pub fn corrected_alpha(
    state: &ManyBodyState,
    u: &Field,
    g_pair_a: &[f64],
    g_pair_x: &[f64],
    weight: &WeightFunction,
    energies: EnergyPair,
) -> Result<CorrectedAlpha> {
    let basis = &state.basis;
    let m = basis.sites();
    if g_pair_a.len() != m || g_pair_x.len() != m {
        return Err(Error::InvalidInput("pair functions must have one sample per site".into()));
    }
    let proj = counting_projectors(basis, u, Species::A)?;
    let alpha_less = weight_expectation(state, weight, &proj)? + (energies.many_body - energies.effective).abs();
    let n1 = basis.n1();
    let (mut correction_same, mut correction_cross) = (0.0, 0.0);
    if n1 >= 2 {
        let phi = &proj.orbital;
        let shifted = |j: usize| -> Result<ManyBodyState> {
            let d = shift_difference(&proj, weight, j);
            ManyBodyState::new(basis, apply_species(basis, Species::A, &d, &state.coeffs))
        };
        let d1 = shifted(1)?;
        let d2 = shifted(2)?;
        // R Ψ restricted to the singled-out slots 0, 1 (both A)
        let r_psi = |kb: usize| -> Result<Split> {
            let s1 = split(&d1, 2, kb)?;
            let s2 = split(&d2, 2, kb)?;
            let pp = s2.project_string(&[(0, phi, false), (1, phi, false)]);
            let pq = s1.project_string(&[(0, phi, false), (1, phi, true)]);
            let qp = s1.project_string(&[(0, phi, true), (1, phi, false)]);
            Ok(pp.add(&pq).add(&qp))
        };
        let same_g: Vec<f64> = (0..m * m).map(|o| g_pair_a[(o / m + m - o % m) % m]).collect();
        let psi2 = split(state, 2, 0)?;
        correction_same = (n1 * (n1 - 1)) as f64 * psi2.dot(&r_psi(0)?.multiply_outer(&same_g)).re;

        let cross_g: Vec<f64> = (0..m * m * m)
            .map(|o| {
                let (x1, y1) = (o / (m * m), o % m);
                g_pair_x[(x1 + m - y1) % m]
            })
            .collect();
        let psi3 = split(state, 2, 1)?;
        correction_cross = (n1 * basis.n2()) as f64 * psi3.dot(&r_psi(1)?.multiply_outer(&cross_g)).re;
    }
    Ok(CorrectedAlpha {
        alpha_less,
        correction_same,
        correction_cross,
        alpha: alpha_less - correction_same - correction_cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::manybody::{build_basis, product_state};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(basis: &Arc<TwoSpeciesBasis>, seed: u64) -> ManyBodyState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..basis.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ManyBodyState::new(basis, coeffs).unwrap().normalized().unwrap()
    }

    fn orbital(g: &Grid, shift: f64) -> Field {
        Field::from_fn(g, |x| Complex64::from_polar(1.0 + 0.3 * (x[0] + shift).cos(), 0.4 * x[0] + shift))
            .normalized()
            .unwrap()
    }

    #[test]
    fn product_marginals_are_pure() {
        let g = Grid::new(1, 4, 4.0).unwrap();
        let basis = build_basis(&g, 2, 3).unwrap();
        let (u, v) = (orbital(&g, 0.0), orbital(&g, 1.0));
        let psi = product_state(&u, &v, &basis).unwrap();
        let gamma = reduce(&psi, MarginalKind::OneOne).unwrap();
        assert!(trace_distance(&gamma, &u, &v).unwrap() < 1e-12);
        assert!(alpha_11(&psi, &u, &v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn marginal_invariants_and_partial_traces() {
        let g = Grid::new(1, 4, 4.0).unwrap();
        let basis = build_basis(&g, 2, 2).unwrap();
        let psi = random_state(&basis, 3);
        let g11 = reduce(&psi, MarginalKind::OneOne).unwrap();
        assert!(g11.hermiticity_error() < 1e-12);
        assert!((g11.trace() - 1.0).norm() < 1e-12);
        assert!(g11.eigenvalues()[0] > -1e-12);
        for (kind, part) in [
            (MarginalKind::OneZero, g11.trace_out_b().unwrap()),
            (MarginalKind::ZeroOne, g11.trace_out_a().unwrap()),
        ] {
            let direct = reduce(&psi, kind).unwrap();
            assert!((direct.matrix - part.matrix).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn maximally_mixed_single_particle_marginal() {
        // (|0⟩_A|0⟩_B + |1⟩_A|1⟩_B)/√2 on two sites
        let g = Grid::lattice(2, 2.0).unwrap();
        let basis = build_basis(&g, 1, 1).unwrap();
        let mut c = vec![ZERO; 4];
        let ia0 = basis.species_a().index_of(&[1, 0]).unwrap();
        let ia1 = basis.species_a().index_of(&[0, 1]).unwrap();
        let ib0 = basis.species_b().index_of(&[1, 0]).unwrap();
        let ib1 = basis.species_b().index_of(&[0, 1]).unwrap();
        c[basis.index(ia0, ib0)] = Complex64::new(0.5f64.sqrt(), 0.0);
        c[basis.index(ia1, ib1)] = Complex64::new(0.5f64.sqrt(), 0.0);
        let psi = ManyBodyState::new(&basis, c).unwrap();
        let g10 = reduce(&psi, MarginalKind::OneZero).unwrap();
        let expected = DMatrix::<Complex64>::identity(2, 2) * Complex64::new(0.5, 0.0);
        assert!((g10.matrix - expected).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn weight_m_shape() {
        let w = weight_m(16, 0.25).unwrap();
        assert!((w.eval(16) - 1.0).abs() < 1e-15);
        let crossover = 16f64.powf(0.5) as usize;
        assert!((w.eval(crossover) - 16f64.powf(-0.25)).abs() < 1e-15);
        assert!((w.eval(0) - 0.5 * 16f64.powf(-0.25)).abs() < 1e-15);
        assert!(weight_m(4, 0.0).is_err());
    }

    #[test]
    fn counting_projectors_resolve_identity() {
        let g = Grid::new(1, 4, 4.0).unwrap();
        let basis = build_basis(&g, 3, 1).unwrap();
        let proj = counting_projectors(&basis, &orbital(&g, 0.5), Species::A).unwrap();
        let d = proj.excitation.nrows();
        let sum = proj.projectors.iter().fold(DMatrix::<Complex64>::zeros(d, d), |a, p| a + p);
        assert!((sum - DMatrix::identity(d, d)).iter().all(|z| z.norm() < 1e-12));
        let q = proj.operator(|k| k as f64);
        let err = (q - &proj.excitation).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn corrected_alpha_without_pairs_is_alpha_less() {
        let g = Grid::new(1, 4, 4.0).unwrap();
        let basis = build_basis(&g, 2, 2).unwrap();
        let psi = random_state(&basis, 11);
        let u = orbital(&g, 0.0);
        let zero = vec![0.0; 4];
        let w = weight_m(2, 0.2).unwrap();
        let e = EnergyPair {
            many_body: 1.0,
            effective: 0.75,
        };
        let r = corrected_alpha(&psi, &u, &zero, &zero, &w, e).unwrap();
        assert_eq!(r.alpha, r.alpha_less);
        let proj = counting_projectors(&basis, &u, Species::A).unwrap();
        assert!((r.alpha_less - weight_expectation(&psi, &w, &proj).unwrap() - 0.25).abs() < 1e-14);
    }
}
