//! Exact two-species bosonic dynamics on a 1D periodic lattice.
//!
//! States live in the symmetric `(N₁, N₂)` sector, expanded over products of
//! occupation vectors. Orbitals on the lattice are the grid fields scaled by
//! `√h`, so that a field of unit discrete L² norm becomes a unit vector in ℓ².

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const DEFAULT_DIMENSION_CAP: usize = 200_000;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of ways to place `particles` bosons on `sites` sites.
pub fn species_dimension(sites: usize, particles: usize) -> u128 {
    if sites == 0 {
        return u128::from(particles == 0);
    }
    binomial((sites + particles - 1) as u64, particles as u64)
}

/// Occupation vectors of one species, in lexicographic order.
#[derive(Debug)]
pub struct SpeciesBasis {
    sites: usize,
    particles: usize,
    configs: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl SpeciesBasis {
    pub fn new(sites: usize, particles: usize) -> Result<Self> {
        if particles > u8::MAX as usize {
            return Err(Error::InvalidInput(format!("{particles} particles per species is too many")));
        }
        let mut configs = Vec::new();
        let mut current = vec![0u8; sites];
        enumerate(&mut current, 0, particles, &mut configs);
        let index = configs.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(SpeciesBasis {
            sites,
            particles,
            configs,
            index,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn config(&self, i: usize) -> &[u8] {
        &self.configs[i]
    }

    pub fn configs(&self) -> &[Vec<u8>] {
        &self.configs
    }

    pub fn index_of(&self, config: &[u8]) -> Option<usize> {
        self.index.get(config).copied()
    }

    /// `a†_to a_from |n⟩ = amp |n'⟩`, as `(index of n', amp)`.
    pub fn hop(&self, i: usize, from: usize, to: usize) -> Option<(usize, f64)> {
        let c = &self.configs[i];
        if c[from] == 0 {
            return None;
        }
        if from == to {
            return Some((i, c[from] as f64));
        }
        let mut n = c.clone();
        let amp = (n[from] as f64 * (n[to] as f64 + 1.0)).sqrt();
        n[from] -= 1;
        n[to] += 1;
        Some((self.index[&n], amp))
    }

    /// For each site `x`, the nonzero matrix elements `(i, j, √n_x)` of `a_x`
    /// from this basis into `lower` (one particle fewer).
    pub fn annihilators(&self, lower: &SpeciesBasis) -> Vec<Vec<(usize, usize, f64)>> {
        debug_assert_eq!(lower.particles + 1, self.particles);
        (0..self.sites)
            .map(|x| {
                self.configs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c[x] > 0)
                    .map(|(i, c)| {
                        let mut n = c.clone();
                        n[x] -= 1;
                        (i, lower.index[&n], (c[x] as f64).sqrt())
                    })
                    .collect()
            })
            .collect()
    }

    /// Matrix of `a†(φ) a(φ) = Σ_{x,x'} φ_x conj(φ_x') a†_x a_x'`.
    pub fn number_operator(&self, phi: &[Complex64]) -> DMatrix<Complex64> {
        let d = self.len();
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for i in 0..d {
            for from in 0..self.sites {
                for to in 0..self.sites {
                    if let Some((j, amp)) = self.hop(i, from, to) {
                        m[(j, i)] += phi[to] * phi[from].conj() * amp;
                    }
                }
            }
        }
        m
    }
}

fn enumerate(current: &mut Vec<u8>, site: usize, left: usize, out: &mut Vec<Vec<u8>>) {
    if site + 1 == current.len() {
        current[site] = left as u8;
        out.push(current.clone());
        current[site] = 0;
        return;
    }
    if current.is_empty() {
        return;
    }
    for n in 0..=left {
        current[site] = n as u8;
        enumerate(current, site + 1, left - n, out);
    }
    current[site] = 0;
}

/// Product basis `|n⃗ᴬ⟩ ⊗ |n⃗ᴮ⟩` of the `(N₁, N₂)` sector; flat index
/// `iA · dim_B + iB`.
#[derive(Debug)]
pub struct TwoSpeciesBasis {
    grid: Grid,
    a: Arc<SpeciesBasis>,
    b: Arc<SpeciesBasis>,
}

pub const BASIS_ORDER_VERSION: &str = "lex-occupation-v1";

impl TwoSpeciesBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sites(&self) -> usize {
        self.grid.points_per_axis()
    }

    pub fn n1(&self) -> usize {
        self.a.particles
    }

    pub fn n2(&self) -> usize {
        self.b.particles
    }

    pub fn species_a(&self) -> &Arc<SpeciesBasis> {
        &self.a
    }

    pub fn species_b(&self) -> &Arc<SpeciesBasis> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.len() * self.b.len()
    }

    pub fn index(&self, ia: usize, ib: usize) -> usize {
        ia * self.b.len() + ib
    }

    pub fn split_index(&self, i: usize) -> (usize, usize) {
        (i / self.b.len(), i % self.b.len())
    }

    pub fn same_as(&self, other: &TwoSpeciesBasis) -> bool {
        self.grid == other.grid && self.n1() == other.n1() && self.n2() == other.n2()
    }
}

pub fn build_basis(grid: &Grid, n1: usize, n2: usize) -> Result<Arc<TwoSpeciesBasis>> {
    build_basis_with_cap(grid, n1, n2, DEFAULT_DIMENSION_CAP)
}

pub fn build_basis_with_cap(grid: &Grid, n1: usize, n2: usize, cap: usize) -> Result<Arc<TwoSpeciesBasis>> {
    if grid.dim() != 1 {
        return Err(Error::InvalidInput("the many-body lattice is one-dimensional".into()));
    }
    let m = grid.points_per_axis();
    if m < 2 {
        return Err(Error::InvalidInput("need at least 2 sites".into()));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput(format!("particle numbers must be positive, got ({n1}, {n2})")));
    }
    let dim = sector_dimension(m, n1, n2);
    if dim > cap as u128 {
        return Err(Error::DimensionCap { dim, cap });
    }
    Ok(Arc::new(TwoSpeciesBasis {
        grid: grid.clone(),
        a: Arc::new(SpeciesBasis::new(m, n1)?),
        b: Arc::new(SpeciesBasis::new(m, n2)?),
    }))
}

/// `C(M+N₁−1, N₁) · C(M+N₂−1, N₂)`.
pub fn sector_dimension(sites: usize, n1: usize, n2: usize) -> u128 {
    species_dimension(sites, n1) * species_dimension(sites, n2)
}

#[derive(Clone, Debug)]
pub struct ManyBodyState {
    pub basis: Arc<TwoSpeciesBasis>,
    pub coeffs: Vec<Complex64>,
    pub time: f64,
}

impl ManyBodyState {
    pub fn new(basis: &Arc<TwoSpeciesBasis>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::BasisMismatch);
        }
        Ok(ManyBodyState {
            basis: basis.clone(),
            coeffs,
            time: 0.0,
        })
    }

    pub fn basis_vector(basis: &Arc<TwoSpeciesBasis>, i: usize) -> Self {
        let mut coeffs = vec![ZERO; basis.dim()];
        coeffs[i] = Complex64::new(1.0, 0.0);
        ManyBodyState {
            basis: basis.clone(),
            coeffs,
            time: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coeffs)
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput("cannot normalize a zero state".into()));
        }
        self.coeffs.iter_mut().for_each(|c| *c /= n);
        Ok(self)
    }

    pub fn inner(&self, other: &ManyBodyState) -> Result<Complex64> {
        if !self.basis.same_as(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        Ok(inner(&self.coeffs, &other.coeffs))
    }

    /// `1 − |⟨self, other⟩|²` for normalized states.
    pub fn infidelity(&self, other: &ManyBodyState) -> Result<f64> {
        Ok(1.0 - self.inner(other)?.norm_sqr())
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scaling {
    /// Prefactors `1/N₁`, `1/N₂`, `1/(N₁+N₂)` on fixed potentials.
    MeanField,
    /// 1D analog of the Gross-Pitaevskii family: `N^{-1} · N^β V(N^β x)` with
    /// `N = N₁, N₂, N₁+N₂` for the three potentials.
    BetaFamily { beta: f64 },
}

/// Sampled pair potentials and prefactors of the lattice Hamiltonian
/// `Σ T_i + g₁ Σ_{i<j} V₁ + g₂ Σ_{r<s} V₂ + g₁₂ Σ_{i,r} V₁₂`.
#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    pub scaling: Scaling,
    pub grid: Grid,
    pub n1: usize,
    pub n2: usize,
    /// Pair potentials indexed by periodic displacement (already β-scaled).
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v12: Vec<f64>,
    pub g1: f64,
    pub g2: f64,
    pub g12: f64,
}

fn check_pair_potential(name: &str, v: &[f64]) -> Result<()> {
    let m = v.len();
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    for (j, x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("potential {name} is not finite")));
        }
        if (v[(m - j) % m] - x).abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!("potential {name} is not even under site reflection")));
        }
    }
    Ok(())
}

impl HamiltonianSpec {
    pub fn mean_field(grid: &Grid, v1: &Field, v2: &Field, v12: &Field, n1: usize, n2: usize) -> Result<Self> {
        for (name, v) in [("V1", v1), ("V2", v2), ("V12", v12)] {
            if v.grid() != grid {
                return Err(Error::GridMismatch);
            }
            if v.values().iter().any(|z| z.im != 0.0) {
                return Err(Error::InvalidInput(format!("potential {name} must be real")));
            }
        }
        Self::from_samples(grid, Scaling::MeanField, v1.real_parts(), v2.real_parts(), v12.real_parts(), n1, n2)
    }

    /// Samples `N^β V(N^β x)` on the periodic displacement of every site.
    pub fn beta_family(
        grid: &Grid,
        shapes: [&dyn Fn(f64) -> f64; 3],
        beta: f64,
        n1: usize,
        n2: usize,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidInput(format!("beta = {beta} not in (0, 1)")));
        }
        let sample = |shape: &dyn Fn(f64) -> f64, n: usize| -> Vec<f64> {
            let s = (n as f64).powf(beta);
            (0..grid.points_per_axis())
                .map(|j| s * shape(s * grid.displacement(j)))
                .collect()
        };
        Self::from_samples(
            grid,
            Scaling::BetaFamily { beta },
            sample(shapes[0], n1),
            sample(shapes[1], n2),
            sample(shapes[2], n1 + n2),
            n1,
            n2,
        )
    }

    fn from_samples(
        grid: &Grid,
        scaling: Scaling,
        v1: Vec<f64>,
        v2: Vec<f64>,
        v12: Vec<f64>,
        n1: usize,
        n2: usize,
    ) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidInput("the many-body lattice is one-dimensional".into()));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidInput("particle numbers must be positive".into()));
        }
        check_pair_potential("V1", &v1)?;
        check_pair_potential("V2", &v2)?;
        check_pair_potential("V12", &v12)?;
        Ok(HamiltonianSpec {
            scaling,
            grid: grid.clone(),
            n1,
            n2,
            v1,
            v2,
            v12,
            g1: 1.0 / n1 as f64,
            g2: 1.0 / n2 as f64,
            g12: 1.0 / (n1 + n2) as f64,
        })
    }

    pub fn c1(&self) -> f64 {
        self.n1 as f64 / (self.n1 + self.n2) as f64
    }

    pub fn c2(&self) -> f64 {
        self.n2 as f64 / (self.n1 + self.n2) as f64
    }

    /// Potentials of the matching coupled Hartree system, as grid fields.
    pub fn effective_potentials(&self) -> Result<(Field, Field, Field)> {
        Ok((
            Field::from_real(&self.grid, &self.v1)?,
            Field::from_real(&self.grid, &self.v2)?,
            Field::from_real(&self.grid, &self.v12)?,
        ))
    }

    /// `(V ∗ |φ|²)(x) = Σ_y V(x − y)|φ_y|²` for a unit lattice vector `φ`.
    pub fn dressed(&self, v: &[f64], phi: &[Complex64]) -> Vec<f64> {
        let m = phi.len();
        (0..m)
            .map(|x| (0..m).map(|y| v[(x + m - y) % m] * phi[y].norm_sqr()).sum())
            .collect()
    }
}

/// Interaction energy `½Σ_{x,y} V(x−y) n_x n_y − ½V(0)Σ n_x` of one species.
pub(crate) fn pair_energy(v: &[f64], n: &[u8]) -> f64 {
    let m = n.len();
    let mut e = 0.0;
    for x in 0..m {
        if n[x] == 0 {
            continue;
        }
        let nx = n[x] as f64;
        e += 0.5 * v[0] * nx * (nx - 1.0);
        for y in (x + 1)..m {
            e += v[(y + m - x) % m] * nx * n[y] as f64;
        }
    }
    e
}

fn hopping_table(basis: &SpeciesBasis, h: f64) -> Vec<Vec<(usize, f64)>> {
    let m = basis.sites;
    let t = 1.0 / (h * h);
    (0..basis.len())
        .map(|i| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for x in 0..m {
                for to in [(x + 1) % m, (x + m - 1) % m] {
                    if let Some((j, amp)) = basis.hop(i, x, to) {
                        match row.iter_mut().find(|(k, _)| *k == j) {
                            Some(entry) => entry.1 -= t * amp,
                            None => row.push((j, -t * amp)),
                        }
                    }
                }
            }
            row.sort_by_key(|(j, _)| *j);
            row
        })
        .collect()
}

/// Matrix-free lattice Hamiltonian on one sector.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    basis: Arc<TwoSpeciesBasis>,
    hop_a: Vec<Vec<(usize, f64)>>,
    hop_b: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
}

impl Hamiltonian {
    pub fn new(spec: &HamiltonianSpec, basis: &Arc<TwoSpeciesBasis>) -> Result<Self> {
        if spec.grid != basis.grid || spec.n1 != basis.n1() || spec.n2 != basis.n2() {
            return Err(Error::BasisMismatch);
        }
        let h = basis.grid.spacing();
        let (sa, sb) = (&basis.a, &basis.b);
        let kin_diag = 2.0 / (h * h);
        let diag_a: Vec<f64> = sa
            .configs
            .iter()
            .map(|n| kin_diag * sa.particles as f64 + spec.g1 * pair_energy(&spec.v1, n))
            .collect();
        let diag_b: Vec<f64> = sb
            .configs
            .iter()
            .map(|n| kin_diag * sb.particles as f64 + spec.g2 * pair_energy(&spec.v2, n))
            .collect();
        let m = basis.sites();
        // Σ_y V12(x − y) n^B_y for every B configuration
        let field_b: Vec<Vec<f64>> = sb
            .configs
            .iter()
            .map(|n| {
                (0..m)
                    .map(|x| (0..m).map(|y| spec.v12[(x + m - y) % m] * n[y] as f64).sum())
                    .collect()
            })
            .collect();
        let mut diagonal = Vec::with_capacity(basis.dim());
        for (ia, na) in sa.configs.iter().enumerate() {
            for (ib, fb) in field_b.iter().enumerate() {
                let cross: f64 = (0..m).map(|x| na[x] as f64 * fb[x]).sum();
                diagonal.push(diag_a[ia] + diag_b[ib] + spec.g12 * cross);
            }
        }
        Ok(Hamiltonian {
            basis: basis.clone(),
            hop_a: hopping_table(sa, h),
            hop_b: hopping_table(sb, h),
            diagonal,
        })
    }

    pub fn basis(&self) -> &Arc<TwoSpeciesBasis> {
        &self.basis
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// `out = H ψ`.
    pub fn apply_into(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let db = self.basis.b.len();
        out.par_chunks_mut(db).enumerate().for_each(|(ia, row)| {
            let base = ia * db;
            for (ib, o) in row.iter_mut().enumerate() {
                let mut acc = psi[base + ib] * self.diagonal[base + ib];
                for &(ja, t) in &self.hop_a[ia] {
                    acc += psi[ja * db + ib] * t;
                }
                for &(jb, t) in &self.hop_b[ib] {
                    acc += psi[base + jb] * t;
                }
                *o = acc;
            }
        });
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; psi.len()];
        self.apply_into(psi, &mut out);
        out
    }

    /// Dense matrix, for small sectors.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.basis.dim();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = vec![ZERO; d];
            e[j] = Complex64::new(1.0, 0.0);
            for (i, z) in self.apply(&e).into_iter().enumerate() {
                m[(i, j)] = z.re;
            }
        }
        m
    }

    /// Largest eigenvalue bound from Gershgorin discs.
    pub fn norm_bound(&self) -> f64 {
        let db = self.basis.b.len();
        let sa: Vec<f64> = self.hop_a.iter().map(|r| r.iter().map(|(_, t)| t.abs()).sum()).collect();
        let sb: Vec<f64> = self.hop_b.iter().map(|r| r.iter().map(|(_, t)| t.abs()).sum()).collect();
        self.diagonal
            .iter()
            .enumerate()
            .map(|(i, d)| d.abs() + sa[i / db] + sb[i % db])
            .fold(0.0, f64::max)
    }
}

pub fn apply_hamiltonian(spec: &HamiltonianSpec, state: &ManyBodyState) -> Result<ManyBodyState> {
    let h = Hamiltonian::new(spec, &state.basis)?;
    Ok(ManyBodyState {
        basis: state.basis.clone(),
        coeffs: h.apply(&state.coeffs),
        time: state.time,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub dimension: usize,
    pub tolerance: f64,
    pub max_substeps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            dimension: 30,
            tolerance: 1e-12,
            max_substeps: 100_000,
        }
    }
}

/// Lanczos approximation of `exp(−i τ H)`, with substepping when the Krylov
/// error estimate exceeds the tolerance.
#[derive(Debug, Clone)]
pub struct Propagator {
    hamiltonian: Hamiltonian,
    opts: KrylovOptions,
}

impl Propagator {
    pub fn new(hamiltonian: Hamiltonian, opts: KrylovOptions) -> Self {
        Propagator { hamiltonian, opts }
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn propagate(&self, state: &ManyBodyState, dt: f64) -> Result<ManyBodyState> {
        if !state.basis.same_as(&self.hamiltonian.basis) {
            return Err(Error::BasisMismatch);
        }
        if !dt.is_finite() {
            return Err(Error::InvalidInput("non-finite time step".into()));
        }
        let mut psi = state.coeffs.clone();
        let mut remaining = dt;
        let mut tau = dt;
        let mut substeps = 0;
        while remaining != 0.0 {
            if tau.abs() > remaining.abs() {
                tau = remaining;
            }
            let (next, err) = self.krylov_step(&psi, tau);
            substeps += 1;
            if substeps > self.opts.max_substeps {
                return Err(Error::KrylovNotConverged { substeps });
            }
            if err > self.opts.tolerance {
                tau *= 0.5;
                continue;
            }
            psi = next;
            remaining -= tau;
            if remaining.abs() < 1e-15 * dt.abs() {
                remaining = 0.0;
            }
        }
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("many-body state after propagation".into()));
        }
        Ok(ManyBodyState {
            basis: state.basis.clone(),
            coeffs: psi,
            time: state.time + dt,
        })
    }

    fn krylov_step(&self, psi: &[Complex64], tau: f64) -> (Vec<Complex64>, f64) {
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return (psi.to_vec(), 0.0);
        }
        let m = self.opts.dimension.max(1);
        let mut basis: Vec<Vec<Complex64>> = vec![psi.iter().map(|z| z / beta0).collect()];
        let mut alphas = Vec::with_capacity(m);
        let mut betas: Vec<f64> = Vec::with_capacity(m);
        let mut w = vec![ZERO; psi.len()];
        let mut breakdown = false;
        let scale = self.hamiltonian.norm_bound().max(1.0);
        for j in 0..m {
            self.hamiltonian.apply_into(&basis[j], &mut w);
            let alpha = inner(&basis[j], &w).re;
            alphas.push(alpha);
            // full reorthogonalization, twice
            for _ in 0..2 {
                for v in &basis {
                    let c = inner(v, &w);
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
                }
            }
            let beta = norm(&w);
            betas.push(beta);
            if beta < 1e-13 * scale {
                breakdown = true;
                break;
            }
            if j + 1 < m {
                basis.push(w.iter().map(|z| z / beta).collect());
            }
        }
        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let coeffs: Vec<Complex64> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|l| {
                        let s = eig.eigenvectors[(i, l)] * eig.eigenvectors[(0, l)];
                        Complex64::from_polar(s, -tau * eig.eigenvalues[l])
                    })
                    .sum()
            })
            .collect();
        let err = if breakdown { 0.0 } else { betas[k - 1] * coeffs[k - 1].norm() };
        let mut out = vec![ZERO; psi.len()];
        for (c, v) in coeffs.iter().zip(&basis) {
            let c = c * beta0;
            out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
        }
        (out, err * beta0)
    }
}

/// `exp(−i dt H) ψ` for the given spec.
pub fn propagate(spec: &HamiltonianSpec, state: &ManyBodyState, dt: f64) -> Result<ManyBodyState> {
    let h = Hamiltonian::new(spec, &state.basis)?;
    Propagator::new(h, KrylovOptions::default()).propagate(state, dt)
}

/// Lattice orbital `√h · u` of a grid field on the basis lattice.
pub fn lattice_orbital(u: &Field, basis: &TwoSpeciesBasis) -> Result<Vec<Complex64>> {
    if u.grid() != basis.grid() {
        return Err(Error::GridMismatch);
    }
    let s = u.grid().spacing().sqrt();
    Ok(u.values().iter().map(|z| z * s).collect())
}

pub(crate) fn unit(phi: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let n = norm(&phi);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidInput("orbital has zero norm".into()));
    }
    Ok(phi.into_iter().map(|z| z / n).collect())
}

fn tensor_power(basis: &SpeciesBasis, phi: &[Complex64]) -> Vec<Complex64> {
    let n = basis.particles;
    let ln_fact = |k: usize| (1..=k).map(|j| (j as f64).ln()).sum::<f64>();
    basis
        .configs
        .iter()
        .map(|c| {
            let multinomial = (ln_fact(n) - c.iter().map(|&k| ln_fact(k as usize)).sum::<f64>()).exp();
            let amp: Complex64 = c
                .iter()
                .zip(phi)
                .map(|(&k, p)| p.powu(k as u32))
                .product();
            amp * multinomial.sqrt()
        })
        .collect()
}

/// `u^{⊗N₁} ⊗ v^{⊗N₂}` in the occupation basis, normalized.
pub fn product_state(u: &Field, v: &Field, basis: &Arc<TwoSpeciesBasis>) -> Result<ManyBodyState> {
    let phi = unit(lattice_orbital(u, basis)?)?;
    let chi = unit(lattice_orbital(v, basis)?)?;
    let ca = tensor_power(&basis.a, &phi);
    let cb = tensor_power(&basis.b, &chi);
    let coeffs = ca.iter().flat_map(|x| cb.iter().map(move |y| x * y)).collect();
    ManyBodyState::new(basis, coeffs)?.normalized()
}

/// `⟨Ψ, HΨ⟩ / (N₁ + N₂)`.
pub fn manybody_energy(spec: &HamiltonianSpec, state: &ManyBodyState) -> Result<f64> {
    let h = Hamiltonian::new(spec, &state.basis)?;
    Ok(energy_with(&h, state))
}

pub fn energy_with(h: &Hamiltonian, state: &ManyBodyState) -> f64 {
    let hpsi = h.apply(&state.coeffs);
    inner(&state.coeffs, &hpsi).re / (state.basis.n1() + state.basis.n2()) as f64
}

const STATE_MAGIC: &str = "twocomp-manybody v1";

/// Header (`M`, `L`, `N₁`, `N₂`, time, basis order tag) then little-endian
/// `(re, im)` coefficient pairs in basis order.
pub fn write_state<W: Write>(state: &ManyBodyState, mut out: W) -> std::io::Result<()> {
    let b = &state.basis;
    writeln!(out, "{STATE_MAGIC}")?;
    writeln!(out, "sites = {}", b.sites())?;
    writeln!(out, "length = {:e}", b.grid().length())?;
    writeln!(out, "n1 = {}", b.n1())?;
    writeln!(out, "n2 = {}", b.n2())?;
    writeln!(out, "time = {:e}", state.time)?;
    writeln!(out, "basis_order = {BASIS_ORDER_VERSION}")?;
    writeln!(out, "end_header")?;
    for z in &state.coeffs {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_state<R: BufRead>(mut input: R) -> Result<ManyBodyState> {
    let mut header = HashMap::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        input
            .read_line(&mut line)
            .map_err(|e| Error::Format(format!("state header: {e}")))?;
        let l = line.trim_end();
        if first {
            if l != STATE_MAGIC {
                return Err(Error::Format("missing state header tag".into()));
            }
            first = false;
            continue;
        }
        if l == "end_header" {
            break;
        }
        if l.is_empty() {
            return Err(Error::Format("truncated state header".into()));
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line `{l}`")))?;
        header.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("missing `{k}`")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Format(format!("bad `{k}`"))) };
    if get("basis_order")? != BASIS_ORDER_VERSION {
        return Err(Error::Format("unsupported basis order".into()));
    }
    let grid = Grid::lattice(num("sites")? as usize, num("length")?)?;
    let basis = build_basis(&grid, num("n1")? as usize, num("n2")? as usize)?;
    let mut bytes = vec![0u8; basis.dim() * 16];
    std::io::Read::read_exact(&mut input, &mut bytes).map_err(|e| Error::Format(format!("state payload: {e}")))?;
    let coeffs = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let mut state = ManyBodyState::new(&basis, coeffs)?;
    state.time = num("time")?;
    Ok(state)
}

/// Discrete kinetic energy `4 sin²(k h/2)/h²` of lattice momentum `k = 2πj/L`.
pub fn lattice_mode_energy(grid: &Grid, j: usize) -> f64 {
    let k = 2.0 * PI * j as f64 / grid.length();
    let s = (0.5 * k * grid.spacing()).sin();
    4.0 * s * s / (grid.spacing() * grid.spacing())
}
