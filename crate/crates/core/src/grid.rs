//! Periodic tensor-product grids and the spectral primitives built on them.
//!
//! Points sit at `x_j = j·h`, `j = 0..M`, on each axis of a box of side `L`.
//! Wavenumbers use the usual half-spectrum layout with the Nyquist mode on the
//! negative side. The kinetic operator is always returned as the positive
//! operator `−Δ`.

use std::f64::consts::TAU;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct GridData {
    dim: usize,
    points: usize,
    length: f64,
    spacing: f64,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Cheap-to-clone handle on an immutable periodic grid.
#[derive(Clone)]
pub struct Grid {
    data: Arc<GridData>,
}

impl Grid {
    pub fn new(dim: usize, points: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if points < 4 {
            return Err(Error::InvalidGrid(format!("{points} points per axis, need at least 4")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(Self::build(dim, points, length))
    }

    /// Like [`Grid::new`] but only requires two points per axis. The many-body
    /// lattice uses this for tiny oracle problems; spectral routines still work.
    pub fn lattice(points: usize, length: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidGrid(format!("{points} sites, need at least 2")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(Self::build(1, points, length))
    }

    fn build(dim: usize, points: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);
        let wavenumbers = (0..points)
            .map(|j| TAU * signed_index(j, points) as f64 / length)
            .collect();
        Grid {
            data: Arc::new(GridData {
                dim,
                points,
                length,
                spacing: length / points as f64,
                wavenumbers,
                forward,
                inverse,
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.data.points
    }

    pub fn length(&self) -> f64 {
        self.data.length
    }

    pub fn spacing(&self) -> f64 {
        self.data.spacing
    }

    /// Volume element `h^dim` of the discrete L² inner product.
    pub fn cell_volume(&self) -> f64 {
        self.data.spacing.powi(self.data.dim as i32)
    }

    pub fn total_points(&self) -> usize {
        self.data.points.pow(self.data.dim as u32)
    }

    /// Per-axis wavenumbers `2π·s/L`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.data.wavenumbers
    }

    /// Per-axis coordinates `j·h`.
    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.data.points).map(|j| j as f64 * self.data.spacing).collect()
    }

    /// Per-axis signed periodic displacement of index `j` from the origin.
    pub fn displacement(&self, j: usize) -> f64 {
        signed_index(j % self.data.points, self.data.points) as f64 * self.data.spacing
    }

    /// Multi-index of a flat (row-major) point index.
    pub fn unflatten(&self, mut index: usize) -> [usize; 3] {
        let m = self.data.points;
        let mut out = [0; 3];
        for axis in (0..self.data.dim).rev() {
            out[axis] = index % m;
            index /= m;
        }
        out
    }

    /// Position of each point as a `dim`-vector of coordinates.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        let h = self.data.spacing;
        (0..self.total_points())
            .map(|i| {
                let idx = self.unflatten(i);
                [idx[0] as f64 * h, idx[1] as f64 * h, idx[2] as f64 * h]
            })
            .collect()
    }

    /// Signed periodic displacement of each point from the origin, for
    /// sampling even pair potentials.
    pub fn displacements(&self) -> Vec<[f64; 3]> {
        (0..self.total_points())
            .map(|i| {
                let idx = self.unflatten(i);
                let mut d = [0.0; 3];
                for axis in 0..self.data.dim {
                    d[axis] = self.displacement(idx[axis]);
                }
                d
            })
            .collect()
    }

    /// Symbol of a diagonal-in-Fourier operator, evaluated on every point of
    /// the dual grid: `Σ_axis symbol(k_axis)`.
    pub fn fourier_symbol(&self, symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let per_axis: Vec<f64> = self.data.wavenumbers.iter().map(|&k| symbol(k)).collect();
        (0..self.total_points())
            .map(|i| {
                let idx = self.unflatten(i);
                (0..self.data.dim).map(|axis| per_axis[idx[axis]]).sum()
            })
            .collect()
    }

    /// `|k|²` on the dual grid.
    pub fn laplacian_symbol(&self) -> Vec<f64> {
        self.fourier_symbol(|k| k * k)
    }

    /// Eigenvalues of the periodic 3-point stencil for `−Δ`:
    /// `Σ_axis 4 sin²(k h/2)/h²`.
    pub fn stencil_symbol(&self) -> Vec<f64> {
        let h = self.data.spacing;
        self.fourier_symbol(|k| {
            let s = (0.5 * k * h).sin();
            4.0 * s * s / (h * h)
        })
    }

    /// In-place unnormalized forward transform over every axis.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.data.forward);
    }

    /// In-place inverse transform, normalized so that `inverse(forward(f)) = f`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.data.inverse);
        let scale = 1.0 / self.total_points() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.data.points;
        let n = self.total_points();
        debug_assert_eq!(data.len(), n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for axis in 0..self.data.dim {
            let stride = m.pow((self.data.dim - 1 - axis) as u32);
            if stride == 1 {
                for chunk in data.chunks_exact_mut(m) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            let block = stride * m;
            for outer in (0..n).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, z) in line.iter_mut().enumerate() {
                        *z = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, z) in line.iter().enumerate() {
                        data[base + j * stride] = *z;
                    }
                }
            }
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
            || (self.data.dim == other.data.dim
                && self.data.points == other.data.points
                && self.data.length == other.data.length)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.data.dim)
            .field("points", &self.data.points)
            .field("length", &self.data.length)
            .finish()
    }
}

fn signed_index(j: usize, m: usize) -> i64 {
    if 2 * j < m {
        j as i64
    } else {
        j as i64 - m as i64
    }
}

/// Complex amplitudes on every point of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.total_points()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.total_points()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_real(grid: &Grid, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Samples `f` at every grid position.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        Field {
            grid: grid.clone(),
            values: grid.positions().into_iter().map(f).collect(),
        }
    }

    /// Samples an even function of the signed periodic displacement, the way
    /// pair potentials `V(x − y)` are stored.
    pub fn from_displacement_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        Field {
            grid: grid.clone(),
            values: grid
                .displacements()
                .into_iter()
                .map(|d| Complex64::new(f(d), 0.0))
                .collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Discrete inner product `h^dim Σ conj(self)·other`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.check_grid(other)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.values.iter_mut().for_each(|z| *z *= factor);
    }

    pub fn normalized(&self) -> Result<Field> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput("cannot normalize a zero or non-finite field".into()));
        }
        let mut out = self.clone();
        out.scale(Complex64::new(1.0 / n, 0.0));
        Ok(out)
    }

    /// Maximum pointwise modulus of the difference.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Discrete L² norm of the difference.
    pub fn l2_distance(&self, other: &Field) -> Result<f64> {
        self.check_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Multiplies by a real symbol in Fourier space.
    pub fn apply_symbol(&self, symbol: &[f64]) -> Field {
        let mut data = self.values.clone();
        self.grid.forward(&mut data);
        data.iter_mut().zip(symbol).for_each(|(z, &s)| *z *= s);
        self.grid.inverse(&mut data);
        Field {
            grid: self.grid.clone(),
            values: data,
        }
    }

    /// Multiplies by a complex symbol in Fourier space.
    pub fn apply_complex_symbol(&mut self, symbol: &[Complex64]) {
        self.grid.forward(&mut self.values);
        self.values.iter_mut().zip(symbol).for_each(|(z, s)| *z *= s);
        self.grid.inverse(&mut self.values);
    }
}

/// Returns `−Δf`, computed as multiplication by `|k|²` in Fourier space.
pub fn apply_laplacian(f: &Field) -> Result<Field> {
    if !f.is_finite() {
        return Err(Error::NonFinite("apply_laplacian input".into()));
    }
    Ok(f.apply_symbol(&f.grid.laplacian_symbol()))
}

/// Returns `−Δf` for the periodic 3-point finite-difference stencil.
pub fn apply_stencil_laplacian(f: &Field) -> Result<Field> {
    if !f.is_finite() {
        return Err(Error::NonFinite("apply_stencil_laplacian input".into()));
    }
    let grid = f.grid();
    let m = grid.points_per_axis();
    let h2 = grid.spacing() * grid.spacing();
    let dim = grid.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    for (i, o) in out.iter_mut().enumerate() {
        let idx = grid.unflatten(i);
        let mut acc = f.values[i] * (2.0 * dim as f64);
        for axis in 0..dim {
            let stride = m.pow((dim - 1 - axis) as u32);
            let j = idx[axis];
            let up = i - j * stride + ((j + 1) % m) * stride;
            let down = i - j * stride + ((j + m - 1) % m) * stride;
            acc -= f.values[up] + f.values[down];
        }
        *o = acc / h2;
    }
    Field::from_values(grid, out)
}

/// Discrete periodic convolution with a fixed real kernel, `h^dim Σ_y V(x−y)ρ(y)`,
/// with the kernel transform cached.
#[derive(Clone, Debug)]
pub struct ConvolutionKernel {
    grid: Grid,
    spectrum: Vec<Complex64>,
}

impl ConvolutionKernel {
    pub fn new(kernel: &Field) -> Result<Self> {
        if !kernel.is_finite() {
            return Err(Error::NonFinite("convolution kernel".into()));
        }
        let mut spectrum: Vec<Complex64> = kernel
            .values
            .iter()
            .map(|z| Complex64::new(z.re, 0.0))
            .collect();
        kernel.grid.forward(&mut spectrum);
        let h = kernel.grid.cell_volume();
        spectrum.iter_mut().for_each(|z| *z *= h);
        Ok(ConvolutionKernel {
            grid: kernel.grid.clone(),
            spectrum,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.grid.forward(&mut data);
        data.iter_mut().zip(&self.spectrum).for_each(|(z, s)| *z *= s);
        self.grid.inverse(&mut data);
        data.into_iter().map(|z| z.re).collect()
    }
}

/// `(V ∗ ρ)(x) = h^dim Σ_y V(x − y) ρ(y)` for real fields on the same grid.
pub fn periodic_convolve(v: &Field, rho: &Field) -> Result<Field> {
    v.check_grid(rho)?;
    if !rho.is_finite() {
        return Err(Error::NonFinite("convolution density".into()));
    }
    let kernel = ConvolutionKernel::new(v)?;
    let out = kernel.apply(&rho.real_parts());
    Field::from_real(&v.grid, &out)
}

const FIELD_MAGIC: &str = "twocomp-field v1";

/// Writes the structured-text header followed by little-endian `(re, im)`
/// pairs in row-major order.
pub fn write_field<W: Write>(field: &Field, mut out: W) -> std::io::Result<()> {
    let g = field.grid();
    writeln!(out, "{FIELD_MAGIC}")?;
    writeln!(out, "dim = {}", g.dim())?;
    writeln!(out, "points = {}", g.points_per_axis())?;
    writeln!(out, "length = {:e}", g.length())?;
    writeln!(out, "end_header")?;
    for z in field.values() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(mut input: R) -> Result<Field> {
    let mut line = String::new();
    let mut next_line = |input: &mut R| -> Result<String> {
        line.clear();
        input
            .read_line(&mut line)
            .map_err(|e| Error::Format(format!("field header: {e}")))?;
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut input)? != FIELD_MAGIC {
        return Err(Error::Format("missing field header tag".into()));
    }
    let (mut dim, mut points, mut length) = (None, None, None);
    loop {
        let l = next_line(&mut input)?;
        if l == "end_header" {
            break;
        }
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line `{l}`")))?;
        let value = value.trim();
        let bad = |_| Error::Format(format!("bad value in `{l}`"));
        match key.trim() {
            "dim" => dim = Some(value.parse::<usize>().map_err(bad)?),
            "points" => points = Some(value.parse::<usize>().map_err(bad)?),
            "length" => length = Some(value.parse::<f64>().map_err(|_| Error::Format(format!("bad value in `{l}`")))?),
            other => return Err(Error::Format(format!("unknown header key `{other}`"))),
        }
    }
    let (Some(dim), Some(points), Some(length)) = (dim, points, length) else {
        return Err(Error::Format("incomplete field header".into()));
    };
    let grid = if dim == 1 && points < 4 {
        Grid::lattice(points, length)?
    } else {
        Grid::new(dim, points, length)?
    };
    let mut bytes = vec![0u8; grid.total_points() * 16];
    input
        .read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("field payload: {e}")))?;
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Field::from_values(&grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.total_points())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Field::from_values(grid, values).unwrap()
    }

    #[test]
    fn wavenumber_layout() {
        let g = Grid::new(1, 8, TAU).unwrap();
        let k: Vec<f64> = g.wavenumbers().iter().map(|k| k.round()).collect();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
        for (a, b) in g.wavenumbers().iter().zip(&k) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spacing_and_point_count() {
        let g = Grid::new(1, 4, 1.0).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.spacing() * 4.0, g.length());
        assert_eq!(Grid::new(3, 16, 10.0).unwrap().total_points(), 4096);
        assert_eq!(Grid::new(2, 16, 10.0).unwrap(), Grid::new(2, 16, 10.0).unwrap());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1, 3, 1.0).is_err());
        assert!(Grid::new(1, 8, 0.0).is_err());
        assert!(Grid::new(1, 8, -1.0).is_err());
        assert!(Grid::new(4, 8, 1.0).is_err());
        assert!(Grid::new(0, 8, 1.0).is_err());
    }

    #[test]
    fn plane_wave_is_laplacian_eigenfunction() {
        for dim in 1..=3 {
            let g = Grid::new(dim, 8, 3.0).unwrap();
            let kv = [TAU * 2.0 / 3.0, -TAU / 3.0, TAU * 3.0 / 3.0];
            let f = Field::from_fn(&g, |x| {
                let phase: f64 = (0..dim).map(|a| kv[a] * x[a]).sum();
                Complex64::from_polar(1.0, phase)
            });
            let k2: f64 = kv[..dim].iter().map(|k| k * k).sum();
            let lap = apply_laplacian(&f).unwrap();
            for (a, b) in lap.values().iter().zip(f.values()) {
                assert!((a - b * k2).norm() < 1e-10 * k2);
            }
        }
    }

    #[test]
    fn laplacian_annihilates_constants_and_is_positive() {
        let g = Grid::new(2, 8, 5.0).unwrap();
        let c = Field::from_fn(&g, |_| Complex64::new(0.7, -0.2));
        let lap = apply_laplacian(&c).unwrap();
        assert!(lap.values().iter().all(|z| z.norm() < 1e-12));
        let f = random_field(&g, 3);
        let e = f.inner(&apply_laplacian(&f).unwrap()).unwrap();
        assert!(e.re >= 0.0);
        assert!(e.im.abs() < 1e-9 * e.re.max(1.0));
    }

    #[test]
    fn laplacian_is_self_adjoint() {
        let g = Grid::new(3, 8, 4.0).unwrap();
        let f = random_field(&g, 1);
        let h = random_field(&g, 2);
        let a = f.inner(&apply_laplacian(&h).unwrap()).unwrap();
        let b = apply_laplacian(&f).unwrap().inner(&h).unwrap();
        assert!((a - b).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn non_finite_input_rejected() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let mut f = Field::zeros(&g);
        f.values_mut()[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(apply_laplacian(&f), Err(Error::NonFinite(_))));
    }

    #[test]
    fn stencil_matches_spectral_at_second_order() {
        // smooth band-limited field: error of the stencil scales like h²
        let errs: Vec<f64> = [32usize, 64, 128]
            .iter()
            .map(|&m| {
                let g = Grid::new(1, m, TAU).unwrap();
                let f = Field::from_fn(&g, |x| Complex64::new((2.0 * x[0]).sin() + (x[0]).cos(), 0.0));
                let a = apply_laplacian(&f).unwrap();
                let b = apply_stencil_laplacian(&f).unwrap();
                a.max_abs_diff(&b).unwrap()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.1, "order {order}");
        }
    }

    #[test]
    fn stencil_symbol_diagonalizes_stencil() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let f = random_field(&g, 9);
        let a = apply_stencil_laplacian(&f).unwrap();
        let b = f.apply_symbol(&g.stencil_symbol());
        assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
    }

    #[test]
    fn parseval() {
        let g = Grid::new(2, 16, 7.0).unwrap();
        let f = random_field(&g, 4);
        let mut data = f.values().to_vec();
        g.forward(&mut data);
        let spectral: f64 = data.iter().map(|z| z.norm_sqr()).sum::<f64>() / g.total_points() as f64;
        let direct: f64 = f.values().iter().map(|z| z.norm_sqr()).sum();
        assert!((spectral - direct).abs() < 1e-12 * direct);
        g.inverse(&mut data);
        let back = Field::from_values(&g, data).unwrap();
        assert!(back.max_abs_diff(&f).unwrap() < 1e-13);
    }

    #[test]
    fn convolution_with_discrete_delta_is_identity() {
        let g = Grid::new(2, 8, 4.0).unwrap();
        let mut delta = vec![0.0; g.total_points()];
        delta[0] = 1.0 / g.cell_volume();
        let v = Field::from_real(&g, &delta).unwrap();
        let rho = Field::from_real(&g, &random_field(&g, 5).real_parts()).unwrap();
        let out = periodic_convolve(&v, &rho).unwrap();
        assert!(out.max_abs_diff(&rho).unwrap() < 1e-12);
    }

    #[test]
    fn convolution_with_constant_gives_mass() {
        let g = Grid::new(1, 16, 3.0).unwrap();
        let rho = Field::from_real(&g, &random_field(&g, 6).real_parts()).unwrap();
        let mass: f64 = rho.real_parts().iter().sum::<f64>() * g.cell_volume();
        let v = Field::from_fn(&g, |_| Complex64::new(2.5, 0.0));
        let out = periodic_convolve(&v, &rho).unwrap();
        for z in out.values() {
            assert!((z.re - 2.5 * mass).abs() < 1e-12);
            assert!(z.im.abs() < 1e-15);
        }
    }

    fn direct_convolution(g: &Grid, v: &[f64], rho: &[f64]) -> Vec<f64> {
        let m = g.points_per_axis();
        let dim = g.dim();
        let n = g.total_points();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let xi = g.unflatten(i);
            for j in 0..n {
                let yj = g.unflatten(j);
                let mut d = 0;
                for axis in 0..dim {
                    d = d * m + (xi[axis] + m - yj[axis]) % m;
                }
                *o += v[d] * rho[j];
            }
            *o *= g.cell_volume();
        }
        out
    }

    #[test]
    fn convolution_matches_direct_sum() {
        for (dim, m) in [(1, 32), (2, 16)] {
            let g = Grid::new(dim, m, 5.0).unwrap();
            let v = random_field(&g, 7).real_parts();
            let rho = random_field(&g, 8).real_parts();
            let fast = periodic_convolve(&Field::from_real(&g, &v).unwrap(), &Field::from_real(&g, &rho).unwrap())
                .unwrap()
                .real_parts();
            let slow = direct_convolution(&g, &v, &rho);
            let scale = slow.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn gaussian_convolution_adds_variances() {
        let g = Grid::new(1, 256, 40.0).unwrap();
        let gauss = |s2: f64| {
            move |d: [f64; 3]| (-d[0] * d[0] / (2.0 * s2)).exp() / (TAU * s2).sqrt()
        };
        let (s1, s2) = (1.0, 1.5);
        let v = Field::from_displacement_fn(&g, gauss(s1));
        let rho = Field::from_displacement_fn(&g, gauss(s2));
        let out = periodic_convolve(&v, &rho).unwrap();
        let expected = Field::from_displacement_fn(&g, gauss(s1 + s2));
        for (i, (a, b)) in out.values().iter().zip(expected.values()).enumerate() {
            if g.displacement(i).abs() < 8.0 {
                assert!((a.re - b.re).abs() < 1e-6 * b.re, "at {i}");
            }
        }
        // same answer as the direct double sum
        let slow = direct_convolution(&g, &v.real_parts(), &rho.real_parts());
        for (a, b) in out.real_parts().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = Field::zeros(&Grid::new(1, 8, 1.0).unwrap());
        let b = Field::zeros(&Grid::new(1, 8, 2.0).unwrap());
        assert!(matches!(periodic_convolve(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn field_binary_roundtrip() {
        let g = Grid::new(2, 4, 1.5).unwrap();
        let f = random_field(&g, 11);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let header = String::from_utf8_lossy(&buf[..80]).to_string();
        assert!(header.starts_with("twocomp-field v1\ndim = 2\npoints = 4\n"));
        assert_eq!(buf.len(), header.find("end_header\n").unwrap() + 11 + 16 * 16);
        let back = read_field(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, f);
    }
}
