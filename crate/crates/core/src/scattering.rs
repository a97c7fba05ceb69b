//! Zero-energy s-wave scattering in three dimensions.
//!
//! With `u(r) = r f(r)` the equation `(−Δ + ½V) f = 0` becomes the radial ODE
//! `u'' = ½ V(r) u`, `u(0) = 0`, `u'(0) = 1`. Outside the support `u` is linear,
//! `u = κ (r − a)`, and `a` is the scattering length. `f` is normalized to the
//! exterior asymptote `1 − a/r`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A compactly supported, spherically symmetric potential.
#[derive(Clone)]
pub struct RadialPotential {
    profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support_radius: f64,
    breakpoints: Vec<f64>,
    positive: bool,
}

impl fmt::Debug for RadialPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialPotential")
            .field("support_radius", &self.support_radius)
            .field("breakpoints", &self.breakpoints)
            .field("positive", &self.positive)
            .finish()
    }
}

impl RadialPotential {
    /// `profile` must vanish beyond `support_radius`. `breakpoints` lists radii
    /// where the profile is discontinuous; the integrator lands on them exactly.
    pub fn new(
        profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support_radius: f64,
        breakpoints: Vec<f64>,
        positive: bool,
    ) -> Result<Self> {
        if !(support_radius.is_finite() && support_radius > 0.0) {
            return Err(Error::InvalidInput(format!("support radius {support_radius} must be positive")));
        }
        let mut breakpoints: Vec<f64> = breakpoints
            .into_iter()
            .filter(|&b| b > 0.0 && b < support_radius)
            .collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Ok(RadialPotential {
            profile: Arc::new(move |r| if r > support_radius { 0.0 } else { profile(r) }),
            support_radius,
            breakpoints,
            positive,
        })
    }

    pub fn zero() -> Self {
        RadialPotential {
            profile: Arc::new(|_| 0.0),
            support_radius: 1.0,
            breakpoints: Vec::new(),
            positive: true,
        }
    }

    /// `V(r) = height` for `r < radius`.
    pub fn square(height: f64, radius: f64) -> Result<Self> {
        Self::new(move |r| if r < radius { height } else { 0.0 }, radius, vec![], height >= 0.0)
    }

    /// `height` on the shell `inner < r < outer`.
    pub fn shell(height: f64, inner: f64, outer: f64) -> Result<Self> {
        if !(0.0 <= inner && inner <= outer && outer > 0.0) {
            return Err(Error::InvalidInput(format!("shell radii 0 <= {inner} <= {outer} required")));
        }
        Self::new(
            move |r| if r > inner && r < outer { height } else { 0.0 },
            outer,
            vec![inner],
            height >= 0.0,
        )
    }

    pub fn at(&self, r: f64) -> f64 {
        (self.profile)(r)
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    /// `amplitude · V(r · stretch)`.
    pub fn rescaled(&self, amplitude: f64, stretch: f64) -> Self {
        let inner = self.profile.clone();
        RadialPotential {
            profile: Arc::new(move |r| amplitude * inner(r * stretch)),
            support_radius: self.support_radius / stretch,
            breakpoints: self.breakpoints.iter().map(|b| b / stretch).collect(),
            positive: self.positive && amplitude >= 0.0,
        }
    }

    /// The β-family scaling `N^{3β−1} V(N^β r)`; for β = 1 this is `N² V(N r)`.
    pub fn scaled(&self, n: f64, beta: f64) -> Self {
        self.rescaled(n.powf(3.0 * beta - 1.0), n.powf(beta))
    }

    /// `self − other`.
    pub fn minus(&self, other: &RadialPotential) -> Self {
        let (a, b) = (self.profile.clone(), other.profile.clone());
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend(&other.breakpoints);
        let support = self.support_radius.max(other.support_radius);
        breakpoints.extend([self.support_radius, other.support_radius].into_iter().filter(|&r| r < support));
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        RadialPotential {
            profile: Arc::new(move |r| a(r) - b(r)),
            support_radius: support,
            breakpoints,
            positive: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Clone, Debug)]
pub struct ScatteringResult {
    pub scattering_length: f64,
    /// Exterior slope `κ` of `u = κ(r − a)` before normalization.
    pub slope: f64,
    pub radii: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub norms: GNorms,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum step as a fraction of the support radius.
    pub max_step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rtol: 1e-12,
            atol: 1e-15,
            max_step_fraction: 5e-4,
        }
    }
}

/// Scattering length and zero-energy profile of `v`, integrated to `r_max`.
pub fn scattering_length(v: &RadialPotential, r_max: f64) -> Result<ScatteringResult> {
    solve(v, r_max, None, SolverOptions::default())
}

/// As [`scattering_length`], but zero crossings of `u` inside `allowed` (the
/// attractive shell of a modified potential) are tolerated.
pub fn scattering_length_modified(
    v: &RadialPotential,
    r_max: f64,
    allowed: (f64, f64),
) -> Result<ScatteringResult> {
    solve(v, r_max, Some(allowed), SolverOptions::default())
}

pub fn solve(
    v: &RadialPotential,
    r_max: f64,
    allowed: Option<(f64, f64)>,
    opts: SolverOptions,
) -> Result<ScatteringResult> {
    let support = v.support_radius;
    if !(r_max > 2.0 * support) {
        return Err(Error::InvalidInput(format!(
            "r_max = {r_max} must exceed twice the support radius {support}"
        )));
    }
    let (r1, r2) = (1.5 * support, 2.0 * support);
    let mut stops: Vec<f64> = v.breakpoints.clone();
    stops.extend([support, r1, r2, r_max]);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let h_max = support * opts.max_step_fraction;
    let mut radii = vec![0.0];
    let mut us = vec![0.0];
    let mut y = [0.0, 1.0];
    let mut r = 0.0;
    let (mut u1, mut u2) = (None, None);
    for &stop in &stops {
        integrate_segment(v, &mut r, stop, &mut y, h_max, &opts, &mut radii, &mut us);
        if let Some(bad) = first_crossing(&radii, &us, support, allowed) {
            return Err(Error::BoundState { radius: bad });
        }
        if stop == r1 {
            u1 = Some(y[0]);
        }
        if stop == r2 {
            u2 = Some(y[0]);
        }
    }
    let (u1, u2) = (u1.unwrap(), u2.unwrap());
    let slope = (u2 - u1) / (r2 - r1);
    if !(slope.is_finite() && slope.abs() > 1e-300) {
        return Err(Error::InvalidInput("exterior asymptote is degenerate".into()));
    }
    let a = r1 - u1 / slope;
    let f: Vec<f64> = radii
        .iter()
        .zip(&us)
        .map(|(&ri, &ui)| if ri == 0.0 { 1.0 / slope } else { ui / (slope * ri) })
        .collect();
    let g: Vec<f64> = f.iter().map(|fi| 1.0 - fi).collect();
    let norms = radial_norms(&radii, &g);
    Ok(ScatteringResult {
        scattering_length: a,
        slope,
        radii,
        f,
        g,
        norms,
    })
}

fn first_crossing(radii: &[f64], us: &[f64], support: f64, allowed: Option<(f64, f64)>) -> Option<f64> {
    radii
        .iter()
        .zip(us)
        .skip(1)
        .find(|(&r, &u)| {
            u < 0.0 && r <= support && !allowed.is_some_and(|(lo, hi)| r >= lo && r <= hi)
        })
        .map(|(&r, _)| r)
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[allow(clippy::too_many_arguments)]
fn integrate_segment(
    v: &RadialPotential,
    r: &mut f64,
    stop: f64,
    y: &mut [f64; 2],
    h_max: f64,
    opts: &SolverOptions,
    radii: &mut Vec<f64>,
    us: &mut Vec<f64>,
) {
    let seg_start = *r;
    // potential value on this segment's open interval, sampled away from the
    // endpoints so the discontinuity side is unambiguous
    let pot = |x: f64| {
        let eps = 1e-12 * (stop - seg_start);
        v.at(x.clamp(seg_start + eps, stop - eps))
    };
    let rhs = |x: f64, y: [f64; 2]| [y[1], 0.5 * pot(x) * y[0]];
    let mut h = h_max.min(stop - *r);
    while *r < stop {
        if stop - *r < h {
            h = stop - *r;
        }
        let mut k = [[0.0; 2]; 7];
        for s in 0..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            k[s] = rhs(*r + C[s] * h, ys);
        }
        let mut y5 = *y;
        let mut err = 0.0f64;
        for c in 0..2 {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][c];
                d4 += B4[s] * k[s][c];
            }
            y5[c] += h * d5;
            let sc = opts.atol + opts.rtol * y[c].abs().max(y5[c].abs());
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        if err <= 1.0 {
            let landing = stop - *r <= h * (1.0 + 1e-12);
            *r = if landing { stop } else { *r + h };
            *y = y5;
            radii.push(*r);
            us.push(y[0]);
            // the equation is linear: rescale to keep strongly repulsive cores finite
            let size = y[0].abs().max(y[1].abs());
            if size > 1e100 {
                y.iter_mut().for_each(|c| *c /= size);
                us.iter_mut().for_each(|c| *c /= size);
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(h_max);
    }
}

/// `(4π∫|g| r² dr, (4π∫g² r² dr)^{1/2}, max|g|)` over the sampled range,
/// by the trapezoid rule on the solver nodes.
fn radial_norms(radii: &[f64], g: &[f64]) -> GNorms {
    let (mut l1, mut l2sq, mut linf) = (0.0, 0.0, 0.0f64);
    for i in 1..radii.len() {
        let (ra, rb) = (radii[i - 1], radii[i]);
        let dr = rb - ra;
        l1 += 0.5 * dr * (g[i - 1].abs() * ra * ra + g[i].abs() * rb * rb);
        l2sq += 0.5 * dr * (g[i - 1].powi(2) * ra * ra + g[i].powi(2) * rb * rb);
    }
    for gi in g {
        linf = linf.max(gi.abs());
    }
    GNorms {
        l1: 4.0 * PI * l1,
        l2: (4.0 * PI * l2sq).sqrt(),
        linf,
    }
}

pub fn g_norms(result: &ScatteringResult) -> GNorms {
    result.norms
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Species {
    First,
    Second,
    Cross,
}

/// Attractive shell potential `W` of height `amplitude` on
/// `inner_radius < r < outer_radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxPotentialSpec {
    pub amplitude: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub species: Species,
    pub beta: f64,
    /// `N_j` for a single species, `N₁ + N₂` for the cross term.
    pub particles: u64,
    /// Scattering length of the unscaled potential the amplitude is built from.
    pub scattering_length: f64,
}

impl BoxPotentialSpec {
    /// Template with `amplitude = 4πa N^{3β−1}`, `inner = N^{−β}`, `C = 1`.
    pub fn template(species: Species, scattering_length: f64, beta: f64, particles: u64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidInput(format!("beta = {beta} not in (0, 1]")));
        }
        if particles < 2 {
            return Err(Error::InvalidInput(format!("need N >= 2, got {particles}")));
        }
        let n = particles as f64;
        let inner = n.powf(-beta);
        Ok(BoxPotentialSpec {
            amplitude: 4.0 * PI * scattering_length * n.powf(3.0 * beta - 1.0),
            inner_radius: inner,
            outer_radius: inner,
            species,
            beta,
            particles,
            scattering_length,
        })
    }

    /// Shell constant `C = outer/inner`.
    pub fn constant(&self) -> f64 {
        self.outer_radius / self.inner_radius
    }

    pub fn with_constant(&self, c: f64) -> Self {
        BoxPotentialSpec {
            outer_radius: c * self.inner_radius,
            ..*self
        }
    }

    pub fn potential(&self) -> Result<RadialPotential> {
        RadialPotential::shell(self.amplitude, self.inner_radius, self.outer_radius)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CalibrationOptions {
    pub c_max: f64,
    pub scan_points: usize,
    /// Integration range as a multiple of the modified support radius.
    pub r_max_factor: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            c_max: 10.0,
            scan_points: 400,
            r_max_factor: 3.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub spec: BoxPotentialSpec,
    pub residual: f64,
    /// Sampled `(C, a(V − W_C))` up to and including the bracketing pair.
    pub scan: Vec<(f64, f64)>,
    /// Whether the sampled residual is monotone over the scanned range.
    pub monotone: bool,
    pub result: ScatteringResult,
}

/// Residual scattering length of `v_scaled − W_C`.
pub fn residual_scattering(v_scaled: &RadialPotential, spec: &BoxPotentialSpec, r_max_factor: f64) -> Result<ScatteringResult> {
    let w = spec.potential()?;
    let modified = v_scaled.minus(&w);
    let r_max = r_max_factor * modified.support_radius;
    scattering_length_modified(&modified, r_max, (spec.inner_radius, spec.outer_radius))
}

/// Smallest `C > 1` for which `v_scaled − W_C` has zero scattering length.
pub fn calibrate_w(
    v_scaled: &RadialPotential,
    template: &BoxPotentialSpec,
    opts: CalibrationOptions,
) -> Result<Calibration> {
    if !v_scaled.is_positive() {
        return Err(Error::InvalidInput("calibration needs a positive potential".into()));
    }
    if template.amplitude == 0.0 {
        let spec = template.with_constant(f64::from_bits(1.0f64.to_bits() + 1));
        let result = scattering_length(v_scaled, 3.0 * v_scaled.support_radius.max(spec.outer_radius))?;
        return Ok(Calibration {
            spec,
            residual: result.scattering_length,
            scan: vec![],
            monotone: true,
            result,
        });
    }
    let eval = |c: f64| -> Result<f64> {
        Ok(residual_scattering(v_scaled, &template.with_constant(c), opts.r_max_factor)?.scattering_length)
    };
    let n = opts.scan_points.max(2);
    let mut scan = vec![(1.0, eval(1.0)?)];
    let mut bracket = None;
    for i in 1..=n {
        let c = 1.0 + (opts.c_max - 1.0) * i as f64 / n as f64;
        let a = eval(c)?;
        let (_, prev) = *scan.last().unwrap();
        scan.push((c, a));
        if prev.signum() != a.signum() || a == 0.0 {
            bracket = Some((scan[scan.len() - 2], (c, a)));
            break;
        }
    }
    let Some(((mut lo, mut flo), (mut hi, mut fhi))) = bracket else {
        let last = *scan.last().unwrap();
        return Err(Error::RootNotBracketed {
            lower: 1.0,
            upper: opts.c_max,
            residual_lower: scan[0].1,
            residual_upper: last.1,
        });
    };
    let diffs: Vec<f64> = scan.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let monotone = diffs.iter().all(|d| *d <= 0.0) || diffs.iter().all(|d| *d >= 0.0);

    // Brent's method on [lo, hi]
    let tol_a = 1e-14 * template.inner_radius;
    let (mut c, mut fc) = (lo, flo);
    let mut d = hi - lo;
    let mut e = d;
    let mut best = (hi, fhi);
    for _ in 0..200 {
        if fhi.signum() == fc.signum() {
            c = lo;
            fc = flo;
            d = hi - lo;
            e = d;
        }
        if fc.abs() < fhi.abs() {
            lo = hi;
            hi = c;
            c = lo;
            flo = fhi;
            fhi = fc;
            fc = flo;
        }
        best = (hi, fhi);
        let tol = 2.0 * f64::EPSILON * hi.abs();
        let m = 0.5 * (c - hi);
        if m.abs() <= tol || fhi.abs() <= tol_a {
            break;
        }
        if e.abs() >= tol && flo.abs() > fhi.abs() {
            let s = fhi / flo;
            let (mut p, mut q);
            if lo == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = flo / fc;
                let r = fhi / fc;
                p = s * (2.0 * m * qq * (qq - r) - (hi - lo) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        lo = hi;
        flo = fhi;
        hi += if d.abs() > tol { d } else { tol.copysign(m) };
        fhi = eval(hi)?;
    }
    let (c_star, _) = best;
    let spec = template.with_constant(c_star);
    let result = residual_scattering(v_scaled, &spec, opts.r_max_factor)?;
    Ok(Calibration {
        spec,
        residual: result.scattering_length,
        scan,
        monotone,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn barrier_length(v0: f64, r: f64) -> f64 {
        let kappa = (v0 / 2.0).sqrt();
        r - (kappa * r).tanh() / kappa
    }

    #[test]
    fn zero_potential_has_zero_length() {
        let res = scattering_length(&RadialPotential::zero(), 5.0).unwrap();
        assert!(res.scattering_length.abs() < 1e-14);
        let n = g_norms(&res);
        assert!(n.l1 < 1e-14 && n.l2 < 1e-14 && n.linf < 1e-14);
    }

    #[test]
    fn square_barrier_matches_closed_form() {
        let v = RadialPotential::square(2.0, 1.0).unwrap();
        let res = scattering_length(&v, 4.0).unwrap();
        let exact = 1.0 - 1f64.tanh();
        assert!((exact - 0.238406).abs() < 1e-6);
        assert!((res.scattering_length - exact).abs() < 1e-10, "{}", res.scattering_length);
        for v0 in [0.5, 8.0, 50.0] {
            let res = scattering_length(&RadialPotential::square(v0, 1.3).unwrap(), 4.0).unwrap();
            assert!((res.scattering_length - barrier_length(v0, 1.3)).abs() < 1e-9);
        }
    }

    #[test]
    fn hard_sphere_limit() {
        let res = scattering_length(&RadialPotential::square(1e6, 1.0).unwrap(), 3.0).unwrap();
        assert!((res.scattering_length - 1.0).abs() < 1e-2);
        assert!((res.g[0] - 1.0).abs() < 1e-2);
        assert!((res.norms.linf - 1.0).abs() < 1e-2);
    }

    #[test]
    fn independent_of_r_max() {
        let v = RadialPotential::new(|r| 3.0 * (1.0 - r * r), 1.0, vec![], true).unwrap();
        let a = scattering_length(&v, 2.5).unwrap().scattering_length;
        let b = scattering_length(&v, 9.0).unwrap().scattering_length;
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn scaling_law() {
        let v = RadialPotential::square(2.0, 1.0).unwrap();
        let a = scattering_length(&v, 4.0).unwrap().scattering_length;
        for n in [2.0, 4.0, 8.0] {
            let vn = v.scaled(n, 1.0);
            let an = scattering_length(&vn, 4.0 / n).unwrap().scattering_length;
            assert!(((an - a / n) / (a / n)).abs() < 1e-8);
        }
    }

    #[test]
    fn profile_properties() {
        let v = RadialPotential::square(2.0, 1.0).unwrap();
        let res = scattering_length(&v, 6.0).unwrap();
        let a = res.scattering_length;
        let inside = res.radii.iter().filter(|&&r| r > 0.0 && r < 1.0).count();
        assert!(inside >= 1000);
        for ((&r, &f), &g) in res.radii.iter().zip(&res.f).zip(&res.g) {
            assert!((f + g - 1.0).abs() < 1e-15);
            if r > 1.0 {
                assert!((f - (1.0 - a / r)).abs() < 1e-8);
            }
        }
        assert!(res.f.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert!((res.norms.linf - res.g[0]).abs() < 1e-15);
        assert!(a >= 0.0);
    }

    #[test]
    fn bound_state_regime_is_an_error() {
        // deep well: u turns over and crosses zero inside the support
        let v = RadialPotential::square(-50.0, 1.0).unwrap();
        assert!(matches!(scattering_length(&v, 4.0), Err(Error::BoundState { .. })));
    }

    #[test]
    fn rejects_short_range() {
        let v = RadialPotential::square(2.0, 1.0).unwrap();
        assert!(scattering_length(&v, 1.5).is_err());
    }

    #[test]
    fn calibration_zeroes_scattering_length() {
        let v = RadialPotential::square(2.0, 1.0).unwrap();
        let a = scattering_length(&v, 4.0).unwrap().scattering_length;
        let template = BoxPotentialSpec::template(Species::First, a, 1.0, 32).unwrap();
        let vs = v.scaled(32.0, 1.0);
        let cal = calibrate_w(&vs, &template, CalibrationOptions::default()).unwrap();
        assert!(cal.residual.abs() < 1e-8, "{}", cal.residual);
        assert!(cal.spec.constant() > 1.0);
        assert!(cal.monotone);
        assert!((cal.spec.amplitude - 4.0 * PI * a * 32.0f64.powi(2)).abs() < 1e-9);
        // with a(V − W) = 0 the profile is exactly 1 beyond the shell
        for (&r, &g) in cal.result.radii.iter().zip(&cal.result.g) {
            if r > cal.spec.outer_radius {
                assert!(g.abs() < 1e-6);
            }
        }
        let again = calibrate_w(&vs, &template, CalibrationOptions::default()).unwrap();
        assert_eq!(again.spec.constant(), cal.spec.constant());
    }

    #[test]
    fn calibration_of_zero_potential() {
        let template = BoxPotentialSpec::template(Species::Cross, 0.0, 1.0, 16).unwrap();
        let cal = calibrate_w(&RadialPotential::zero(), &template, CalibrationOptions::default()).unwrap();
        assert!(cal.spec.constant() > 1.0);
        assert!(cal.spec.constant() - 1.0 < 1e-15);
        assert_eq!(cal.spec.amplitude, 0.0);
        assert_eq!(cal.residual, 0.0);
    }

    #[test]
    fn unbracketed_root_reports_scan() {
        let v = RadialPotential::square(2.0, 1.0).unwrap();
        let a = scattering_length(&v, 4.0).unwrap().scattering_length;
        let template = BoxPotentialSpec::template(Species::First, a, 1.0, 32).unwrap();
        let opts = CalibrationOptions {
            c_max: 1.01,
            scan_points: 4,
            ..Default::default()
        };
        let err = calibrate_w(&v.scaled(32.0, 1.0), &template, opts).unwrap_err();
        assert!(matches!(err, Error::RootNotBracketed { .. }));
    }
}
