use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twocomp::effective::{step, CouplingSpec, Kinetic, OrbitalState};
use twocomp::grid::{Field, Grid};
use twocomp::indicators::{
    alpha_11, corrected_alpha, counting_projectors, derivative_decomposition, hermitian_norm, lambda_omega_terms,
    marginal_bounds_check, reduce, shift_difference, trace_distance, weight_expectation, weight_m, EnergyPair,
    MarginalKind, Species, WeightFunction,
};
use twocomp::manybody::{build_basis, product_state, HamiltonianSpec, ManyBodyState, TwoSpeciesBasis};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_state(basis: &Arc<TwoSpeciesBasis>, rng: &mut ChaCha8Rng) -> ManyBodyState {
    let coeffs = (0..basis.dim())
        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ManyBodyState::new(basis, coeffs).unwrap().normalized().unwrap()
}

fn random_orbital(g: &Grid, rng: &mut ChaCha8Rng) -> Field {
    let vals = (0..g.total_points())
        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Field::from_values(g, vals).unwrap().normalized().unwrap()
}

fn smooth(g: &Grid, k: f64, phase: f64) -> Field {
    let l = g.length();
    Field::from_fn(g, |x| {
        let t = std::f64::consts::TAU * x[0] / l;
        Complex64::from_polar(1.0 + 0.4 * (t + phase).cos(), k * (t + phase).sin())
    })
    .normalized()
    .unwrap()
}

fn orthogonal_to(u: &Field, w: &Field) -> Field {
    let overlap = u.inner(w).unwrap();
    let vals = w.values().iter().zip(u.values()).map(|(b, a)| b - a * overlap).collect();
    Field::from_values(u.grid(), vals).unwrap().normalized().unwrap()
}

/// State with one particle per species: coefficients `ψ(x, y)`.
fn one_one_state(basis: &Arc<TwoSpeciesBasis>, psi: impl Fn(usize, usize) -> Complex64) -> ManyBodyState {
    let m = basis.sites();
    let mut coeffs = vec![c(0.0, 0.0); basis.dim()];
    for x in 0..m {
        for y in 0..m {
            let mut na = vec![0u8; m];
            na[x] = 1;
            let mut nb = vec![0u8; m];
            nb[y] = 1;
            let i = basis.index(basis.species_a().index_of(&na).unwrap(), basis.species_b().index_of(&nb).unwrap());
            coeffs[i] = psi(x, y);
        }
    }
    ManyBodyState::new(basis, coeffs).unwrap()
}

#[test]
fn one_body_marginal_spectrum_is_schmidt_spectrum() {
    let g = Grid::new(1, 5, 5.0).unwrap();
    let basis = build_basis(&g, 1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let psi = random_state(&basis, &mut rng);
    let m = 5;
    let mat = DMatrix::from_fn(m, m, |x, y| {
        let state = one_one_state(&basis, |a, b| if (a, b) == (x, y) { c(1.0, 0.0) } else { c(0.0, 0.0) });
        state.inner(&psi).unwrap()
    });
    let mut schmidt: Vec<f64> = mat.svd(false, false).singular_values.iter().map(|s| s * s).collect();
    schmidt.sort_by(|a, b| a.total_cmp(b));
    let eig = reduce(&psi, MarginalKind::OneZero).unwrap().eigenvalues();
    for (a, b) in eig.iter().zip(&schmidt) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn alpha_examples() {
    let g = Grid::new(1, 6, 6.0).unwrap();
    let basis = build_basis(&g, 1, 1).unwrap();
    let u = smooth(&g, 0.7, 0.0);
    let v = smooth(&g, -0.3, 1.0);
    let u_perp = orthogonal_to(&u, &smooth(&g, 1.1, 2.0));
    let v_perp = orthogonal_to(&v, &smooth(&g, 0.2, 0.5));
    let prod = product_state(&u, &v, &basis).unwrap();
    assert!(alpha_11(&prod, &u, &v).unwrap().abs() < 1e-12);
    assert!((alpha_11(&prod, &u_perp, &v).unwrap() - 1.0).abs() < 1e-12);

    let h = g.spacing();
    let s = 0.5f64.sqrt();
    let bell = one_one_state(&basis, |x, y| {
        (u.values()[x] * v.values()[y] + u_perp.values()[x] * v_perp.values()[y]) * (h * s)
    });
    assert!((bell.norm() - 1.0).abs() < 1e-12);
    assert!((alpha_11(&bell, &u, &v).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn trace_distance_examples() {
    let g = Grid::new(1, 6, 6.0).unwrap();
    let basis = build_basis(&g, 1, 1).unwrap();
    let u = smooth(&g, 0.7, 0.0);
    let v = smooth(&g, -0.3, 1.0);
    let u_perp = orthogonal_to(&u, &smooth(&g, 1.1, 2.0));
    let gamma_perp = reduce(&product_state(&u_perp, &v, &basis).unwrap(), MarginalKind::OneOne).unwrap();
    assert!((trace_distance(&gamma_perp, &u, &v).unwrap() - 2.0).abs() < 1e-12);
    // |⟨u', u⟩|² = 1/2
    let s = 0.5f64.sqrt();
    let vals = u.values().iter().zip(u_perp.values()).map(|(a, b)| (a + b) * s).collect();
    let half = Field::from_values(&g, vals).unwrap();
    let gamma_half = reduce(&product_state(&half, &v, &basis).unwrap(), MarginalKind::OneOne).unwrap();
    assert!((trace_distance(&gamma_half, &u, &v).unwrap() - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn marginal_bound_examples() {
    let g = Grid::new(1, 5, 5.0).unwrap();
    let basis = build_basis(&g, 1, 1).unwrap();
    let u = smooth(&g, 0.7, 0.0);
    let v = smooth(&g, -0.3, 1.0);
    let v_perp = orthogonal_to(&v, &smooth(&g, 0.2, 0.5));
    let prod = marginal_bounds_check(&product_state(&u, &v, &basis).unwrap(), &u, &v).unwrap();
    for x in [prod.lhs_max, prod.middle, prod.rhs_sum] {
        assert!(x.abs() < 1e-12);
    }
    let depleted = marginal_bounds_check(&product_state(&u, &v_perp, &basis).unwrap(), &u, &v).unwrap();
    for x in [depleted.lhs_max, depleted.middle, depleted.rhs_sum] {
        assert!((x - 1.0).abs() < 1e-12);
    }
}

#[test]
fn marginal_bounds_on_random_states() {
    let g = Grid::new(1, 4, 4.0).unwrap();
    let basis = build_basis(&g, 2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let psi = random_state(&basis, &mut rng);
        let u = random_orbital(&g, &mut rng);
        let v = random_orbital(&g, &mut rng);
        let b = marginal_bounds_check(&psi, &u, &v).unwrap();
        assert!(b.holds(1e-10), "{b:?}");
        let alpha = alpha_11(&psi, &u, &v).unwrap();
        assert!((-1e-12..=1.0 + 1e-12).contains(&alpha));
        let td = trace_distance(&reduce(&psi, MarginalKind::OneOne).unwrap(), &u, &v).unwrap();
        assert!(td - alpha >= -1e-10);
        assert!(2.0 * alpha.max(0.0).sqrt() - td >= -1e-10);
    }
}

/// Literal symmetrized-string projectors for one species of N = 2 on
/// `ℂ^M ⊗ ℂ^M`, compressed to the symmetric occupation basis.
#[test]
fn counting_projectors_match_string_definition() {
    for m in 2..=3 {
        let g = Grid::lattice(m, m as f64).unwrap();
        let basis = build_basis(&g, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        let u = random_orbital(&g, &mut rng);
        let proj = counting_projectors(&basis, &u, Species::A).unwrap();
        let phi = &proj.orbital;
        let p = DMatrix::from_fn(m, m, |i, j| phi[i] * phi[j].conj());
        let q = DMatrix::<Complex64>::identity(m, m) - &p;
        let strings = [p.kronecker(&p), p.kronecker(&q) + q.kronecker(&p), q.kronecker(&q)];
        let sa = basis.species_a();
        let mut sym = DMatrix::<Complex64>::zeros(m * m, sa.len());
        for x1 in 0..m {
            for x2 in 0..m {
                let mut n = vec![0u8; m];
                n[x1] += 1;
                n[x2] += 1;
                sym[(x1 * m + x2, sa.index_of(&n).unwrap())] = c(1.0, 0.0);
            }
        }
        for mut col in sym.column_iter_mut() {
            let n = col.norm();
            col /= c(n, 0.0);
        }
        for (k, string) in strings.iter().enumerate() {
            let compressed = sym.adjoint() * string * &sym;
            let err = (compressed - proj.projector(k).unwrap()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
            assert!(err < 1e-12, "M={m} k={k}: {err}");
        }
    }
}

#[test]
fn counting_examples_and_weights() {
    let g = Grid::new(1, 5, 5.0).unwrap();
    let basis = build_basis(&g, 2, 1).unwrap();
    let u = smooth(&g, 0.5, 0.0);
    let v = smooth(&g, 0.1, 0.3);
    let u_perp = orthogonal_to(&u, &smooth(&g, 1.3, 1.0));
    let proj = counting_projectors(&basis, &u, Species::A).unwrap();

    let prod = product_state(&u, &v, &basis).unwrap();
    let dist = proj.distribution(&prod);
    assert!((dist[0] - 1.0).abs() < 1e-12 && dist[1].abs() < 1e-12 && dist[2].abs() < 1e-12);
    for g_fn in [WeightFunction::s(2), WeightFunction::n(2), weight_m(2, 0.2).unwrap()] {
        assert!((weight_expectation(&prod, &g_fn, &proj).unwrap() - g_fn.eval(0)).abs() < 1e-12);
    }

    // symmetrized u ⊗ u⊥ for species A, v for B: exactly one excitation
    let h = g.spacing();
    let (sa, sb) = (basis.species_a(), basis.species_b());
    let m = 5;
    let mut coeffs = vec![c(0.0, 0.0); basis.dim()];
    for x1 in 0..m {
        for x2 in 0..m {
            for y in 0..m {
                let amp = (u.values()[x1] * u_perp.values()[x2] + u_perp.values()[x1] * u.values()[x2])
                    * v.values()[y]
                    * h.powf(1.5);
                let mut na = vec![0u8; m];
                na[x1] += 1;
                na[x2] += 1;
                let mut nb = vec![0u8; m];
                nb[y] = 1;
                // ⟨n|Ψ⟩ = Σ_orderings Ψ / √(#orderings)
                let orderings = if x1 == x2 { 1.0 } else { 2.0 };
                let i = basis.index(sa.index_of(&na).unwrap(), sb.index_of(&nb).unwrap());
                coeffs[i] += amp / f64::sqrt(orderings);
            }
        }
    }
    let one_exc = ManyBodyState::new(&basis, coeffs).unwrap().normalized().unwrap();
    let dist = proj.distribution(&one_exc);
    assert!((dist[1] - 1.0).abs() < 1e-12, "{dist:?}");
    assert!((weight_expectation(&one_exc, &WeightFunction::s(2), &proj).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn weight_ordering_and_s_identity() {
    let g = Grid::new(1, 4, 4.0).unwrap();
    let basis = build_basis(&g, 3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..30 {
        let psi = random_state(&basis, &mut rng);
        let u = random_orbital(&g, &mut rng);
        let proj = counting_projectors(&basis, &u, Species::A).unwrap();
        let s = weight_expectation(&psi, &WeightFunction::s(3), &proj).unwrap();
        let n = weight_expectation(&psi, &WeightFunction::n(3), &proj).unwrap();
        assert!(n >= s - 1e-14);
        let q_psi = twocomp::manybody::ManyBodyState::new(&basis, {
            let mut out = vec![c(0.0, 0.0); psi.coeffs.len()];
            let db = basis.species_b().len();
            for i in 0..proj.excitation.nrows() {
                for j in 0..proj.excitation.ncols() {
                    for ib in 0..db {
                        out[i * db + ib] += proj.excitation[(i, j)] * psi.coeffs[j * db + ib];
                    }
                }
            }
            out
        })
        .unwrap();
        let q_mean = psi.inner(&q_psi).unwrap().re / 3.0;
        assert!((s - q_mean).abs() < 1e-12);
        let values = WeightFunction::s(3).values();
        let lifted = WeightFunction::custom(values.iter().map(|x| x + 0.1).collect()).unwrap();
        assert!(weight_expectation(&psi, &lifted, &proj).unwrap() >= s);
    }
}

#[test]
fn m_envelope_and_shift_bound() {
    for n in [2usize, 3, 5, 10, 50] {
        for xi in [0.1, 0.2, 0.3, 0.45] {
            let m = weight_m(n, xi).unwrap();
            let cap = (n as f64).powf(-xi);
            for k in 0..=n {
                let nk = (k as f64 / n as f64).sqrt();
                assert!(m.eval(k) >= nk - 1e-14);
                assert!(m.eval(k) <= nk.max(cap) + 1e-14);
            }
        }
    }
    let g = Grid::new(1, 8, 8.0).unwrap();
    let basis = build_basis(&g, 3, 1).unwrap();
    let u = smooth(&g, 0.5, 0.2);
    let proj = counting_projectors(&basis, &u, Species::A).unwrap();
    let m = weight_m(3, 0.2).unwrap();
    let sup = (0..=3).map(|k| (m.eval(k + 1) - m.eval(k)).abs()).fold(0.0, f64::max);
    assert!(hermitian_norm(&shift_difference(&proj, &m, 1)) <= sup + 1e-12);
    // a P_k eigenvector is scaled by m(k) − m(k+1)
    let d1 = shift_difference(&proj, &m, 1);
    for k in 0..=3 {
        let pk = proj.projector(k).unwrap();
        let col = (0..pk.ncols()).map(|j| pk.column(j).into_owned()).max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        let out = &d1 * &col;
        let expected = &col * c(m.eval(k) - m.eval(k + 1), 0.0);
        assert!((out - expected).norm() < 1e-12);
    }
}

#[test]
fn corrected_alpha_product_state_value() {
    let g = Grid::new(1, 6, 6.0).unwrap();
    let basis = build_basis(&g, 3, 2).unwrap();
    let u = smooth(&g, 0.5, 0.0);
    let v = smooth(&g, 0.2, 1.0);
    let psi = product_state(&u, &v, &basis).unwrap();
    let zero = vec![0.0; 6];
    let w = weight_m(3, 0.2).unwrap();
    let e = EnergyPair {
        many_body: 1.25,
        effective: 1.25,
    };
    let r = corrected_alpha(&psi, &u, &zero, &zero, &w, e).unwrap();
    assert!((r.alpha - 0.5 * 3f64.powf(-0.2)).abs() < 1e-12);
    // pair functions on a product state: R acts on P_0 with p₁p₂ only
    let gp: Vec<f64> = (0..6).map(|j| (-(g.displacement(j)).powi(2)).exp()).collect();
    let with = corrected_alpha(&psi, &u, &gp, &gp, &w, e).unwrap();
    assert!(with.correction_same.is_finite() && with.correction_cross.is_finite());
    let one = build_basis(&g, 1, 2).unwrap();
    let r1 = corrected_alpha(&product_state(&u, &v, &one).unwrap(), &u, &gp, &gp, &weight_m(1, 0.2).unwrap(), e).unwrap();
    assert_eq!((r1.correction_same, r1.correction_cross), (0.0, 0.0));
}

fn potentials(g: &Grid, a1: f64, a2: f64, a12: f64) -> (Field, Field, Field) {
    let bump = |amp: f64, w: f64| Field::from_displacement_fn(g, move |d| amp * (-d[0] * d[0] / (2.0 * w * w)).exp());
    (bump(a1, 0.9), bump(a2, 1.3), bump(a12, 1.1))
}

#[test]
fn derivative_terms_structure() {
    let g = Grid::new(1, 6, 6.0).unwrap();
    let basis = build_basis(&g, 2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let psi = random_state(&basis, &mut rng);
    let u = random_orbital(&g, &mut rng);
    let v = random_orbital(&g, &mut rng);
    let (z, _, _) = potentials(&g, 0.0, 0.0, 0.0);
    let free = HamiltonianSpec::mean_field(&g, &z, &z, &z, 2, 2).unwrap();
    let t = derivative_decomposition(&psi, &u, &v, &free).unwrap();
    assert!(t.sum().norm() < 1e-14);
    let (v1, v2, _) = potentials(&g, 2.0, 1.5, 0.0);
    let no_cross = HamiltonianSpec::mean_field(&g, &v1, &v2, &z, 2, 2).unwrap();
    let t = derivative_decomposition(&psi, &u, &v, &no_cross).unwrap();
    assert!(t.c_v12.norm() < 1e-14);
    let (v1, v2, v12) = potentials(&g, 2.0, 1.5, 1.0);
    let full = HamiltonianSpec::mean_field(&g, &v1, &v2, &v12, 2, 2).unwrap();
    let t = derivative_decomposition(&psi, &u, &v, &full).unwrap();
    for z in [t.c_v1, t.c_v2, t.c_v12] {
        assert!(z.re.abs() < 1e-10);
    }
}

/// Centered difference of α along the joint (exact many-body, stencil
/// Hartree) flow.
fn fd_mismatch(psi: &ManyBodyState, u: &Field, v: &Field, spec: &HamiltonianSpec, eff: &CouplingSpec, dt: f64) -> f64 {
    let prop = twocomp::manybody::Propagator::new(
        twocomp::manybody::Hamiltonian::new(spec, &psi.basis).unwrap(),
        Default::default(),
    );
    let orb = OrbitalState::new(vec![u.clone(), v.clone()]).unwrap();
    let alpha_at = |s: f64| {
        let p = prop.propagate(psi, s).unwrap();
        let o = step(&orb, eff, s).unwrap();
        alpha_11(&p, &o.components[0], &o.components[1]).unwrap()
    };
    let fd = (alpha_at(dt) - alpha_at(-dt)) / (2.0 * dt);
    let predicted = derivative_decomposition(psi, u, v, spec).unwrap().alpha_rate();
    (fd - predicted).abs()
}

#[test]
fn derivative_identity_against_finite_differences() {
    let g = Grid::new(1, 8, 8.0).unwrap();
    let basis = build_basis(&g, 2, 2).unwrap();
    let (v1, v2, v12) = potentials(&g, 2.0, 1.5, 1.2);
    let spec = HamiltonianSpec::mean_field(&g, &v1, &v2, &v12, 2, 2).unwrap();
    let eff = CouplingSpec::hartree(0.5, v1, v2, v12).unwrap().with_kinetic(Kinetic::Stencil);
    let u = smooth(&g, 0.8, 0.0);
    let v = smooth(&g, -0.5, 1.7);
    // product data: the identity holds to round-off at small dt
    let prod = product_state(&u, &v, &basis).unwrap();
    assert!(fd_mismatch(&prod, &u, &v, &spec, &eff, 1e-4) < 1e-6);
    // generic state: error shrinks like dt²
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let psi = random_state(&basis, &mut rng);
    let errs: Vec<f64> = [1e-3, 5e-4, 2.5e-4].iter().map(|&dt| fd_mismatch(&psi, &u, &v, &spec, &eff, dt)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn lambda_omega_identities() {
    let g = Grid::new(1, 5, 5.0).unwrap();
    let basis = build_basis(&g, 2, 2).unwrap();
    let (v1, v2, v12) = potentials(&g, 1.0, 1.0, 1.4);
    let spec = HamiltonianSpec::mean_field(&g, &v1, &v2, &v12, 2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..10 {
        let psi = random_state(&basis, &mut rng);
        let u = random_orbital(&g, &mut rng);
        let v = random_orbital(&g, &mut rng);
        let t = lambda_omega_terms(&psi, &u, &v, &spec.v12).unwrap();
        assert_eq!(t.terms.len(), 16);
        assert!((t.sum() - t.total).norm() < 1e-10);
        assert!(t.get("pp", "pp").norm() < 1e-12);
        assert!(t.get("qq", "qq").norm() < 1e-12);
        assert!((t.get("pq", "pq") + t.get("qp", "qp")).norm() < 1e-12);
        let pp_qp = t.get("pp", "qp");
        assert!((pp_qp + pp_qp.conj()).norm() < 1e-10);
        let c12 = derivative_decomposition(&psi, &u, &v, &spec).unwrap().c_v12;
        let scale = (2.0 * 2.0) / 4.0;
        assert!((c12 + t.total * scale).norm() < 1e-12, "{c12} vs {}", t.total);
    }
    let zero = vec![0.0; 5];
    let psi = random_state(&basis, &mut rng);
    let u = random_orbital(&g, &mut rng);
    let t = lambda_omega_terms(&psi, &u, &u, &zero).unwrap();
    assert!(t.terms.iter().all(|(_, z)| z.norm() == 0.0));
}
