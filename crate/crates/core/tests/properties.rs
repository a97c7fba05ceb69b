use num_complex::Complex64;
use proptest::prelude::*;
use twocomp::effective::{evolve, CouplingSpec, OrbitalState};
use twocomp::grid::{periodic_convolve, Field, Grid};
use twocomp::indicators::{
    alpha_11, counting_projectors, marginal_bounds_check, weight_expectation, Species, WeightFunction,
};
use twocomp::manybody::{build_basis, manybody_energy, product_state, propagate, HamiltonianSpec, ManyBodyState};

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn nonzero(v: &[Complex64]) -> bool {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3
}

fn naive_convolution(v: &[f64], rho: &[f64], h: f64) -> Vec<f64> {
    let m = v.len();
    (0..m)
        .map(|x| (0..m).map(|y| v[(x + m - y) % m] * rho[y]).sum::<f64>() * h)
        .collect()
}

fn spec(g: &Grid, amps: (f64, f64, f64), n1: usize, n2: usize) -> HamiltonianSpec {
    let b = |a: f64| Field::from_displacement_fn(g, move |d| a * (-d[0] * d[0]).exp());
    HamiltonianSpec::mean_field(g, &b(amps.0), &b(amps.1), &b(amps.2), n1, n2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_matches_direct_sum(v in prop::collection::vec(-1.0f64..1.0, 7), rho in prop::collection::vec(-1.0f64..1.0, 7)) {
        let g = Grid::lattice(7, 3.5).unwrap();
        let vf = Field::from_real(&g, &v).unwrap();
        let rf = Field::from_real(&g, &rho).unwrap();
        let got = periodic_convolve(&vf, &rf).unwrap();
        let want = naive_convolution(&v, &rho, g.spacing());
        for (a, b) in got.values().iter().zip(&want) {
            prop_assert!((a.re - b).abs() < 1e-12 && a.im == 0.0);
        }
    }

    #[test]
    fn propagation_is_unitary_and_reversible(c in complex_vec(36), t in -2.0f64..2.0, a in 0.0f64..3.0) {
        prop_assume!(nonzero(&c));
        let g = Grid::lattice(3, 3.0).unwrap();
        let s = spec(&g, (a, 1.0, 0.5 * a), 2, 2);
        let basis = build_basis(&g, 2, 2).unwrap();
        let psi = ManyBodyState::new(&basis, c).unwrap().normalized().unwrap();
        let fwd = propagate(&s, &psi, t).unwrap();
        prop_assert!((fwd.norm() - 1.0).abs() < 1e-10);
        let e0 = manybody_energy(&s, &psi).unwrap();
        prop_assert!((manybody_energy(&s, &fwd).unwrap() - e0).abs() < 1e-9 * e0.abs().max(1.0));
        let back = propagate(&s, &fwd, -t).unwrap();
        prop_assert!(back.infidelity(&psi).unwrap() < 1e-10);
    }

    #[test]
    fn alpha_bounds_and_marginal_sandwich(c in complex_vec(100), u in complex_vec(4), v in complex_vec(4)) {
        prop_assume!(nonzero(&c) && nonzero(&u) && nonzero(&v));
        let g = Grid::lattice(4, 4.0).unwrap();
        let basis = build_basis(&g, 2, 2).unwrap();
        let psi = ManyBodyState::new(&basis, c).unwrap().normalized().unwrap();
        let u = Field::from_values(&g, u).unwrap().normalized().unwrap();
        let v = Field::from_values(&g, v).unwrap().normalized().unwrap();
        let alpha = alpha_11(&psi, &u, &v).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&alpha));
        prop_assert!(marginal_bounds_check(&psi, &u, &v).unwrap().holds(1e-10));
    }

    #[test]
    fn weight_expectation_is_monotone(c in complex_vec(80), u in complex_vec(4), lift in prop::collection::vec(0.0f64..1.0, 4)) {
        prop_assume!(nonzero(&c) && nonzero(&u));
        let g = Grid::lattice(4, 4.0).unwrap();
        let basis = build_basis(&g, 3, 1).unwrap();
        let psi = ManyBodyState::new(&basis, c).unwrap().normalized().unwrap();
        let u = Field::from_values(&g, u).unwrap().normalized().unwrap();
        let proj = counting_projectors(&basis, &u, Species::A).unwrap();
        let low = WeightFunction::n(3);
        let high = WeightFunction::custom(low.values().iter().zip(&lift).map(|(a, b)| a + b).collect()).unwrap();
        let a = weight_expectation(&psi, &low, &proj).unwrap();
        let b = weight_expectation(&psi, &high, &proj).unwrap();
        prop_assert!(a <= b + 1e-14);
        let total: f64 = proj.distribution(&psi).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_product_states_stay_products(k1 in -2i32..=2, k2 in -2i32..=2, t in 0.0f64..1.0) {
        let g = Grid::lattice(5, 5.0).unwrap();
        let basis = build_basis(&g, 2, 1).unwrap();
        let wave = |k: i32| Field::from_fn(&g, |x| Complex64::from_polar(1.0 + 0.3 * x[0].cos(), k as f64 * x[0] * std::f64::consts::TAU / 5.0))
            .normalized()
            .unwrap();
        let (u, v) = (wave(k1), wave(k2));
        let s = spec(&g, (0.0, 0.0, 0.0), 2, 1);
        let psi = propagate(&s, &product_state(&u, &v, &basis).unwrap(), t).unwrap();
        let eff = CouplingSpec::hartree(2.0 / 3.0, Field::zeros(&g), Field::zeros(&g), Field::zeros(&g))
            .unwrap()
            .with_kinetic(twocomp::effective::Kinetic::Stencil);
        let orb = OrbitalState::new(vec![u, v]).unwrap();
        let traj = evolve(&orb, &eff, t.max(1e-3), 1e-3, usize::MAX).unwrap();
        let fin = traj.final_state().unwrap();
        let psi = propagate(&s, &psi, fin.time - t).unwrap();
        prop_assert!(alpha_11(&psi, &fin.components[0], &fin.components[1]).unwrap().abs() < 1e-10);
    }
}
