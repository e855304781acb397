mod common;

use proptest::prelude::*;

use common::*;
use stochflow::flowmap::{
    composition_residual, integrate_flow, inverse_after_forward_residual, integrate_gradient, invert_map, invert_map_with, BrownianDriver,
    DisplacementMap, HistoryDrift,
};
use stochflow::interp::Interpolation;
use stochflow::reference::taylor_green;
use stochflow::spectral::{leray_project, spectral_gradient};
use stochflow::weber::{ibp_residual, weber, weber_derivative_ibp};
use stochflow::{Field, TorusGrid, VelocityHistory};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn map(g: &TorusGrid, seed: u64, grad: f64) -> DisplacementMap {
    DisplacementMap::new(displacement_series(g, 3, seed, grad).sample(*g, 1)).unwrap()
}

fn derivative(f: &Field, axis: usize) -> Field {
    let grad = spectral_gradient(f).unwrap();
    Field::vector(*f.grid(), (0..f.dim()).map(|j| grad.entry(axis, j).to_vec()).collect()).unwrap()
}

fn steady(u: &Field, dt: f64, steps: usize) -> VelocityHistory {
    VelocityHistory::constant(u, 0.0, dt, steps).unwrap()
}

#[test]
fn inversion_matches_newton_oracle() {
    let g = grid(32);
    let s = displacement_series(&g, 3, 21, 0.5);
    let lambda = DisplacementMap::new(s.sample(g, 1)).unwrap();
    let ell = invert_map_with(&lambda, Interpolation::Trig, 0.0).unwrap();
    let mut err = 0.0f64;
    for p in 0..g.nodes() {
        let x = g.position(p);
        let a = newton_preimage(&s, &x[..2]);
        for c in 0..2 {
            err = err.max((x[c] + ell.disp().comp(c)[p] - a[c]).abs());
        }
    }
    assert!(err < 1e-9 * g.length(), "{err}");
}

#[test]
fn still_fluid_has_no_strain_on_any_path() {
    let g = grid(16);
    let u = steady(&Field::zeros(g, 1), 0.05, 6);
    let drift = HistoryDrift::new(&u, Interpolation::Lagrange);
    for path in 0..5 {
        let driver = BrownianDriver::new(3, path, 0.05, 6, 2);
        let traj = integrate_flow(&drift, 0.2, &driver).unwrap();
        assert!(traj.lambda_slices.iter().all(|l| l.gradient_norm() < 1e-12));
    }
}

#[test]
fn companion_gradient_tracks_displacement_gradient() {
    let g = grid(32);
    let tg = taylor_green(g).unwrap();
    let h = tg.history(0.0, 0.01, 10).unwrap();
    let drift = HistoryDrift::new(&h, Interpolation::Lagrange);
    let traj = integrate_flow(&drift, 0.0, &BrownianDriver::silent(0.01, 10, 2)).unwrap();
    let gx = integrate_gradient(&drift, &traj).unwrap();
    let lam = traj.lambda_slices.last().unwrap();
    let from_field = spectral_gradient(lam.disp()).unwrap();
    let last = gx.last().unwrap();
    let mut err = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            let a: Vec<f64> = last.entry(i, j).iter().map(|v| v - id).collect();
            err = err.max(sup_diff(&a, from_field.entry(i, j)));
        }
    }
    assert!(err <= 1e-3 * from_field.sup_norm(), "{err}");
}

#[test]
fn weber_of_gradient_velocity_vanishes_without_displacement() {
    let g = grid(16);
    let phi = series(&g, 1, 3, 2);
    let grad = Field::vector(g, (0..2).map(|a| phi.derivative(a).sample(g, 0).into_components().remove(0)).collect())
        .unwrap();
    assert!(weber(&grad, &DisplacementMap::zero(g)).unwrap().sup_norm() < 1e-12);
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn weber_lies_in_the_projection_range(seed in any::<u64>(), a in 0.0f64..0.45) {
        let g = grid(16);
        let v = vector(&g, 3, seed);
        let w = weber(&v, &map(&g, seed ^ 1, a.max(1e-3))).unwrap();
        prop_assert!(field_sup_diff(&leray_project(&w).unwrap(), &w) <= 1e-12 * w.sup_norm().max(1.0));
    }

    #[test]
    fn integration_by_parts_is_antisymmetric(seed in any::<u64>(), l in 0.5f64..10.0) {
        let g = TorusGrid::new(2, 32, l).unwrap();
        let u = vector(&g, 3, seed);
        let v = vector(&g, 3, seed.wrapping_add(17));
        prop_assert!(ibp_residual(&u, &v).unwrap() <= 1e-10);
    }

    #[test]
    fn first_derivative_representation(seed in any::<u64>(), axis in 0usize..2) {
        let g = grid(32);
        let v = vector(&g, 3, seed);
        let ell = map(&g, seed ^ 5, 0.3);
        let direct = derivative(&weber(&v, &ell).unwrap(), axis);
        let assembled = weber_derivative_ibp(&v, ell.disp(), axis).unwrap();
        prop_assert!(field_sup_diff(&direct, &assembled) <= 1e-9 * direct.sup_norm().max(1.0));
    }

    #[test]
    fn composition_identity_both_ways(seed in any::<u64>(), a in 0.05f64..0.5, trig in any::<bool>()) {
        let g = grid(32);
        let kind = if trig { Interpolation::Trig } else { Interpolation::Lagrange };
        let lambda = map(&g, seed, a);
        let ell = invert_map_with(&lambda, kind, 0.0).unwrap();
        let l = g.length();
        prop_assert!(composition_residual(&lambda, &ell, kind) <= 1e-8 * l);
        prop_assert!(inverse_after_forward_residual(&lambda, kind).unwrap() <= 1e-8 * l);
    }

    #[test]
    fn interpolated_inverse_converges_spectrally(seed in any::<u64>()) {
        // nodal ℓ is not band-limited, so A∘X through its interpolant is
        // only as good as the resolution
        let r: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let lambda = map(&g, seed, 0.3);
                let ell = invert_map_with(&lambda, Interpolation::Trig, 0.0).unwrap();
                composition_residual(&ell, &lambda, Interpolation::Trig)
            })
            .collect();
        prop_assert!(r[1] < 0.2 * r[0] && r[2] < 0.2 * r[1], "{:?}", r);
    }

    #[test]
    fn inverse_displacements_are_lipschitz_in_the_map(seed in any::<u64>(), eps in 0.01f64..0.3) {
        let g = grid(32);
        let s1 = displacement_series(&g, 3, seed, 0.4);
        let s2 = displacement_series(&g, 3, seed ^ 9, 0.1);
        let l1 = DisplacementMap::new(s1.sample(g, 1)).unwrap();
        let mixed = s1.sample(g, 1).add(&s2.sample(g, 1).scale(eps));
        let l2 = DisplacementMap::new(mixed).unwrap();
        prop_assume!(l2.gradient_norm() <= 0.5);
        let a1 = invert_map(&l1).unwrap();
        let a2 = invert_map(&l2).unwrap();
        let lhs = field_sup_diff(a1.disp(), a2.disp());
        let rhs = field_sup_diff(l1.disp(), l2.disp());
        prop_assert!(lhs <= 3.0 * rhs, "{} > 3 x {}", lhs, rhs);
    }

    #[test]
    fn strain_obeys_gronwall(seed in any::<u64>(), nu in 0.0f64..0.1) {
        let g = grid(16);
        let u = divfree(&g, 2, seed);
        let u = u.scale(1.0 / u.sup_norm());
        let h = steady(&u, 0.02, 10);
        let grad_u = spectral_gradient(&u).unwrap().sup_operator_norm();
        let drift = HistoryDrift::new(&h, Interpolation::Lagrange);
        let traj = integrate_flow(&drift, nu, &BrownianDriver::new(seed, 0, 0.02, 10, 2)).unwrap();
        for (k, lam) in traj.lambda_slices.iter().enumerate().skip(1) {
            let bound = (k as f64 * 0.02 * grad_u).exp_m1();
            prop_assert!(lam.gradient_norm() <= 1.1 * bound, "step {}: {} > {}", k, lam.gradient_norm(), bound);
        }
    }

    #[test]
    fn characteristics_depend_stably_on_the_drift(seed in any::<u64>(), eps in 0.001f64..0.1) {
        let g = grid(16);
        let u = divfree(&g, 2, seed);
        let u = u.scale(1.0 / u.sup_norm());
        let du = divfree(&g, 2, seed ^ 3);
        let ub = u.add(&du.scale(eps / du.sup_norm()));
        let t = 0.2;
        let (h1, h2) = (steady(&u, 0.02, 10), steady(&ub, 0.02, 10));
        let driver = BrownianDriver::new(seed, 1, 0.02, 10, 2);
        let x1 = integrate_flow(&HistoryDrift::new(&h1, Interpolation::Lagrange), 0.05, &driver).unwrap();
        let x2 = integrate_flow(&HistoryDrift::new(&h2, Interpolation::Lagrange), 0.05, &driver).unwrap();
        let lhs = field_sup_diff(x1.lambda_slices[10].disp(), x2.lambda_slices[10].disp());
        let lip = spectral_gradient(&u).unwrap().sup_operator_norm().max(spectral_gradient(&ub).unwrap().sup_operator_norm());
        let rhs = (lip * t).exp() * t * field_sup_diff(&u, &ub);
        prop_assert!(lhs <= 1.1 * rhs, "{} > {}", lhs, rhs);
    }
}
