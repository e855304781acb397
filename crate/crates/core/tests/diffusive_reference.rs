mod common;

use std::f64::consts::TAU;

use proptest::prelude::*;

use common::*;
use stochflow::diagnostics::field_errors;
use stochflow::diffusive::{
    advance_displacement, advance_virtual_velocity, commutator, neumann_inverse, solve_diffusive, DiffusiveConfig,
};
use stochflow::flowmap::DisplacementMap;
use stochflow::linalg::{inverse, operator_norm, Mat};
use stochflow::reference::{reference_nse_solve, reference_solve, shear_mode, taylor_green, ReferenceConfig};
use stochflow::spectral::{forward_components, inverse_components, differentiate, laplacian, leray_project};
use stochflow::weber::weber;
use stochflow::{Error, Field, TorusGrid, VectorField};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn d(f: &Field, axis: usize) -> Field {
    let s: Vec<_> = forward_components(f).iter().map(|s| differentiate(s, axis)).collect();
    inverse_components(*f.grid(), f.rank(), &s)
}

fn dcfg(nu: f64, dt: f64, t_final: f64) -> DiffusiveConfig {
    DiffusiveConfig { nu, dt, t_final, picard_tol: 1e-11, ..DiffusiveConfig::default() }
}

fn rel_linf(a: &Field, b: &Field) -> f64 {
    field_errors(b, a).unwrap().1
}

fn shear(g: TorusGrid) -> VectorField {
    Field::from_fn(g, 1, |x, o| {
        o[0] = x[1].sin();
        o[1] = 0.0;
    })
}

fn expansion_error(ell: &Field) -> f64 {
    let c = commutator(&DisplacementMap::new(ell.clone()).unwrap()).unwrap();
    let mut e = 0.0f64;
    for p in 0..2 {
        for j in 0..2 {
            let dj = d(ell, j);
            for i in 0..2 {
                e = e.max(sup_diff(c.get(p, j, i), d(&dj, i).comp(p)));
            }
        }
    }
    e
}

#[test]
fn commutator_of_single_shear_is_its_hessian() {
    // (I + ∇ℓ)⁻¹ only mixes the direction in which ℓ has no curvature
    let g = grid(32);
    let eps = 1e-2;
    let ell = Field::from_fn(g, 1, |x, o| {
        o[0] = eps * (TAU * x[1] / g.length()).sin();
        o[1] = 0.0;
    });
    assert!(expansion_error(&ell) < 1e-15);
}

#[test]
fn commutator_matches_first_order_expansion() {
    let g = grid(32);
    let err = |eps: f64| {
        expansion_error(&Field::from_fn(g, 1, |x, o| {
            o[0] = eps * x[1].sin();
            o[1] = eps * (x[0] + x[1]).cos();
        }))
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    assert!(e1 < 1e-3, "{e1}");
    let order = (e1 / e2).log2();
    assert!((order - 2.0).abs() < 0.1, "order {order}");
}

#[test]
fn displacement_step_matches_rk4_oracle() {
    let g = grid(32);
    let u = shear(g);
    let ell0 = displacement_series(&g, 2, 4, 0.1).sample(g, 1);
    let local = |dt: f64| {
        let ell = DisplacementMap::new(ell0.clone()).unwrap();
        let ours = advance_displacement(&ell, &u, &u, 0.1, dt, 0.45).unwrap();
        let oracle = rk4_displacement(&ell0, &u, &u, 0.1, dt, 8);
        field_sup_diff(ours.disp(), &oracle)
    };
    let (e1, e2) = (local(1e-3), local(5e-4));
    assert!(e1 < 1e-6, "{e1}");
    assert!((e1 / e2).log2() > 2.0, "local order {}", (e1 / e2).log2());
}

#[test]
fn uniform_drift_gives_linear_displacement() {
    let g = grid(16);
    let c = Field::constant_vector(g, &[0.4, -0.7]);
    let mut ell = DisplacementMap::zero(g);
    for _ in 0..10 {
        ell = advance_displacement(&ell, &c, &c, 0.3, 0.01, 0.45).unwrap();
    }
    let want = Field::constant_vector(g, &[-0.04, 0.07]);
    assert!(field_sup_diff(ell.disp(), &want) < 1e-14);
}

#[test]
fn virtual_velocity_without_drift_is_heat_flow() {
    let g = grid(16);
    let nu = 0.2;
    let v0 = Field::from_fn(g, 1, |x, o| {
        o[0] = (3.0 * x[1]).cos();
        o[1] = (2.0 * x[0]).sin();
    });
    let zero = Field::zeros(g, 1);
    let c = commutator(&DisplacementMap::zero(g)).unwrap();
    let mut v = v0.clone();
    for _ in 0..20 {
        v = advance_virtual_velocity(&v, &zero, &zero, &c, nu, 0.01).unwrap();
    }
    let want = Field::from_fn(g, 1, |x, o| {
        o[0] = (-nu * 9.0 * 0.2f64).exp() * (3.0 * x[1]).cos();
        o[1] = (-nu * 4.0 * 0.2f64).exp() * (2.0 * x[0]).sin();
    });
    assert!(field_sup_diff(&v, &want) < 1e-10);
}

#[test]
fn inviscid_virtual_velocity_is_transported() {
    let g = grid(32);
    let u = shear(g);
    let v0 = |x: f64, y: f64| [x.cos() * y.sin(), x.sin()];
    let c = commutator(&DisplacementMap::zero(g)).unwrap();
    let mut v = Field::from_fn(g, 1, |x, o| o.copy_from_slice(&v0(x[0], x[1])));
    let (dt, steps) = (1e-3, 100);
    for _ in 0..steps {
        v = advance_virtual_velocity(&v, &u, &u, &c, 0.0, dt).unwrap();
    }
    let t = dt * steps as f64;
    let want = Field::from_fn(g, 1, |x, o| o.copy_from_slice(&v0(x[0] - t * x[1].sin(), x[1])));
    assert!(field_sup_diff(&v, &want) < 1e-5, "{}", field_sup_diff(&v, &want));
}

#[test]
fn virtual_velocity_step_matches_rk4_oracle() {
    let g = grid(32);
    let nu = 0.05;
    let tg = taylor_green(g).unwrap();
    let u = tg.initial_data();
    let ell = DisplacementMap::new(displacement_series(&g, 2, 8, 0.2).sample(g, 1)).unwrap();
    let c = commutator(&ell).unwrap();
    let v0 = divfree(&g, 3, 12);
    let rhs = |v: &VectorField| -> VectorField {
        let mut out = laplacian(v).scale(nu);
        let dv: Vec<Field> = (0..2).map(|a| d(v, a)).collect();
        for b in 0..2 {
            let o = out.comp_mut(b);
            for p in 0..o.len() {
                let mut s = 0.0;
                for a in 0..2 {
                    s -= u.comp(a)[p] * dv[a].comp(b)[p];
                    for i in 0..2 {
                        s += 2.0 * nu * c.get(i, a, b)[p] * dv[a].comp(i)[p];
                    }
                }
                o[p] += s;
            }
        }
        out
    };
    let step = |dt: f64| {
        let h = dt / 8.0;
        let mut y = v0.clone();
        for _ in 0..8 {
            let k1 = rhs(&y);
            let k2 = rhs(&y.add(&k1.scale(h / 2.0)));
            let k3 = rhs(&y.add(&k2.scale(h / 2.0)));
            let k4 = rhs(&y.add(&k3.scale(h)));
            y = y.add(&k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4).scale(h / 6.0));
        }
        let ours = advance_virtual_velocity(&v0, &u, &u, &c, nu, dt).unwrap();
        field_sup_diff(&ours, &y)
    };
    let (e1, e2) = (step(2e-3), step(1e-3));
    assert!(e1 < 1e-5, "{e1}");
    assert!((e1 / e2).log2() > 2.0, "local order {}", (e1 / e2).log2());
}

#[test]
fn weber_without_displacement_returns_the_data() {
    let g = grid(16);
    let u0 = divfree(&g, 3, 1);
    let w = weber(&u0, &DisplacementMap::zero(g)).unwrap();
    assert!(field_sup_diff(&w, &u0) < 1e-13);
}

#[test]
fn diffusive_shear_and_taylor_green_decay() {
    let g = grid(32);
    let tg = taylor_green(g).unwrap();
    let (h, _) = solve_diffusive(&tg.initial_data(), &dcfg(0.01, 5e-3, 0.25)).unwrap();
    assert!(rel_linf(h.last(), &tg.field(0.25, 0.01)) < 1e-4);
    assert!(h.max_divergence() < 1e-9);
    let sh = shear_mode(g, 1).unwrap();
    let (h, _) = solve_diffusive(&sh.initial_data(), &dcfg(0.05, 5e-3, 0.25)).unwrap();
    assert!(rel_linf(h.last(), &sh.field(0.25, 0.05)) < 1e-4);
}

#[test]
fn remapped_shear_agrees_with_one_window() {
    let g = grid(32);
    let sh = shear_mode(g, 1).unwrap();
    let nu = 0.05;
    let one = dcfg(nu, 0.01, 0.3);
    let two = DiffusiveConfig { max_window_steps: Some(15), ..one.clone() };
    let (h1, r1) = solve_diffusive(&sh.initial_data(), &one).unwrap();
    let (h2, r2) = solve_diffusive(&sh.initial_data(), &two).unwrap();
    assert_eq!(r1.windows.len(), 1);
    assert_eq!(r2.windows.len(), 2);
    let exact = sh.field(0.3, nu);
    let err_one = rel_linf(h1.last(), &exact);
    let gap = rel_linf(h2.last(), h1.last());
    // both are at rounding level for this exact mode
    assert!(gap <= 5.0 * err_one.max(1e-13), "gap {gap}, one-window error {err_one}");
}

#[test]
fn remap_keeps_taylor_green_accurate() {
    let g = grid(32);
    let tg = taylor_green(g).unwrap();
    let one = dcfg(0.01, 0.01, 0.5);
    let two = DiffusiveConfig { max_window_steps: Some(25), ..one.clone() };
    let exact = tg.field(0.5, 0.01);
    let e1 = rel_linf(solve_diffusive(&tg.initial_data(), &one).unwrap().0.last(), &exact);
    let e2 = rel_linf(solve_diffusive(&tg.initial_data(), &two).unwrap().0.last(), &exact);
    assert!(e2 <= 5.0 * e1, "{e2} vs {e1}");
}

#[test]
fn diffusive_rejects_divergent_data() {
    let g = grid(16);
    let bad = Field::from_fn(g, 1, |x, o| {
        o[0] = x[0].sin();
        o[1] = 0.0;
    });
    assert!(matches!(solve_diffusive(&bad, &dcfg(0.01, 0.01, 0.1)), Err(Error::InvalidParameter { .. })));
}

#[test]
fn taylor_green_satisfies_navier_stokes() {
    let g = grid(32);
    let tg = taylor_green(g).unwrap();
    let nu = 0.01;
    for t in [0.0, 0.2, 0.5] {
        let u = tg.field(t, nu);
        let dudt = u.scale(-2.0 * nu);
        let mut adv = Field::zeros(g, 1);
        for a in 0..2 {
            let da = d(&u, a);
            for c in 0..2 {
                let o = adv.comp_mut(c);
                for p in 0..o.len() {
                    o[p] += u.comp(a)[p] * da.comp(c)[p];
                }
            }
        }
        let r = dudt.add(&leray_project(&adv).unwrap()).sub(&laplacian(&u).scale(nu));
        assert!(r.sup_norm() < 1e-12, "t = {t}: {}", r.sup_norm());
    }
    let a = tg.field(0.5, 0.01);
    let ratio = a.comp(0)[g.flatten([4, 2, 0])] / tg.initial_data().comp(0)[g.flatten([4, 2, 0])];
    assert!((ratio - 0.990049834).abs() < 1e-9);
}

#[test]
fn reference_reproduces_shear_and_zero() {
    let g = grid(32);
    let sh = shear_mode(g, 1).unwrap();
    let h = reference_nse_solve(&sh.initial_data(), 0.05, 1e-3, 0.5).unwrap();
    assert!(rel_linf(h.last(), &sh.field(0.5, 0.05)) < 1e-9);
    assert!((sh.field(0.5, 0.05).comp(0)[g.flatten([0, 8, 0])] - (-0.025f64).exp()).abs() < 1e-14);
    let z = reference_nse_solve(&Field::zeros(g, 1), 0.1, 0.01, 0.1).unwrap();
    assert_eq!(z.last().sup_norm(), 0.0);
}

#[test]
fn inviscid_reference_conserves_energy() {
    let g = grid(64);
    let u0 = divfree(&g, 4, 2);
    let u0 = u0.scale(1.0 / u0.sup_norm());
    let h = reference_nse_solve(&u0, 0.0, 1e-3, 0.5).unwrap();
    let e = |f: &Field| f.components().iter().flatten().map(|v| v * v).sum::<f64>();
    let drift = (e(h.last()) - e(&u0)).abs() / e(&u0);
    assert!(drift < 1e-6, "{drift}");
}

#[test]
fn reference_is_fourth_order_in_time() {
    let g = grid(32);
    let u0 = divfree(&g, 4, 3);
    let u0 = u0.scale(1.0 / u0.sup_norm());
    let fine = reference_nse_solve(&u0, 0.01, 0.0025, 0.4).unwrap();
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dt| field_sup_diff(reference_nse_solve(&u0, 0.01, dt, 0.4).unwrap().last(), fine.last()))
        .collect();
    let p1 = (errs[0] / errs[1]).log2();
    let p2 = (errs[1] / errs[2]).log2();
    let order = 0.5 * (p1 + p2);
    assert!((order - 4.0).abs() <= 0.3, "orders {p1} {p2}");
}

#[test]
fn reference_aborts_on_cfl_violation() {
    let g = grid(16);
    let u0 = taylor_green(g).unwrap().initial_data().scale(50.0);
    let r = reference_solve(&u0, &ReferenceConfig::new(0.0, 0.1, 0.5));
    assert!(r.is_err());
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn neumann_series_matches_inverse(entries in prop::collection::vec(-1.0f64..1.0, 9), dim in 2usize..4) {
        let mut x: Mat = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                x[i][j] = entries[i * 3 + j];
            }
        }
        let s = 0.5 / operator_norm(&x, dim).max(1e-12);
        for row in x.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        let mut a = x;
        for (i, row) in a.iter_mut().enumerate().take(dim) {
            row[i] += 1.0;
        }
        let direct = inverse(&a, dim).unwrap();
        let series = neumann_inverse(&x, dim, 40);
        for i in 0..dim {
            for j in 0..dim {
                prop_assert!((direct[i][j] - series[i][j]).abs() <= 1e-10);
            }
        }
        prop_assert!(operator_norm(&direct, dim) <= 1.0 / (1.0 - 0.5) + 1e-12);
    }
}

proptest! {
    #![proptest_config(cases(3))]

    #[test]
    fn diffusive_matches_reference_on_random_data(seed in any::<u64>()) {
        let g = grid(32);
        let u0 = divfree(&g, 3, seed);
        let u0 = u0.scale(1.0 / u0.sup_norm());
        let (h, rep) = solve_diffusive(&u0, &dcfg(0.02, 2.5e-3, 0.25)).unwrap();
        prop_assert!(h.max_divergence() <= 1e-9);
        prop_assert!(rep.converged);
        let r = reference_nse_solve(&u0, 0.02, 2.5e-3, 0.25).unwrap();
        let (l2, _, _) = field_errors(r.last(), h.last()).unwrap();
        prop_assert!(l2 <= 1e-3, "{}", l2);
    }
}
