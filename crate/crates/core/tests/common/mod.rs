#![allow(dead_code)]

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stochflow::spectral::{forward_components, inverse_components, differentiate};
use stochflow::trig::TrigSeries;
use stochflow::{Field, TorusGrid, VectorField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid(n: usize) -> TorusGrid {
    TorusGrid::square(n).unwrap()
}

/// Random band-limited series with `components` components.
pub fn series(g: &TorusGrid, components: usize, kmax: i64, seed: u64) -> TrigSeries {
    TrigSeries::random(g.dim(), g.length(), components, kmax, &mut rng(seed))
}

pub fn scalar(g: &TorusGrid, kmax: i64, seed: u64) -> Field {
    series(g, 1, kmax, seed).sample(*g, 0)
}

pub fn vector(g: &TorusGrid, kmax: i64, seed: u64) -> VectorField {
    series(g, g.dim(), kmax, seed).sample(*g, 1)
}

pub fn divfree(g: &TorusGrid, kmax: i64, seed: u64) -> VectorField {
    TrigSeries::random_divfree(g.dim(), g.length(), kmax, &mut rng(seed)).sample(*g, 1)
}

/// Series rescaled so that its sampled gradient has sup norm `target`.
pub fn displacement_series(g: &TorusGrid, kmax: i64, seed: u64, target: f64) -> TrigSeries {
    let s = series(g, g.dim(), kmax, seed);
    let grad = stochflow::spectral::spectral_gradient(&s.sample(*g, 1)).unwrap();
    s.scaled(target / grad.sup_operator_norm())
}

/// `(1/N) Σ_j f_j e^{-2πi k·j/n}` by direct summation.
pub fn naive_dft(f: &[f64], g: &TorusGrid, k: [i64; 3]) -> Complex64 {
    let n = g.n() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (node, v) in f.iter().enumerate() {
        let idx = g.unflatten(node);
        let phase: f64 = (0..g.dim()).map(|a| -TAU * k[a] as f64 * idx[a] as f64 / n).sum();
        acc += Complex64::from_polar(*v, phase);
    }
    acc / g.nodes() as f64
}

/// Eighth-order centred difference of one scalar component along `axis`.
pub fn fd8(values: &[f64], g: &TorusGrid, axis: usize) -> Vec<f64> {
    const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let n = g.n();
    let h = g.spacing();
    (0..values.len())
        .map(|node| {
            let idx = g.unflatten(node);
            let mut acc = 0.0;
            for (m, w) in W.iter().enumerate() {
                let s = m + 1;
                let mut p = idx;
                let mut q = idx;
                p[axis] = (idx[axis] + s) % n;
                q[axis] = (idx[axis] + n - s) % n;
                acc += w * (values[g.flatten(p)] - values[g.flatten(q)]);
            }
            acc / h
        })
        .collect()
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn field_sup_diff(a: &Field, b: &Field) -> f64 {
    a.sub(b).sup_norm()
}

fn deriv(f: &Field, axis: usize) -> Field {
    let spec: Vec<_> = forward_components(f).iter().map(|s| differentiate(s, axis)).collect();
    inverse_components(*f.grid(), f.rank(), &spec)
}

/// `∂_t ℓ = −(u·∇)ℓ + νΔℓ − u` with `u` interpolated linearly in time,
/// advanced by classical RK4 with `sub` substeps and undealiased
/// spectral derivatives.
pub fn rk4_displacement(ell: &VectorField, u0: &VectorField, u1: &VectorField, nu: f64, dt: f64, sub: usize) -> VectorField {
    let d = ell.dim();
    let rhs = |l: &VectorField, s: f64| -> VectorField {
        let u = u0.scale(1.0 - s).add(&u1.scale(s));
        let mut out = u.scale(-1.0);
        for a in 0..d {
            let dl = deriv(l, a);
            let dd = deriv(&dl, a);
            for c in 0..d {
                let o = out.comp_mut(c);
                for (p, v) in o.iter_mut().enumerate() {
                    *v += nu * dd.comp(c)[p] - u.comp(a)[p] * dl.comp(c)[p];
                }
            }
        }
        out
    };
    let h = dt / sub as f64;
    let mut y = ell.clone();
    for k in 0..sub {
        let s0 = k as f64 / sub as f64;
        let sh = (k as f64 + 0.5) / sub as f64;
        let s1 = (k as f64 + 1.0) / sub as f64;
        let k1 = rhs(&y, s0);
        let k2 = rhs(&y.add(&k1.scale(h / 2.0)), sh);
        let k3 = rhs(&y.add(&k2.scale(h / 2.0)), sh);
        let k4 = rhs(&y.add(&k3.scale(h)), s1);
        let mut inc = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4);
        inc = inc.scale(h / 6.0);
        y = y.add(&inc);
    }
    y
}

/// Solves `a + λ(a) = x` by Newton's method on the closed-form series.
pub fn newton_preimage(lambda: &TrigSeries, x: &[f64]) -> Vec<f64> {
    let d = lambda.dim;
    let grads: Vec<TrigSeries> = (0..d).map(|a| lambda.derivative(a)).collect();
    let mut a = x.to_vec();
    for _ in 0..50 {
        let l = lambda.eval(&a);
        let r: Vec<f64> = (0..d).map(|i| a[i] + l[i] - x[i]).collect();
        if r.iter().all(|v| v.abs() < 1e-15) {
            break;
        }
        // J_ij = δ_ij + ∂_j λ_i
        let mut j = [[0.0; 3]; 3];
        for (c, gs) in grads.iter().enumerate() {
            let v = gs.eval(&a);
            for i in 0..d {
                j[i][c] = v[i] + if i == c { 1.0 } else { 0.0 };
            }
        }
        let inv = stochflow::linalg::inverse(&j, d).unwrap();
        for i in 0..d {
            a[i] -= (0..d).map(|k| inv[i][k] * r[k]).sum::<f64>();
        }
    }
    a
}
