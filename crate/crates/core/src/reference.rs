//! Closed-form Navier-Stokes solutions and a classical pseudo-spectral solver.
//!
//! The solver advances vorticity in 2D and the rotational form
//! `∂_t u = P[u × ω] + νΔu` in 3D, with fourth-order Runge-Kutta on the
//! nonlinear term and the viscous term integrated exactly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid, VectorField};
use crate::history::VelocityHistory;
use crate::spectral::{
    derivative_factors, forward_components, project_spectra, spectral_len, truncate_spectrum, wavevector,
    SpectralField,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Profile {
    TaylorGreen,
    Shear { k: i64 },
    Ring,
}

/// Stream-function modes `(k, a, b)` of [`ring_mode`], `ψ = Σ a cos(k·x) + b sin(k·x)`.
const RING: [([f64; 2], f64, f64); 4] =
    [([1.0, 2.0], 1.0, 0.5), ([2.0, 1.0], -0.8, 0.6), ([1.0, -2.0], 0.3, -0.9), ([2.0, -1.0], 0.7, 0.2)];

/// An exact solution `u(x, t; ν)` of the incompressible equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub name: String,
    grid: TorusGrid,
    profile: Profile,
    amplitude: f64,
}

/// `e^{−2νt} (sin x cos y, −cos x sin y)` on `[0, 2π)²`.
pub fn taylor_green(grid: TorusGrid) -> Result<ExactSolution> {
    if grid.dim() != 2 || (grid.length() - std::f64::consts::TAU).abs() > 1e-12 {
        return Err(Error::Unsupported("Taylor-Green needs dim = 2 and L = 2π".into()));
    }
    Ok(ExactSolution { name: "taylor_green".into(), grid, profile: Profile::TaylorGreen, amplitude: 1.0 })
}

/// `(e^{−νκ²t} sin(κy), 0)` with `κ = 2πk/L`.
pub fn shear_mode(grid: TorusGrid, k: i64) -> Result<ExactSolution> {
    if k == 0 || k.unsigned_abs() as usize > grid.n() / 2 - 1 {
        return Err(Error::Unsupported(format!("shear wavenumber {k} not resolved on n = {}", grid.n())));
    }
    Ok(ExactSolution { name: format!("shear_k{k}"), grid, profile: Profile::Shear { k }, amplitude: 1.0 })
}

/// 2D flow built from the four wavevector pairs with `|k|² = 5` (in units
/// of `2π/L`). Any divergence-free field on one such shell has `u·∇ω = 0`,
/// so it decays as `e^{−5κ²νt}` with `κ = 2π/L`. Unlike the shear mode its
/// characteristics mix in both directions. Amplitude 1 gives the
/// stream-function coefficients of [`RING`].
pub fn ring_mode(grid: TorusGrid) -> Result<ExactSolution> {
    if grid.dim() != 2 || grid.n() < 8 {
        return Err(Error::Unsupported("ring mode needs dim = 2 and n >= 8".into()));
    }
    Ok(ExactSolution { name: "ring".into(), grid, profile: Profile::Ring, amplitude: 1.0 })
}

impl ExactSolution {
    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn decay_rate(&self) -> f64 {
        match self.profile {
            Profile::TaylorGreen => 2.0,
            Profile::Shear { k } => (std::f64::consts::TAU * k as f64 / self.grid.length()).powi(2),
            Profile::Ring => 5.0 * (std::f64::consts::TAU / self.grid.length()).powi(2),
        }
    }

    pub fn eval_into(&self, x: &[f64], t: f64, nu: f64, out: &mut [f64]) {
        let a = self.amplitude * (-nu * self.decay_rate() * t).exp();
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.profile {
            Profile::TaylorGreen => {
                out[0] = a * x[0].sin() * x[1].cos();
                out[1] = -a * x[0].cos() * x[1].sin();
            }
            Profile::Shear { k } => {
                let kk = std::f64::consts::TAU * k as f64 / self.grid.length();
                out[0] = a * (kk * x[1]).sin();
            }
            Profile::Ring => {
                let kk = std::f64::consts::TAU / self.grid.length();
                for (k, ca, cb) in RING {
                    let ph = kk * (k[0] * x[0] + k[1] * x[1]);
                    // ∇ψ = κ k (−a sin + b cos), u = (∂_yψ, −∂_xψ)
                    let dpsi = kk * (cb * ph.cos() - ca * ph.sin());
                    out[0] += a * k[1] * dpsi;
                    out[1] -= a * k[0] * dpsi;
                }
            }
        }
    }

    pub fn field(&self, t: f64, nu: f64) -> VectorField {
        Field::from_fn(self.grid, 1, |x, o| self.eval_into(x, t, nu, o))
    }

    pub fn initial_data(&self) -> VectorField {
        self.field(0.0, 0.0)
    }

    pub fn history(&self, nu: f64, dt: f64, steps: usize) -> Result<VelocityHistory> {
        VelocityHistory::new(0.0, dt, (0..=steps).map(|k| self.field(k as f64 * dt, nu)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Keep every `store_every`-th step.
    pub store_every: usize,
    /// Abort when `dt Σ_a |u_a|/h` exceeds this.
    pub cfl_limit: f64,
}

impl ReferenceConfig {
    pub fn new(nu: f64, dt: f64, t_final: f64) -> Self {
        Self { nu, dt, t_final, store_every: 1, cfl_limit: 1.0 }
    }
}

pub fn reference_nse_solve(u0: &VectorField, nu: f64, dt: f64, t_final: f64) -> Result<VelocityHistory> {
    reference_solve(u0, &ReferenceConfig::new(nu, dt, t_final))
}

pub fn reference_solve(u0: &VectorField, cfg: &ReferenceConfig) -> Result<VelocityHistory> {
    if !(cfg.nu >= 0.0) || !(cfg.dt > 0.0) || !(cfg.t_final >= cfg.dt) || cfg.store_every == 0 {
        return Err(Error::InvalidParameter { name: "reference", reason: format!("{cfg:?}") });
    }
    if u0.rank() != 1 {
        return Err(Error::Shape("initial data must be a vector field".into()));
    }
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    if (steps as f64 * cfg.dt - cfg.t_final).abs() > 1e-9 * cfg.t_final || steps % cfg.store_every != 0 {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("t_final = {} is not a multiple of dt·store_every", cfg.t_final),
        });
    }
    let grid = *u0.grid();
    let mut state = if grid.dim() == 2 { State::vorticity(u0) } else { State::rotational(u0) };
    let ops = Ops::new(grid, cfg.nu, cfg.dt);
    let mut slices = vec![u0.clone()];
    for step in 1..=steps {
        state.check_cfl(&ops, cfg)?;
        state.rk4(&ops);
        if step % cfg.store_every == 0 {
            let u = state.velocity(&ops);
            if !u.is_finite() {
                return Err(Error::NonFinite(format!("reference solver at step {step}")));
            }
            slices.push(u);
        }
    }
    VelocityHistory::new(0.0, cfg.dt * cfg.store_every as f64, slices)
}

/// Precomputed wavenumber arrays.
struct Ops {
    grid: TorusGrid,
    kd: Vec<Vec<f64>>,
    k2: Vec<f64>,
    e_full: Vec<f64>,
    e_half: Vec<f64>,
    dt: f64,
}

impl Ops {
    fn new(grid: TorusGrid, nu: f64, dt: f64) -> Self {
        let d = grid.dim();
        let scale = std::f64::consts::TAU / grid.length();
        let kd: Vec<Vec<f64>> = (0..d).map(|a| derivative_factors(&grid, a)).collect();
        let k2: Vec<f64> = (0..spectral_len(&grid))
            .map(|i| {
                let k = wavevector(&grid, i);
                (0..d).map(|a| (scale * k[a] as f64).powi(2)).sum()
            })
            .collect();
        let e_full = k2.iter().map(|k| (-nu * k * dt).exp()).collect();
        let e_half = k2.iter().map(|k| (-nu * k * dt * 0.5).exp()).collect();
        Self { grid, kd, k2, e_full, e_half, dt }
    }

    fn deriv(&self, s: &SpectralField, a: usize) -> SpectralField {
        let mut out = s.clone();
        for (c, k) in out.coeffs_mut().iter_mut().zip(&self.kd[a]) {
            *c = Complex64::new(-c.im * k, c.re * k);
        }
        out
    }
}

enum State {
    /// Vorticity spectrum and the (constant) mean velocity.
    Vort { w: SpectralField, mean: [f64; 2] },
    Rot { u: Vec<SpectralField> },
}

fn scale_add(a: &[SpectralField], b: &[SpectralField], factor: &[f64], h: f64) -> Vec<SpectralField> {
    // factor · (a + h b)
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut o = x.clone();
            for ((c, yv), f) in o.coeffs_mut().iter_mut().zip(y.coeffs()).zip(factor) {
                *c = (*c + yv * h) * f;
            }
            o
        })
        .collect()
}

fn scaled(a: &[SpectralField], factor: &[f64]) -> Vec<SpectralField> {
    a.iter()
        .map(|x| {
            let mut o = x.clone();
            for (c, f) in o.coeffs_mut().iter_mut().zip(factor) {
                *c *= f;
            }
            o
        })
        .collect()
}

impl State {
    fn vorticity(u0: &VectorField) -> Self {
        let grid = *u0.grid();
        let spec = forward_components(u0);
        let ops_kd: Vec<Vec<f64>> = (0..2).map(|a| derivative_factors(&grid, a)).collect();
        let mut w = SpectralField::zeros(grid);
        for (i, c) in w.coeffs_mut().iter_mut().enumerate() {
            // ω = ∂_x u_y − ∂_y u_x
            let a = spec[1].coeffs()[i] * Complex64::new(0.0, ops_kd[0][i]);
            let b = spec[0].coeffs()[i] * Complex64::new(0.0, ops_kd[1][i]);
            *c = a - b;
        }
        let m = u0.mean();
        State::Vort { w, mean: [m[0], m[1]] }
    }

    fn rotational(u0: &VectorField) -> Self {
        State::Rot { u: forward_components(u0) }
    }

    fn components(&self) -> Vec<SpectralField> {
        match self {
            State::Vort { w, .. } => vec![w.clone()],
            State::Rot { u } => u.clone(),
        }
    }

    fn set_components(&mut self, v: Vec<SpectralField>) {
        match self {
            State::Vort { w, .. } => *w = v.into_iter().next().expect("one component"),
            State::Rot { u } => *u = v,
        }
    }

    /// Velocity spectra from vorticity (2D, plus the mean) or directly.
    fn velocity_spectra(&self, ops: &Ops, comps: &[SpectralField]) -> Vec<SpectralField> {
        match self {
            State::Vort { mean, .. } => {
                let w = &comps[0];
                let mut ux = SpectralField::zeros(ops.grid);
                let mut uy = SpectralField::zeros(ops.grid);
                for i in 0..w.coeffs().len() {
                    if ops.k2[i] == 0.0 {
                        continue;
                    }
                    let psi = w.coeffs()[i] / ops.k2[i];
                    // u = (∂_y ψ, −∂_x ψ)
                    ux.coeffs_mut()[i] = psi * Complex64::new(0.0, ops.kd[1][i]);
                    uy.coeffs_mut()[i] = -psi * Complex64::new(0.0, ops.kd[0][i]);
                }
                ux.coeffs_mut()[0] = Complex64::new(mean[0], 0.0);
                uy.coeffs_mut()[0] = Complex64::new(mean[1], 0.0);
                vec![ux, uy]
            }
            State::Rot { .. } => comps.to_vec(),
        }
    }

    fn velocity(&self, ops: &Ops) -> VectorField {
        let spec = self.velocity_spectra(ops, &self.components());
        Field::vector(ops.grid, spec.iter().map(|s| s.inverse()).collect()).expect("shape")
    }

    /// Dealiased nonlinear tendency.
    fn nonlinear(&self, ops: &Ops, comps: &[SpectralField]) -> Vec<SpectralField> {
        let grid = ops.grid;
        let mut uspec = self.velocity_spectra(ops, comps);
        uspec.iter_mut().for_each(truncate_spectrum);
        let u: Vec<Vec<f64>> = uspec.iter().map(|s| s.inverse()).collect();
        match self {
            State::Vort { .. } => {
                let mut w = comps[0].clone();
                truncate_spectrum(&mut w);
                let wx = ops.deriv(&w, 0).inverse();
                let wy = ops.deriv(&w, 1).inverse();
                let adv: Vec<f64> = (0..grid.nodes()).map(|p| -(u[0][p] * wx[p] + u[1][p] * wy[p])).collect();
                let mut out = SpectralField::forward(grid, &adv);
                truncate_spectrum(&mut out);
                vec![out]
            }
            State::Rot { .. } => {
                // ω = ∇ × u
                let du = |a: usize, b: usize| ops.deriv(&uspec[a], b).inverse();
                let wv = [
                    sub(&du(2, 1), &du(1, 2)),
                    sub(&du(0, 2), &du(2, 0)),
                    sub(&du(1, 0), &du(0, 1)),
                ];
                let cross = |a: usize, b: usize| -> Vec<f64> {
                    (0..grid.nodes()).map(|p| u[a][p] * wv[b][p] - u[b][p] * wv[a][p]).collect()
                };
                let prod = [cross(1, 2), cross(2, 0), cross(0, 1)];
                let mut out: Vec<SpectralField> = prod.iter().map(|c| SpectralField::forward(grid, c)).collect();
                out.iter_mut().for_each(truncate_spectrum);
                project_spectra(&mut out);
                out
            }
        }
    }

    fn rk4(&mut self, ops: &Ops) {
        let h = ops.dt;
        let y = self.components();
        let a = self.nonlinear(ops, &y);
        let y1 = scale_add(&y, &a, &ops.e_half, 0.5 * h);
        let b = self.nonlinear(ops, &y1);
        let yh = scaled(&y, &ops.e_half);
        let y2: Vec<SpectralField> = yh
            .iter()
            .zip(&b)
            .map(|(x, bb)| {
                let mut o = x.clone();
                for (c, v) in o.coeffs_mut().iter_mut().zip(bb.coeffs()) {
                    *c += v * (0.5 * h);
                }
                o
            })
            .collect();
        let c = self.nonlinear(ops, &y2);
        let y3: Vec<SpectralField> = y
            .iter()
            .zip(&c)
            .map(|(x, cc)| {
                let mut o = x.clone();
                for (i, v) in o.coeffs_mut().iter_mut().enumerate() {
                    *v = *v * ops.e_full[i] + cc.coeffs()[i] * (h * ops.e_half[i]);
                }
                o
            })
            .collect();
        let dd = self.nonlinear(ops, &y3);
        let next: Vec<SpectralField> = (0..y.len())
            .map(|j| {
                let mut o = y[j].clone();
                for (i, v) in o.coeffs_mut().iter_mut().enumerate() {
                    let ef = ops.e_full[i];
                    let eh = ops.e_half[i];
                    *v = *v * ef
                        + (a[j].coeffs()[i] * ef
                            + (b[j].coeffs()[i] + c[j].coeffs()[i]) * (2.0 * eh)
                            + dd[j].coeffs()[i])
                            * (h / 6.0);
                }
                o
            })
            .collect();
        self.set_components(next);
    }

    fn check_cfl(&self, ops: &Ops, cfg: &ReferenceConfig) -> Result<()> {
        let u = self.velocity(ops);
        let h = ops.grid.spacing();
        let d = ops.grid.dim();
        let mut courant = 0.0f64;
        for p in 0..ops.grid.nodes() {
            let s: f64 = (0..d).map(|a| u.comp(a)[p].abs()).sum();
            courant = courant.max(cfg.dt * s / h);
        }
        if !courant.is_finite() {
            return Err(Error::NonFinite("reference velocity".into()));
        }
        if courant > cfg.cfl_limit {
            return Err(Error::Cfl { courant, limit: cfg.cfl_limit });
        }
        Ok(())
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
