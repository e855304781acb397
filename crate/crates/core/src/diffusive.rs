//! Deterministic diffusive-Lagrangian formulation.
//!
//! With `D = ∂_t + u·∇ − νΔ` the displacement and the virtual velocity
//! solve
//!
//! ```text
//! D ℓ   = −u,                                   ℓ(0) = 0
//! D v_β = 2ν Σ_{i,j} C^i_{j,β} ∂_j v_i,         v(0) = u(0)
//! C^p_{j,i} = Σ_k (𝕀 + ∇ℓ)⁻¹_{ki} ∂_k ∂_j ℓ_p
//! ```
//!
//! where `(𝕀 + ∇ℓ)_{ab} = δ_ab + ∂_b ℓ_a` is the Jacobian of `A = I + ℓ`,
//! and the velocity is recovered as `u = W(v, ℓ)`. Time stepping is Heun
//! on the advective and source terms with diffusion integrated exactly
//! (`e^{−ν|k|²dt}`); every product is 2/3-dealiased.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flowmap::DisplacementMap;
use crate::grid::{Field, TorusGrid, VectorField};
use crate::history::VelocityHistory;
use crate::linalg::{self, Mat};
use crate::spectral::{
    derivative_factors, differentiate2, forward_components, spectral_len, truncate_spectrum, wavevector,
    SpectralField,
};
use crate::stochastic::{check_initial, picard_residuals, ConvergenceReport, IterationRecord};
use crate::weber::weber_with_gradient;

/// `C^p_{j,i}` per node, stored at component `p·d² + j·d + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorCoeffs {
    grid: TorusGrid,
    comps: Vec<Vec<f64>>,
}

impl CommutatorCoeffs {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// `C^p_{j,i}` at every node.
    pub fn get(&self, p: usize, j: usize, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.comps[p * d * d + j * d + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-node `(𝕀 + ∇ℓ)⁻¹` from the first derivatives `grad[a][b] = ∂_a ℓ_b`.
fn jacobian_inverses(grid: &TorusGrid, grad: &[Vec<f64>]) -> Result<Vec<Mat>> {
    let d = grid.dim();
    (0..grid.nodes())
        .map(|p| {
            let mut m = linalg::identity(d);
            for a in 0..d {
                for b in 0..d {
                    // (𝕀 + ∇ℓ)_{ab} = δ_ab + ∂_b ℓ_a
                    m[a][b] += grad[b * d + a][p];
                }
            }
            let det = linalg::det(&m, d);
            if !(det.abs() > 1e-8) {
                return Err(Error::SingularMatrix { node: p, det });
            }
            linalg::inverse(&m, d).ok_or(Error::SingularMatrix { node: p, det })
        })
        .collect()
}

/// Commutator coefficients of `ℓ`, with the Jacobian inverted directly.
pub fn commutator(ell: &DisplacementMap) -> Result<CommutatorCoeffs> {
    let grid = *ell.grid();
    let d = grid.dim();
    let spec = forward_components(ell.disp());
    let grad = ell.gradient().into_components();
    let inv = jacobian_inverses(&grid, &grad)?;
    let hess = hessians(&spec);
    let mut comps = vec![vec![0.0; grid.nodes()]; d * d * d];
    for p in 0..d {
        for j in 0..d {
            for i in 0..d {
                let out = &mut comps[p * d * d + j * d + i];
                for (node, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += inv[node][k][i] * hess[p][sym(k, j, d)][node];
                    }
                    *o = s;
                }
            }
        }
    }
    Ok(CommutatorCoeffs { grid, comps })
}

/// Index of the unordered pair `(a, b)` among `d(d+1)/2`.
fn sym(a: usize, b: usize, d: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * d - a * (a + 1) / 2 + b
}

/// `hess[p][sym(a, b)] = ∂_a ∂_b ℓ_p`.
fn hessians(spec: &[SpectralField]) -> Vec<Vec<Vec<f64>>> {
    let d = spec[0].grid().dim();
    spec.iter()
        .map(|s| {
            let mut out = vec![Vec::new(); d * (d + 1) / 2];
            for a in 0..d {
                for b in a..d {
                    out[sym(a, b, d)] = differentiate2(s, a, b).inverse();
                }
            }
            out
        })
        .collect()
}

/// `(1 + x)⁻¹ ≈ Σ_{n ≤ terms} (−x)ⁿ`.
pub fn neumann_inverse(x: &Mat, d: usize, terms: usize) -> Mat {
    let mut sum = linalg::identity(d);
    let mut power = linalg::identity(d);
    let mut neg = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            neg[i][j] = -x[i][j];
        }
    }
    for _ in 0..terms {
        power = linalg::matmul(&power, &neg, d);
        for i in 0..d {
            for j in 0..d {
                sum[i][j] += power[i][j];
            }
        }
    }
    sum
}

/// Precomputed wavenumber tables.
struct Ops {
    grid: TorusGrid,
    kd: Vec<Vec<f64>>,
    decay: Vec<f64>,
}

impl Ops {
    fn new(grid: TorusGrid, nu: f64, dt: f64) -> Self {
        let d = grid.dim();
        let scale = std::f64::consts::TAU / grid.length();
        let decay = (0..spectral_len(&grid))
            .map(|i| {
                let k = wavevector(&grid, i);
                let k2: f64 = (0..d).map(|a| (scale * k[a] as f64).powi(2)).sum();
                (-nu * k2 * dt).exp()
            })
            .collect();
        Self { grid, kd: (0..d).map(|a| derivative_factors(&grid, a)).collect(), decay }
    }

    fn deriv(&self, s: &SpectralField, a: usize) -> Vec<f64> {
        let mut out = s.clone();
        for (c, k) in out.coeffs_mut().iter_mut().zip(&self.kd[a]) {
            *c = Complex64::new(-c.im * k, c.re * k);
        }
        out.inverse()
    }

    /// Truncated spectra and their nodal values.
    fn truncated(&self, spec: &[SpectralField]) -> (Vec<SpectralField>, Vec<Vec<f64>>) {
        let t: Vec<SpectralField> = spec
            .iter()
            .map(|s| {
                let mut s = s.clone();
                truncate_spectrum(&mut s);
                s
            })
            .collect();
        let phys = t.iter().map(|s| s.inverse()).collect();
        (t, phys)
    }

    fn forward_truncated(&self, values: &[f64]) -> SpectralField {
        let mut s = SpectralField::forward(self.grid, values);
        truncate_spectrum(&mut s);
        s
    }

    /// `e^{−ν|k|²dt} (a + h·b)`.
    fn decay_add(&self, a: &[SpectralField], b: &[SpectralField], h: f64) -> Vec<SpectralField> {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let mut o = x.clone();
                for ((c, yv), e) in o.coeffs_mut().iter_mut().zip(y.coeffs()).zip(&self.decay) {
                    *c = (*c + yv * h) * e;
                }
                o
            })
            .collect()
    }

    /// Heun combination `E y + h/2 (E fa + fb)`.
    fn heun(&self, y: &[SpectralField], fa: &[SpectralField], fb: &[SpectralField], h: f64) -> Vec<SpectralField> {
        (0..y.len())
            .map(|j| {
                let mut o = y[j].clone();
                for (i, c) in o.coeffs_mut().iter_mut().enumerate() {
                    let e = self.decay[i];
                    *c = *c * e + (fa[j].coeffs()[i] * e + fb[j].coeffs()[i]) * (0.5 * h);
                }
                o
            })
            .collect()
    }

    /// `−(u·∇)f` for each component of `f`, dealiased.
    fn advection(&self, u: &[Vec<f64>], f: &[SpectralField]) -> (Vec<SpectralField>, Vec<Vec<f64>>) {
        let d = self.grid.dim();
        let nodes = self.grid.nodes();
        let (ft, _) = self.truncated(f);
        // grad[a*d + c] = ∂_a f_c
        let mut grad = vec![Vec::new(); d * d];
        for a in 0..d {
            for (c, s) in ft.iter().enumerate() {
                grad[a * d + c] = self.deriv(s, a);
            }
        }
        let out = (0..f.len())
            .map(|c| {
                let adv: Vec<f64> = (0..nodes)
                    .map(|p| -(0..d).map(|a| u[a][p] * grad[a * d + c][p]).sum::<f64>())
                    .collect();
                self.forward_truncated(&adv)
            })
            .collect();
        (out, grad)
    }
}

/// Tendencies of `ℓ` and `v` at one stage, given nodal `u` (any spectrum).
fn tendency(
    ops: &Ops,
    u: &VectorField,
    ell: &[SpectralField],
    v: Option<&[SpectralField]>,
    nu: f64,
    frozen_c: Option<&CommutatorCoeffs>,
) -> Result<(Vec<SpectralField>, Vec<SpectralField>)> {
    let grid = ops.grid;
    let d = grid.dim();
    let nodes = grid.nodes();
    let uspec = forward_components(u);
    let (_, ut) = ops.truncated(&uspec);
    let (mut fl, gl) = ops.advection(&ut, ell);
    for (f, us) in fl.iter_mut().zip(&uspec) {
        for (c, s) in f.coeffs_mut().iter_mut().zip(us.coeffs()) {
            *c -= s;
        }
    }
    let Some(v) = v else { return Ok((fl, Vec::new())) };
    let (mut fv, gv) = ops.advection(&ut, v);
    if nu > 0.0 {
        let computed;
        let cc = match frozen_c {
            Some(c) => c,
            None => {
                let (lt, _) = ops.truncated(ell);
                let inv = jacobian_inverses(&grid, &gl)?;
                let hess = hessians(&lt);
                let mut comps = vec![vec![0.0; nodes]; d * d * d];
                for p in 0..d {
                    for j in 0..d {
                        for i in 0..d {
                            let out = &mut comps[p * d * d + j * d + i];
                            for (node, o) in out.iter_mut().enumerate() {
                                let mut s = 0.0;
                                for k in 0..d {
                                    s += inv[node][k][i] * hess[p][sym(k, j, d)][node];
                                }
                                *o = s;
                            }
                        }
                    }
                }
                computed = CommutatorCoeffs { grid, comps };
                &computed
            }
        };
        // source_β = 2ν Σ_{i,j} C^i_{j,β} ∂_j v_i, with gv[j*d + i] = ∂_j v_i
        for (beta, f) in fv.iter_mut().enumerate() {
            let src: Vec<f64> = (0..nodes)
                .map(|p| {
                    let mut s = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            s += cc.get(i, j, beta)[p] * gv[j * d + i][p];
                        }
                    }
                    2.0 * nu * s
                })
                .collect();
            let s = ops.forward_truncated(&src);
            for (c, sv) in f.coeffs_mut().iter_mut().zip(s.coeffs()) {
                *c += sv;
            }
        }
    }
    Ok((fl, fv))
}

fn to_field(grid: TorusGrid, spec: &[SpectralField]) -> VectorField {
    Field::vector(grid, spec.iter().map(|s| s.inverse()).collect()).expect("shape")
}

fn grad_norm(ops: &Ops, spec: &[SpectralField]) -> f64 {
    let d = ops.grid.dim();
    let mut comps = vec![Vec::new(); d * d];
    for a in 0..d {
        for (c, s) in spec.iter().enumerate() {
            comps[a * d + c] = ops.deriv(s, a);
        }
    }
    Field::from_components(ops.grid, 2, comps).expect("shape").sup_operator_norm()
}

/// One step of `Dℓ = −u` from `u(t_k)` to `u(t_{k+1})`. Fails with
/// [`Error::BallExit`] if the new `‖∇ℓ‖∞` reaches `threshold`.
pub fn advance_displacement(
    ell: &DisplacementMap,
    u_k: &VectorField,
    u_k1: &VectorField,
    nu: f64,
    dt: f64,
    threshold: f64,
) -> Result<DisplacementMap> {
    let grid = *ell.grid();
    let ops = Ops::new(grid, nu, dt);
    let y = forward_components(ell.disp());
    let (fa, _) = tendency(&ops, u_k, &y, None, nu, None)?;
    let pred = ops.decay_add(&y, &fa, dt);
    let (fb, _) = tendency(&ops, u_k1, &pred, None, nu, None)?;
    let next = ops.heun(&y, &fa, &fb, dt);
    let g = grad_norm(&ops, &next);
    if g >= threshold {
        return Err(Error::BallExit { time: f64::NAN, step: 0, grad_norm: g });
    }
    DisplacementMap::new(to_field(grid, &next))
}

/// One step of the virtual-velocity equation with the commutator held
/// fixed at `c` across both stages.
pub fn advance_virtual_velocity(
    v: &VectorField,
    u_k: &VectorField,
    u_k1: &VectorField,
    c: &CommutatorCoeffs,
    nu: f64,
    dt: f64,
) -> Result<VectorField> {
    let grid = *v.grid();
    let ops = Ops::new(grid, nu, dt);
    let y = forward_components(v);
    let zero = vec![SpectralField::zeros(grid); grid.dim()];
    let (_, fa) = tendency(&ops, u_k, &zero, Some(&y), nu, Some(c))?;
    let pred = ops.decay_add(&y, &fa, dt);
    let (_, fb) = tendency(&ops, u_k1, &zero, Some(&pred), nu, Some(c))?;
    Ok(to_field(grid, &ops.heun(&y, &fa, &fb, dt)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusiveConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub remap_threshold: f64,
    /// Upper bound on window length in steps (remaps happen at least this
    /// often).
    pub max_window_steps: Option<usize>,
}

impl Default for DiffusiveConfig {
    fn default() -> Self {
        Self {
            nu: 0.0,
            dt: 1e-3,
            t_final: 0.1,
            picard_tol: 1e-8,
            picard_max: 40,
            remap_threshold: 0.4,
            max_window_steps: None,
        }
    }
}

impl DiffusiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.nu >= 0.0) {
            return bad("nu", format!("{} must be ≥ 0", self.nu));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_final) {
            return bad("dt", format!("need 0 < dt ≤ t_final, got {} and {}", self.dt, self.t_final));
        }
        if !(self.remap_threshold > 0.0 && self.remap_threshold < 0.5) {
            return bad("remap_threshold", format!("{} not in (0, 1/2)", self.remap_threshold));
        }
        if self.picard_max == 0 || !(self.picard_tol > 0.0) {
            return bad("picard", "need picard_max ≥ 1 and picard_tol > 0".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }
}

/// Evolves `(ℓ, v)` along the drift `u` and returns `W(v, ℓ)` per slice.
/// `offset` is the global step index of slice 0 (for error reports).
pub fn diffusive_map(u: &VelocityHistory, cfg: &DiffusiveConfig, offset: usize) -> Result<VelocityHistory> {
    let grid = *u.grid();
    let ops = Ops::new(grid, cfg.nu, cfg.dt);
    let d = grid.dim();
    let mut ell = vec![SpectralField::zeros(grid); d];
    let mut v = forward_components(u.slice(0));
    let mut out = vec![u.slice(0).clone()];
    for k in 0..u.steps() {
        let (la, va) = tendency(&ops, u.slice(k), &ell, Some(&v), cfg.nu, None)?;
        let lp = ops.decay_add(&ell, &la, cfg.dt);
        let vp = ops.decay_add(&v, &va, cfg.dt);
        let (lb, vb) = tendency(&ops, u.slice(k + 1), &lp, Some(&vp), cfg.nu, None)?;
        ell = ops.heun(&ell, &la, &lb, cfg.dt);
        v = ops.heun(&v, &va, &vb, cfg.dt);
        let g = grad_norm(&ops, &ell);
        if g >= cfg.remap_threshold {
            return Err(Error::BallExit { time: u.time(k + 1), step: offset + k + 1, grad_norm: g });
        }
        let (w, _) = weber_with_gradient(&to_field(grid, &v), &to_field(grid, &ell))?;
        if !w.is_finite() {
            return Err(Error::NonFinite(format!("diffusive velocity at step {}", offset + k + 1)));
        }
        out.push(w);
    }
    VelocityHistory::new(u.t0(), u.dt(), out)
}

fn solve_window(
    u0: &VectorField,
    cfg: &DiffusiveConfig,
    t0: f64,
    steps: usize,
    offset: usize,
) -> Result<(VelocityHistory, ConvergenceReport)> {
    let mut u = VelocityHistory::constant(u0, t0, cfg.dt, steps)?;
    let mut report = ConvergenceReport { windows: vec![(t0, t0 + steps as f64 * cfg.dt)], ..Default::default() };
    for iter in 1..=cfg.picard_max {
        let start = Instant::now();
        let next = diffusive_map(&u, cfg, offset)?;
        let (r0, r1) = picard_residuals(&next, &u)?;
        report.iterations.push(IterationRecord {
            iter,
            residual_c0: r0,
            residual_c1: r1,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        u = next;
        if r0 < cfg.picard_tol {
            report.converged = true;
            return Ok((u, report));
        }
    }
    let residuals = report.residuals();
    Err(Error::NoConvergence {
        iterations: cfg.picard_max,
        last_residual: *residuals.last().unwrap_or(&f64::NAN),
        residuals,
    })
}

/// Picard iteration over successive windows; a window is shortened ahead
/// of any step where `‖∇ℓ‖∞` reaches the remap threshold, and each new
/// window restarts with `ℓ = 0`, `v = u(t_start)`.
pub fn solve_diffusive(u0: &VectorField, cfg: &DiffusiveConfig) -> Result<(VelocityHistory, ConvergenceReport)> {
    cfg.validate()?;
    check_initial(u0)?;
    let total = cfg.steps();
    let mut window = cfg.max_window_steps.unwrap_or(total).max(1);
    let mut done = 0;
    let mut start = u0.clone();
    let mut history: Option<VelocityHistory> = None;
    let mut report = ConvergenceReport::default();
    while done < total {
        let steps = window.min(total - done);
        match solve_window(&start, cfg, done as f64 * cfg.dt, steps, done) {
            Ok((h, r)) => {
                start = h.last().clone();
                match history.as_mut() {
                    Some(all) => all.extend(h)?,
                    None => history = Some(h),
                }
                report.absorb(r);
                done += steps;
            }
            Err(Error::BallExit { step, time, grad_norm }) => {
                let reached = step - done;
                if reached <= 1 {
                    return Err(Error::BallExit { step, time, grad_norm });
                }
                window = reached - 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((history.expect("at least one window"), report))
}
