//! Noisy characteristics `dX = u dt + √(2ν) dB`, the displacement
//! `λ = X − I`, its gradient, and the spatial inverse `A = I + ℓ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{Field, TensorField, TorusGrid, VectorField};
use crate::history::VelocityHistory;
use crate::interp::{Interpolation, Interpolator};
use crate::linalg::{self, Mat};
use crate::snapshot::Snapshot;
use crate::spectral::spectral_gradient;

/// Largest `‖∇λ‖∞` for which [`invert_map`] attempts an inversion.
pub const INVERT_LIMIT: f64 = 0.9;
pub const INVERT_MAX_ITER: usize = 50;
/// Fixed-point increment tolerance, in units of `L`.
pub const INVERT_TOL: f64 = 1e-10;
/// Composition residual allowed after inversion, in units of `L`.
pub const COMPOSITION_TOL: f64 = 1e-8;

/// Periodic displacement `x ↦ x + disp(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementMap {
    disp: VectorField,
}

impl DisplacementMap {
    pub fn new(disp: VectorField) -> Result<Self> {
        if disp.rank() != 1 {
            return Err(Error::Shape("displacement must be a vector field".into()));
        }
        if !disp.is_finite() {
            return Err(Error::NonFinite("displacement".into()));
        }
        Ok(Self { disp })
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self { disp: Field::zeros(grid, 1) }
    }

    pub fn uniform(grid: TorusGrid, shift: &[f64]) -> Self {
        Self { disp: Field::constant_vector(grid, shift) }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.disp.grid()
    }

    pub fn disp(&self) -> &VectorField {
        &self.disp
    }

    pub fn into_disp(self) -> VectorField {
        self.disp
    }

    /// Spectral `∇ᵀdisp`, entry `(i, j)` = `∂_i disp_j`.
    pub fn gradient(&self) -> TensorField {
        spectral_gradient(&self.disp).expect("vector field")
    }

    /// `sup_x ‖∇disp(x)‖` in the operator 2-norm.
    pub fn gradient_norm(&self) -> f64 {
        self.gradient().sup_operator_norm()
    }

    /// Mapped node positions `a + disp(a)`, unwrapped.
    pub fn positions(&self) -> Vec<f64> {
        let g = self.grid();
        let d = g.dim();
        let mut x = g.positions();
        for c in 0..d {
            for (node, v) in self.disp.comp(c).iter().enumerate() {
                x[node * d + c] += v;
            }
        }
        x
    }
}

/// Seeded spatially uniform Wiener increments for one sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianDriver {
    pub seed: u64,
    pub path_index: u32,
    pub dt: f64,
    dim: usize,
    increments: Vec<[f64; 3]>,
}

impl BrownianDriver {
    /// Increments `ΔB_k ~ N(0, dt·I)`, `k < steps`. The stream depends
    /// only on `(seed, path_index)`, so a longer driver extends a shorter
    /// one.
    pub fn new(seed: u64, path_index: u32, dt: f64, steps: usize, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index as u64);
        let s = dt.sqrt();
        let increments = (0..steps)
            .map(|_| {
                let mut db = [0.0; 3];
                for v in db.iter_mut().take(dim) {
                    *v = s * rand::Rng::sample::<f64, _>(&mut rng, StandardNormal);
                }
                db
            })
            .collect();
        Self { seed, path_index, dt, dim, increments }
    }

    /// A driver that produces no noise.
    pub fn silent(dt: f64, steps: usize, dim: usize) -> Self {
        Self { seed: 0, path_index: 0, dt, dim, increments: vec![[0.0; 3]; steps] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k][..self.dim]
    }

    /// `B(t_k) = Σ_{j<k} ΔB_j`.
    pub fn position(&self, k: usize) -> [f64; 3] {
        let mut b = [0.0; 3];
        for inc in &self.increments[..k] {
            for a in 0..3 {
                b[a] += inc[a];
            }
        }
        b
    }

    /// The increments `start..start + steps` as a driver of their own.
    pub fn window(&self, start: usize, steps: usize) -> Self {
        Self { increments: self.increments[start..start + steps].to_vec(), ..self.clone() }
    }
}

/// A velocity source for characteristic integration on a uniform time grid.
pub trait Drift {
    fn grid(&self) -> &TorusGrid;
    fn dt(&self) -> f64;
    fn steps(&self) -> usize;
    /// `u(t_k)` at `points`; `out[c][p]`.
    fn velocity(&self, k: usize, points: &[f64], out: &mut [Vec<f64>]);
    /// `∇ᵀu(t_k)` at `points`; `out[i*d + j][p] = ∂_i u_j`.
    fn gradient(&self, k: usize, points: &[f64], out: &mut [Vec<f64>]);
}

/// [`Drift`] backed by nodal slices.
pub struct HistoryDrift<'a> {
    history: &'a VelocityHistory,
    kind: Interpolation,
}

impl<'a> HistoryDrift<'a> {
    pub fn new(history: &'a VelocityHistory, kind: Interpolation) -> Self {
        Self { history, kind }
    }
}

impl Drift for HistoryDrift<'_> {
    fn grid(&self) -> &TorusGrid {
        self.history.grid()
    }
    fn dt(&self) -> f64 {
        self.history.dt()
    }
    fn steps(&self) -> usize {
        self.history.steps()
    }
    fn velocity(&self, k: usize, points: &[f64], out: &mut [Vec<f64>]) {
        Interpolator::new(self.history.slice(k), self.kind).eval(points, out);
    }
    fn gradient(&self, k: usize, points: &[f64], out: &mut [Vec<f64>]) {
        let grad = spectral_gradient(self.history.slice(k)).expect("vector slice");
        Interpolator::new(&grad, self.kind).eval(points, out);
    }
}

/// Displacement slices along one sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub path_index: Option<u32>,
    pub times: Vec<f64>,
    pub lambda_slices: Vec<DisplacementMap>,
    pub grad_x_slices: Option<Vec<TensorField>>,
}

impl FlowTrajectory {
    pub fn snapshots(&self) -> Vec<Snapshot> {
        self.lambda_slices
            .iter()
            .zip(&self.times)
            .map(|(l, &t)| Snapshot {
                field: l.disp().clone(),
                time: t,
                path_index: self.path_index,
            })
            .collect()
    }

    pub fn from_snapshots(snaps: Vec<Snapshot>) -> Result<Self> {
        let path_index = snaps.first().and_then(|s| s.path_index);
        let mut times = Vec::with_capacity(snaps.len());
        let mut lambda_slices = Vec::with_capacity(snaps.len());
        for s in snaps {
            times.push(s.time);
            lambda_slices.push(DisplacementMap::new(s.field)?);
        }
        Ok(Self { path_index, times, lambda_slices, grad_x_slices: None })
    }

    /// `sup_t sup_x ‖∇λ(t)‖`.
    pub fn max_gradient_norm(&self) -> f64 {
        self.lambda_slices.iter().map(|l| l.gradient_norm()).fold(0.0, f64::max)
    }
}

/// Heun integrator for node-labelled characteristics, advanced one step
/// at a time so callers can consume slices without storing them.
pub struct FlowStepper<'a, D: Drift> {
    drift: &'a D,
    driver: &'a BrownianDriver,
    sigma: f64,
    labels: Vec<f64>,
    x: Vec<f64>,
    pred: Vec<f64>,
    u0: Vec<Vec<f64>>,
    u1: Vec<Vec<f64>>,
    step: usize,
}

impl<'a, D: Drift> FlowStepper<'a, D> {
    pub fn new(drift: &'a D, nu: f64, driver: &'a BrownianDriver) -> Result<Self> {
        if nu < 0.0 {
            return Err(Error::InvalidParameter { name: "nu", reason: format!("{nu} < 0") });
        }
        if driver.steps() < drift.steps() {
            return Err(Error::InvalidParameter {
                name: "driver",
                reason: format!("{} increments for {} steps", driver.steps(), drift.steps()),
            });
        }
        if (driver.dt - drift.dt()).abs() > 1e-12 * drift.dt() {
            return Err(Error::InvalidParameter {
                name: "driver.dt",
                reason: format!("{} differs from drift dt {}", driver.dt, drift.dt()),
            });
        }
        let labels = drift.grid().positions();
        let d = drift.grid().dim();
        Ok(Self {
            drift,
            driver,
            sigma: (2.0 * nu).sqrt(),
            x: labels.clone(),
            pred: labels.clone(),
            labels,
            u0: vec![Vec::new(); d],
            u1: vec![Vec::new(); d],
            step: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn done(&self) -> bool {
        self.step >= self.drift.steps()
    }

    /// Current positions, unwrapped, `dim` per node.
    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn advance(&mut self) -> Result<()> {
        let k = self.step;
        let d = self.drift.grid().dim();
        let dt = self.drift.dt();
        let db = self.driver.increment(k);
        self.drift.velocity(k, &self.x, &mut self.u0);
        for p in 0..self.x.len() / d {
            for c in 0..d {
                self.pred[p * d + c] = self.x[p * d + c] + dt * self.u0[c][p] + self.sigma * db[c];
            }
        }
        self.drift.velocity(k + 1, &self.pred, &mut self.u1);
        for p in 0..self.x.len() / d {
            for c in 0..d {
                let v = self.x[p * d + c]
                    + 0.5 * dt * (self.u0[c][p] + self.u1[c][p])
                    + self.sigma * db[c];
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "drift evaluation at step {k}, node {p}"
                    )));
                }
                self.x[p * d + c] = v;
            }
        }
        self.step += 1;
        Ok(())
    }

    /// `λ = X − a` at the current step.
    pub fn displacement(&self) -> DisplacementMap {
        let grid = *self.drift.grid();
        let d = grid.dim();
        let nodes = grid.nodes();
        let comps = (0..d)
            .map(|c| (0..nodes).map(|p| self.x[p * d + c] - self.labels[p * d + c]).collect())
            .collect();
        DisplacementMap { disp: Field::vector(grid, comps).expect("shape") }
    }
}

/// Integrates every node's characteristic over the drift's time grid.
pub fn integrate_flow<D: Drift>(u: &D, nu: f64, driver: &BrownianDriver) -> Result<FlowTrajectory> {
    let mut stepper = FlowStepper::new(u, nu, driver)?;
    let dt = u.dt();
    let mut lambda_slices = vec![DisplacementMap::zero(*u.grid())];
    while !stepper.done() {
        stepper.advance()?;
        lambda_slices.push(stepper.displacement());
    }
    Ok(FlowTrajectory {
        path_index: Some(driver.path_index),
        times: (0..lambda_slices.len()).map(|k| k as f64 * dt).collect(),
        lambda_slices,
        grad_x_slices: None,
    })
}

/// `∇X` along each stored characteristic from `d/dt ∇X = (∇u)∘X · ∇X`,
/// Heun-stepped with the stored endpoint positions. Stored as `∇ᵀX`
/// (entry `(i, j)` = `∂_i X_j`), matching [`spectral_gradient`], so
/// `grad_x − I` compares directly with the spectral gradient of `λ`.
pub fn integrate_gradient<D: Drift>(u: &D, traj: &FlowTrajectory) -> Result<Vec<TensorField>> {
    let grid = *u.grid();
    let d = grid.dim();
    let nodes = grid.nodes();
    let dt = u.dt();
    let steps = traj.lambda_slices.len() - 1;
    if steps > u.steps() {
        return Err(Error::Shape("trajectory longer than drift".into()));
    }
    let mut g: Vec<Mat> = vec![linalg::identity(d); nodes];
    let mut out = vec![to_field(grid, &g)];
    let mut ga = vec![Vec::new(); d * d];
    let mut gb = vec![Vec::new(); d * d];
    let mut xa = traj.lambda_slices[0].positions();
    for k in 0..steps {
        let xb = traj.lambda_slices[k + 1].positions();
        u.gradient(k, &xa, &mut ga);
        u.gradient(k + 1, &xb, &mut gb);
        for (p, gp) in g.iter_mut().enumerate() {
            let ua = node_mat(&ga, p, d);
            let ub = node_mat(&gb, p, d);
            let ka = linalg::matmul(gp, &ua, d);
            let mut pred = *gp;
            for i in 0..d {
                for j in 0..d {
                    pred[i][j] += dt * ka[i][j];
                }
            }
            let kb = linalg::matmul(&pred, &ub, d);
            for i in 0..d {
                for j in 0..d {
                    gp[i][j] += 0.5 * dt * (ka[i][j] + kb[i][j]);
                }
            }
        }
        out.push(to_field(grid, &g));
        xa = xb;
    }
    Ok(out)
}

fn node_mat(comps: &[Vec<f64>], p: usize, d: usize) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            m[i][j] = comps[i * d + j][p];
        }
    }
    m
}

fn to_field(grid: TorusGrid, mats: &[Mat]) -> TensorField {
    let d = grid.dim();
    let comps = (0..d * d)
        .map(|c| mats.iter().map(|m| m[c / d][c % d]).collect())
        .collect();
    Field::from_components(grid, 2, comps).expect("shape")
}

/// `ℓ` with `A = I + ℓ = (I + λ)⁻¹`, using cubic interpolation of `λ`.
pub fn invert_map(lambda: &DisplacementMap) -> Result<DisplacementMap> {
    invert_map_with(lambda, Interpolation::Lagrange, 0.0)
}

/// Fixed-point inversion `ℓ_{m+1}(x) = −λ(x + ℓ_m(x))` from `ℓ_0 = −λ`.
/// `time` is only used in error reports.
pub fn invert_map_with(lambda: &DisplacementMap, kind: Interpolation, time: f64) -> Result<DisplacementMap> {
    invert_certified(lambda, lambda.gradient_norm(), kind, time)
}

/// As [`invert_map_with`] with `‖∇λ‖∞ = gn` already measured.
pub(crate) fn invert_certified(
    lambda: &DisplacementMap,
    gn: f64,
    kind: Interpolation,
    time: f64,
) -> Result<DisplacementMap> {
    if !(gn <= INVERT_LIMIT) {
        return Err(Error::NotInvertible { grad_norm: gn, limit: INVERT_LIMIT, time });
    }
    let grid = *lambda.grid();
    let d = grid.dim();
    let nodes = grid.nodes();
    let interp = Interpolator::new(lambda.disp(), kind);
    let base = grid.positions();
    let mut ell: Vec<Vec<f64>> = lambda.disp().components().iter().map(|c| c.iter().map(|v| -v).collect()).collect();
    let mut pts = base.clone();
    let mut vals = vec![Vec::new(); d];
    let tol = INVERT_TOL * grid.length();
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..INVERT_MAX_ITER {
        fill_points(&base, &ell, d, &mut pts);
        interp.eval(&pts, &mut vals);
        let mut change = 0.0f64;
        for c in 0..d {
            for p in 0..nodes {
                let next = -vals[c][p];
                change = change.max((next - ell[c][p]).abs());
                ell[c][p] = next;
            }
        }
        history.push(change / grid.length());
        if change <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: INVERT_MAX_ITER,
            last_residual: *history.last().unwrap_or(&f64::NAN),
            residuals: history,
        });
    }
    // X(A(x)) − x = ℓ(x) + λ(x + ℓ(x))
    fill_points(&base, &ell, d, &mut pts);
    interp.eval(&pts, &mut vals);
    let mut resid = 0.0f64;
    for c in 0..d {
        for p in 0..nodes {
            resid = resid.max((ell[c][p] + vals[c][p]).abs());
        }
    }
    if !(resid <= COMPOSITION_TOL * grid.length()) {
        return Err(Error::NoConvergence {
            iterations: history.len(),
            last_residual: resid / grid.length(),
            residuals: history,
        });
    }
    DisplacementMap::new(Field::vector(grid, ell)?)
}

/// Points `a` with `a + λ(a) = y` for arbitrary targets `y` (interleaved
/// coordinates), by the same fixed-point iteration as [`invert_map_with`].
/// This evaluates the inverse map off the grid without interpolating its
/// nodal values, which are not band-limited.
pub fn preimages(lambda: &DisplacementMap, targets: &[f64], kind: Interpolation) -> Result<Vec<f64>> {
    let gn = lambda.gradient_norm();
    if !(gn <= INVERT_LIMIT) {
        return Err(Error::NotInvertible { grad_norm: gn, limit: INVERT_LIMIT, time: 0.0 });
    }
    let grid = *lambda.grid();
    let d = grid.dim();
    let m = targets.len() / d;
    let interp = Interpolator::new(lambda.disp(), kind);
    let mut a = targets.to_vec();
    let mut vals = vec![Vec::new(); d];
    let tol = INVERT_TOL * grid.length();
    for _ in 0..INVERT_MAX_ITER {
        interp.eval(&a, &mut vals);
        let mut change = 0.0f64;
        for p in 0..m {
            for c in 0..d {
                let next = targets[p * d + c] - vals[c][p];
                change = change.max((next - a[p * d + c]).abs());
                a[p * d + c] = next;
            }
        }
        if change <= tol {
            return Ok(a);
        }
    }
    Err(Error::NoConvergence { iterations: INVERT_MAX_ITER, last_residual: f64::NAN, residuals: Vec::new() })
}

/// `sup_x |A(X(x)) − x|` with `A` evaluated by [`preimages`].
pub fn inverse_after_forward_residual(lambda: &DisplacementMap, kind: Interpolation) -> Result<f64> {
    let grid = *lambda.grid();
    let a = preimages(lambda, &lambda.positions(), kind)?;
    Ok(a.iter().zip(&grid.positions()).map(|(p, q)| grid.periodic_delta(*q, *p).abs()).fold(0.0, f64::max))
}

fn fill_points(base: &[f64], disp: &[Vec<f64>], d: usize, out: &mut [f64]) {
    for p in 0..base.len() / d {
        for c in 0..d {
            out[p * d + c] = base[p * d + c] + disp[c][p];
        }
    }
}

/// `sup_x |(m₁ ∘ m₂)(x) − x|` for two displacement maps, i.e. the size of
/// `d₂(x) + d₁(x + d₂(x))`.
pub fn composition_residual(outer: &DisplacementMap, inner: &DisplacementMap, kind: Interpolation) -> f64 {
    let grid = *inner.grid();
    let d = grid.dim();
    let pts = inner.positions();
    let vals = Interpolator::new(outer.disp(), kind).eval_vec(&pts);
    let mut r = 0.0f64;
    for c in 0..d {
        for (p, v) in vals[c].iter().enumerate() {
            r = r.max((inner.disp().comp(c)[p] + v).abs());
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn still(grid: TorusGrid, dt: f64, steps: usize, c: &[f64]) -> VelocityHistory {
        VelocityHistory::constant(&Field::constant_vector(grid, c), 0.0, dt, steps).unwrap()
    }

    #[test]
    fn zero_drift_no_noise() {
        let g = TorusGrid::square(16).unwrap();
        let h = still(g, 0.1, 5, &[0.0, 0.0]);
        let drv = BrownianDriver::new(1, 0, 0.1, 5, 2);
        let tr = integrate_flow(&HistoryDrift::new(&h, Interpolation::Lagrange), 0.0, &drv).unwrap();
        assert_eq!(tr.lambda_slices.len(), 6);
        assert!(tr.lambda_slices.iter().all(|l| l.disp().max_abs() == 0.0));
    }

    #[test]
    fn pure_noise_is_uniform() {
        let g = TorusGrid::square(16).unwrap();
        let h = still(g, 0.05, 8, &[0.0, 0.0]);
        let drv = BrownianDriver::new(7, 3, 0.05, 8, 2);
        let nu = 0.2;
        let tr = integrate_flow(&HistoryDrift::new(&h, Interpolation::Lagrange), nu, &drv).unwrap();
        let b = drv.position(8);
        let s = (2.0 * nu).sqrt();
        for c in 0..2 {
            for v in tr.lambda_slices[8].disp().comp(c) {
                assert!((v - s * b[c]).abs() < 1e-13);
            }
        }
        assert!(tr.lambda_slices[8].gradient_norm() < 1e-12);
    }

    #[test]
    fn constant_drift() {
        let g = TorusGrid::new(2, 16, 1.0).unwrap();
        let h = still(g, 0.01, 20, &[0.3, -0.7]);
        let drv = BrownianDriver::silent(0.01, 20, 2);
        let tr = integrate_flow(&HistoryDrift::new(&h, Interpolation::Lagrange), 0.0, &drv).unwrap();
        let l = tr.lambda_slices[20].disp();
        assert!(l.comp(0).iter().all(|v| (v - 0.3 * 0.2).abs() < 1e-12));
        assert!(l.comp(1).iter().all(|v| (v + 0.7 * 0.2).abs() < 1e-12));
    }

    #[test]
    fn drivers_are_reproducible_and_extend() {
        let a = BrownianDriver::new(11, 4, 0.01, 10, 3);
        let b = BrownianDriver::new(11, 4, 0.01, 20, 3);
        let c = BrownianDriver::new(11, 5, 0.01, 10, 3);
        assert_eq!(a.increments[..], b.increments[..10]);
        assert_ne!(a.increments, c.increments);
        assert_eq!(b.window(10, 5).increment(0), b.increment(10));
    }

    #[test]
    fn uniform_shift_inverts_to_negative() {
        let g = TorusGrid::square(16).unwrap();
        let lam = DisplacementMap::uniform(g, &[0.37, -1.2]);
        let ell = invert_map(&lam).unwrap();
        assert!(ell.disp().comp(0).iter().all(|v| (v + 0.37).abs() < 1e-14));
        assert!(ell.disp().comp(1).iter().all(|v| (v - 1.2).abs() < 1e-14));
        assert_eq!(invert_map(&DisplacementMap::zero(g)).unwrap().disp().max_abs(), 0.0);
    }

    #[test]
    fn steep_map_is_rejected() {
        let g = TorusGrid::new(2, 16, 1.0).unwrap();
        let lam = DisplacementMap::new(Field::from_fn(g, 1, |x, o| {
            o[0] = 0.2 * (TAU * x[1]).sin();
            o[1] = 0.0;
        }))
        .unwrap();
        assert!(matches!(invert_map(&lam), Err(Error::NotInvertible { .. })));
    }

    #[test]
    fn gradient_of_still_flow_is_identity() {
        let g = TorusGrid::square(8).unwrap();
        let h = still(g, 0.1, 3, &[0.0, 0.0]);
        let dr = HistoryDrift::new(&h, Interpolation::Lagrange);
        let tr = integrate_flow(&dr, 0.0, &BrownianDriver::silent(0.1, 3, 2)).unwrap();
        let gx = integrate_gradient(&dr, &tr).unwrap();
        let id = Field::from_fn(g, 2, |_, o| {
            o.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        });
        assert_eq!(gx[3], id);
    }
}
