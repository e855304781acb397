//! Picard iteration `u ↦ E W(u₀∘A_u, ℓ_u)` over frozen Brownian paths.
//!
//! Paths are processed in fixed chunks of [`CHUNK`] in parallel; each
//! chunk is reduced in path order with compensated sums and chunks are
//! combined in chunk order, so results do not depend on the worker count.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flowmap::{invert_certified, BrownianDriver, DisplacementMap, Drift, FlowStepper, FlowTrajectory, HistoryDrift};
use crate::grid::{Field, VectorField};
use crate::history::VelocityHistory;
use crate::interp::{Interpolation, Interpolator};
use crate::spectral::{divergence, leray_project, spectral_gradient};
use crate::weber::weber_with_gradient;

pub const CHUNK: usize = 32;
/// Fraction of failed paths tolerated before a Picard step is abandoned.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub samples: usize,
    pub seed: u64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub remap_threshold: f64,
    pub interp: Interpolation,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            nu: 0.0,
            dt: 0.01,
            t_final: 0.1,
            samples: 64,
            seed: 0,
            picard_tol: 1e-8,
            picard_max: 40,
            remap_threshold: 0.4,
            interp: Interpolation::Lagrange,
        }
    }
}

impl StochasticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad("nu", format!("{} must be ≥ 0", self.nu));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_final) {
            return bad("dt", format!("need 0 < dt = {} ≤ t_final = {}", self.dt, self.t_final));
        }
        if self.samples == 0 {
            return bad("samples", "must be ≥ 1".into());
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol", format!("{} must be positive", self.picard_tol));
        }
        if self.picard_max == 0 {
            return bad("picard_max", "must be ≥ 1".into());
        }
        if !(self.remap_threshold > 0.0 && self.remap_threshold < 0.5) {
            return bad("remap_threshold", format!("{} not in (0, 1/2)", self.remap_threshold));
        }
        Ok(())
    }

    /// Number of time steps, `t_final / dt` rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }
}

/// Per-path integrand statistics gathered during a Picard step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathStats {
    /// `sup ‖∇ℓ‖∞` seen on any path and slice.
    pub max_grad_ell: f64,
    /// `sup ‖∇λ‖∞`.
    pub max_grad_lambda: f64,
    /// `sup_t sup|∇λ(t)| / (e^{t·sup|∇u|} − 1)` over paths and slices.
    pub gronwall_ratio: f64,
    pub failed_paths: usize,
}

impl PathStats {
    fn merge(&mut self, o: &PathStats) {
        self.max_grad_ell = self.max_grad_ell.max(o.max_grad_ell);
        self.max_grad_lambda = self.max_grad_lambda.max(o.max_grad_lambda);
        self.gronwall_ratio = self.gronwall_ratio.max(o.gronwall_ratio);
        self.failed_paths += o.failed_paths;
    }
}

/// Neumaier-compensated running sums of values and squares.
#[derive(Clone, Default)]
struct Accum {
    sum: Vec<f64>,
    sum_c: Vec<f64>,
    sq: Vec<f64>,
    sq_c: Vec<f64>,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl Accum {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], sum_c: vec![0.0; len], sq: vec![0.0; len], sq_c: vec![0.0; len] }
    }

    fn add(&mut self, offset: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            let j = offset + i;
            neumaier(&mut self.sum[j], &mut self.sum_c[j], v);
            neumaier(&mut self.sq[j], &mut self.sq_c[j], v * v);
        }
    }

    fn merge(&mut self, o: &Accum) {
        for j in 0..self.sum.len() {
            neumaier(&mut self.sum[j], &mut self.sum_c[j], o.sum[j]);
            neumaier(&mut self.sum[j], &mut self.sum_c[j], o.sum_c[j]);
            neumaier(&mut self.sq[j], &mut self.sq_c[j], o.sq[j]);
            neumaier(&mut self.sq[j], &mut self.sq_c[j], o.sq_c[j]);
        }
    }

    fn total(&self, j: usize) -> f64 {
        self.sum[j] + self.sum_c[j]
    }

    fn total_sq(&self, j: usize) -> f64 {
        self.sq[j] + self.sq_c[j]
    }
}

/// Result of one application of the Picard map.
#[derive(Debug, Clone)]
pub struct PicardOutput {
    pub history: VelocityHistory,
    /// Monte-Carlo standard error of each slice, RMS over nodes.
    pub mc_sigma: Vec<f64>,
    pub stats: PathStats,
    pub paths_used: usize,
}

/// One slice of the single-path integrand: `W(u₀∘A, ℓ)` with `ℓ` the
/// inverse displacement of `λ`. Returns `(W, ‖∇ℓ‖∞, ‖∇λ‖∞)`, the `∇ℓ`
/// norm measured on the dealiased gradient used inside `W`.
pub fn integrand_slice(
    u0: &Interpolator<'_>,
    lambda: &DisplacementMap,
    kind: Interpolation,
    time: f64,
) -> Result<(VectorField, f64, f64)> {
    let glam = lambda.gradient_norm();
    let ell = invert_certified(lambda, glam, kind, time)?;
    let grid = *lambda.grid();
    let pulled = u0.eval_vec(&ell.positions());
    let pulled = Field::vector(grid, pulled)?;
    let (w, grad) = weber_with_gradient(&pulled, ell.disp())?;
    Ok((w, grad.sup_operator_norm(), glam))
}

/// `W(u₀∘A, ℓ)` for every stored slice of one trajectory.
pub fn reconstruct_velocity(u0: &VectorField, traj: &FlowTrajectory, kind: Interpolation) -> Result<Vec<VectorField>> {
    let interp = Interpolator::new(u0, kind);
    traj.lambda_slices
        .iter()
        .zip(&traj.times)
        .map(|(l, &t)| integrand_slice(&interp, l, kind, t).map(|r| r.0))
        .collect()
}

enum PathOutcome {
    Done(PathStats),
    Failed(Error),
}

/// Runs one path and accumulates its slices `1..=K`.
#[allow(clippy::too_many_arguments)]
fn run_path(
    drift: &HistoryDrift<'_>,
    u0: &Interpolator<'_>,
    cfg: &StochasticConfig,
    path: u32,
    offset: usize,
    t0: f64,
    grad_u: f64,
    acc: &mut Accum,
) -> PathOutcome {
    let steps = drift.steps();
    let grid = *drift.grid();
    let d = grid.dim();
    let nodes = grid.nodes();
    let driver = BrownianDriver::new(cfg.seed, path, cfg.dt, offset + steps, d).window(offset, steps);
    let mut stepper = match FlowStepper::new(drift, cfg.nu, &driver) {
        Ok(s) => s,
        Err(e) => return PathOutcome::Failed(e),
    };
    // results are staged so a failed path leaves no trace in `acc`
    let mut staged: Vec<VectorField> = Vec::with_capacity(steps);
    let mut stats = PathStats::default();
    for k in 1..=steps {
        if let Err(e) = stepper.advance() {
            return PathOutcome::Failed(e);
        }
        let t = t0 + k as f64 * cfg.dt;
        let lambda = stepper.displacement();
        let (w, gell, glam) = match integrand_slice(u0, &lambda, cfg.interp, t) {
            Ok(r) => r,
            Err(e) => return PathOutcome::Failed(e),
        };
        if gell > cfg.remap_threshold {
            return PathOutcome::Failed(Error::RemapRequired {
                time: t,
                step: offset + k,
                grad_norm: gell,
                threshold: cfg.remap_threshold,
            });
        }
        stats.max_grad_ell = stats.max_grad_ell.max(gell);
        stats.max_grad_lambda = stats.max_grad_lambda.max(glam);
        let bound = (k as f64 * cfg.dt * grad_u).exp_m1();
        if bound > 0.0 {
            stats.gronwall_ratio = stats.gronwall_ratio.max(glam / bound);
        }
        staged.push(w);
    }
    for (k, w) in staged.iter().enumerate() {
        for c in 0..d {
            acc.add(((k + 1) * d + c) * nodes, w.comp(c));
        }
    }
    PathOutcome::Done(stats)
}

/// Applies the Picard map once. Slice 0 of `u` is taken as `u₀`.
pub fn picard_step(u: &VelocityHistory, cfg: &StochasticConfig) -> Result<PicardOutput> {
    picard_step_at(u, cfg, 0)
}

/// As [`picard_step`] with Brownian increments starting at global step
/// `offset` (time windows continue each path).
pub fn picard_step_at(u: &VelocityHistory, cfg: &StochasticConfig, offset: usize) -> Result<PicardOutput> {
    cfg.validate()?;
    if (u.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::InvalidParameter { name: "dt", reason: "history and config disagree".into() });
    }
    let grid = *u.grid();
    let d = grid.dim();
    let nodes = grid.nodes();
    let steps = u.steps();
    let u0 = u.slice(0);
    let drift = HistoryDrift::new(u, cfg.interp);
    let u0i = Interpolator::new(u0, cfg.interp);
    let grad_u = u
        .slices()
        .iter()
        .map(|s| spectral_gradient(s).map(|g| g.sup_operator_norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let len = (steps + 1) * d * nodes;
    let chunks: Vec<usize> = (0..cfg.samples.div_ceil(CHUNK)).collect();
    let results: Vec<ChunkResult> = chunks
        .par_iter()
        .map(|&ci| {
            let mut r = ChunkResult { acc: Accum::new(len), ..Default::default() };
            let lo = ci * CHUNK;
            let hi = (lo + CHUNK).min(cfg.samples);
            for m in lo..hi {
                match run_path(&drift, &u0i, cfg, m as u32, offset, u.t0(), grad_u, &mut r.acc) {
                    PathOutcome::Done(s) => {
                        r.stats.merge(&s);
                        r.used += 1;
                    }
                    PathOutcome::Failed(e) => {
                        r.stats.failed_paths += 1;
                        r.note(m as u32, e);
                    }
                }
            }
            r
        })
        .collect();

    let mut total = Accum::new(len);
    let mut stats = PathStats::default();
    let mut used = 0;
    let mut remap: Option<Error> = None;
    let mut first_failure: Option<(u32, Error)> = None;
    for r in results {
        total.merge(&r.acc);
        stats.merge(&r.stats);
        used += r.used;
        if let Some(e) = r.remap {
            if remap_step(&e) < remap.as_ref().map_or(usize::MAX, remap_step) {
                remap = Some(e);
            }
        }
        if first_failure.is_none() {
            first_failure = r.other;
        }
    }
    if let Some(e) = remap {
        return Err(e);
    }
    let failed = stats.failed_paths;
    if failed > 0 && (failed as f64 > MAX_FAILED_FRACTION * cfg.samples as f64 || used == 0) {
        let (m, e) = first_failure.expect("failure recorded");
        return Err(Error::PathFailures { failed, total: cfg.samples, first: format!("path {m}: {e}") });
    }

    let inv = 1.0 / used as f64;
    let mut slices = Vec::with_capacity(steps + 1);
    let mut mc_sigma = vec![0.0; steps + 1];
    slices.push(u0.clone());
    for (k, sigma) in mc_sigma.iter_mut().enumerate().skip(1) {
        let mut comps = Vec::with_capacity(d);
        let mut var_sum = 0.0;
        for c in 0..d {
            let base = (k * d + c) * nodes;
            let comp: Vec<f64> = (0..nodes).map(|p| total.total(base + p) * inv).collect();
            if used > 1 {
                for p in 0..nodes {
                    let mean = comp[p];
                    let var = ((total.total_sq(base + p) * inv - mean * mean) * used as f64 / (used - 1) as f64).max(0.0);
                    var_sum += var * inv;
                }
            }
            comps.push(comp);
        }
        *sigma = (var_sum / nodes as f64).sqrt();
        slices.push(leray_project(&Field::vector(grid, comps)?)?);
    }
    Ok(PicardOutput {
        history: VelocityHistory::new(u.t0(), u.dt(), slices)?,
        mc_sigma,
        stats,
        paths_used: used,
    })
}

#[derive(Default)]
struct ChunkResult {
    acc: Accum,
    stats: PathStats,
    used: usize,
    /// Earliest remap request in the chunk.
    remap: Option<Error>,
    /// First other failure.
    other: Option<(u32, Error)>,
}

impl ChunkResult {
    fn note(&mut self, path: u32, e: Error) {
        if matches!(e, Error::RemapRequired { .. }) {
            if remap_step(&e) < self.remap.as_ref().map_or(usize::MAX, remap_step) {
                self.remap = Some(e);
            }
        } else if self.other.is_none() {
            self.other = Some((path, e));
        }
    }
}

fn remap_step(e: &Error) -> usize {
    match e {
        Error::RemapRequired { step, .. } => *step,
        _ => usize::MAX,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual_c0: f64,
    pub residual_c1: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// MC standard error per slice at the last iterate.
    pub mc_sigma: Vec<f64>,
    pub stats: PathStats,
    /// `(t_start, t_end)` of each time window.
    pub windows: Vec<(f64, f64)>,
}

pub const REPORT_SCHEMA: &str = "iter,residual_c0,residual_c1,wall_time_s";

impl ConvergenceReport {
    pub fn residuals(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.residual_c0).collect()
    }

    /// Ratios `res_{n+1} / res_n`.
    pub fn ratios(&self) -> Vec<f64> {
        let r = self.residuals();
        r.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect()
    }

    /// CSV rows; wall times are written as zero unless `timing` is set so
    /// that repeated runs produce identical files.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = format!("{REPORT_SCHEMA}\n");
        for r in &self.iterations {
            let w = if timing { r.wall_time_s } else { 0.0 };
            let _ = writeln!(s, "{},{:.12e},{:.12e},{:.6}", r.iter, r.residual_c0, r.residual_c1, w);
        }
        s
    }

    pub(crate) fn absorb(&mut self, other: ConvergenceReport) {
        let base = self.iterations.len();
        self.iterations.extend(other.iterations.into_iter().map(|mut r| {
            r.iter += base;
            r
        }));
        self.converged = other.converged;
        self.mc_sigma = other.mc_sigma;
        self.stats.merge(&other.stats);
        self.windows.extend(other.windows);
    }
}

/// Relative sup-in-time `C⁰` and `C¹` distances between iterates.
pub fn picard_residuals(new: &VelocityHistory, old: &VelocityHistory) -> Result<(f64, f64)> {
    let u0 = old.slice(0);
    let s0 = u0.sup_norm();
    let s1 = spectral_gradient(u0)?.sup_norm();
    let mut r0 = 0.0f64;
    let mut r1 = 0.0f64;
    for (a, b) in new.slices().iter().zip(old.slices()) {
        let diff = a.sub(b);
        r0 = r0.max(diff.sup_norm());
        r1 = r1.max(spectral_gradient(&diff)?.sup_norm());
    }
    Ok((if s0 > 0.0 { r0 / s0 } else { r0 }, if s1 > 0.0 { r1 / s1 } else { r1 }))
}

pub(crate) fn check_initial(u0: &VectorField) -> Result<()> {
    if u0.rank() != 1 || !u0.is_finite() {
        return Err(Error::InvalidParameter { name: "u0", reason: "finite vector field required".into() });
    }
    let div = divergence(u0)?.max_abs();
    let scale = u0.sup_norm().max(1.0) / u0.grid().length();
    if div > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidParameter { name: "u0", reason: format!("divergence {div:.3e}") });
    }
    Ok(())
}

/// Picard iteration from `u⁽⁰⁾(t) ≡ u₀` on `[0, t_final]`.
pub fn solve(u0: &VectorField, cfg: &StochasticConfig) -> Result<(VelocityHistory, ConvergenceReport)> {
    cfg.validate()?;
    check_initial(u0)?;
    solve_window(u0, cfg, 0.0, cfg.steps(), 0)
}

/// Observer called with each accepted Picard iterate.
pub type IterateHook<'a> = dyn FnMut(usize, &VelocityHistory) + 'a;

fn solve_window(
    u0: &VectorField,
    cfg: &StochasticConfig,
    t0: f64,
    steps: usize,
    offset: usize,
) -> Result<(VelocityHistory, ConvergenceReport)> {
    solve_window_hooked(u0, cfg, t0, steps, offset, &mut |_, _| {})
}

fn solve_window_hooked(
    u0: &VectorField,
    cfg: &StochasticConfig,
    t0: f64,
    steps: usize,
    offset: usize,
    hook: &mut IterateHook<'_>,
) -> Result<(VelocityHistory, ConvergenceReport)> {
    let mut u = VelocityHistory::constant(u0, t0, cfg.dt, steps)?;
    let mut report = ConvergenceReport { windows: vec![(t0, t0 + steps as f64 * cfg.dt)], ..Default::default() };
    for iter in 1..=cfg.picard_max {
        let start = Instant::now();
        let out = picard_step_at(&u, cfg, offset)?;
        let (r0, r1) = picard_residuals(&out.history, &u)?;
        report.iterations.push(IterationRecord {
            iter,
            residual_c0: r0,
            residual_c1: r1,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        report.mc_sigma = out.mc_sigma;
        report.stats.merge(&out.stats);
        u = out.history;
        hook(iter, &u);
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

/// [`solve`] with an observer for every Picard iterate.
pub fn solve_observed(
    u0: &VectorField,
    cfg: &StochasticConfig,
    hook: &mut IterateHook<'_>,
) -> Result<(VelocityHistory, ConvergenceReport)> {
    cfg.validate()?;
    check_initial(u0)?;
    solve_window_hooked(u0, cfg, 0.0, cfg.steps(), 0, hook)
}

/// `ν = 0`, single noiseless path: the Eulerian-Lagrangian Euler solver.
pub fn solve_euler(u0: &VectorField, cfg: &StochasticConfig) -> Result<(VelocityHistory, ConvergenceReport)> {
    let cfg = StochasticConfig { nu: 0.0, samples: 1, ..cfg.clone() };
    solve(u0, &cfg)
}

/// [`solve`] continued across time windows: when a path's `∇ℓ` crosses
/// the remap threshold, the window is cut ahead of the failing step and
/// the next window restarts from the last slice as fresh initial data.
pub fn solve_windowed(u0: &VectorField, cfg: &StochasticConfig) -> Result<(VelocityHistory, ConvergenceReport)> {
    cfg.validate()?;
    check_initial(u0)?;
    let total = cfg.steps();
    let mut done = 0;
    let mut start = u0.clone();
    let mut history: Option<VelocityHistory> = None;
    let mut report = ConvergenceReport::default();
    let mut window = total;
    while done < total {
        let steps = window.min(total - done);
        let t0 = done as f64 * cfg.dt;
        match solve_window(&start, cfg, t0, steps, done) {
            Ok((h, r)) => {
                start = h.last().clone();
                match history.as_mut() {
                    Some(all) => all.extend(h)?,
                    None => history = Some(h),
                }
                report.absorb(r);
                done += steps;
            }
            Err(Error::RemapRequired { step, .. }) => {
                let reached = step - done;
                if reached <= 1 {
                    return Err(Error::RemapRequired {
                        time: step as f64 * cfg.dt,
                        step,
                        grad_norm: f64::NAN,
                        threshold: cfg.remap_threshold,
                    });
                }
                // the converged iterate usually strains less than early ones
                window = (reached - 1).max(1);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((history.expect("at least one window"), report))
}
