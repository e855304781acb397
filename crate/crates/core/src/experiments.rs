//! Scripted sweeps: inviscid-limit rate, Picard contraction and
//! agreement between the three solvers. Every experiment is a pure
//! function of its [`ExperimentSpec`] and writes plain CSV.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::diagnostics::{field_errors, fit_rate, RateFit};
use crate::diffusive::{solve_diffusive, DiffusiveConfig};
use crate::error::{Error, Result};
use crate::flowmap::{integrate_flow, BrownianDriver, HistoryDrift};
use crate::grid::{Field, VectorField};
use crate::history::VelocityHistory;
use crate::reference::{reference_solve, ReferenceConfig};
use crate::stochastic::{solve, solve_euler, StochasticConfig};

pub const INVISCID_SCHEMA: &str = "nu,t,err_l2,err_c0,mc_sigma,exponent_fit,r2";
pub const CONTRACTION_SCHEMA: &str = "t_final,iter,residual_c0,residual_c1,ratio";
pub const EQUIVALENCE_SCHEMA: &str = "pair,t,err_l2,err_c0,err_rms,mc_sigma";
pub const SAMPLES_SCHEMA: &str = "samples,batches,t,err_l2,err_rms,mc_sigma,exponent_fit,r2";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Nu,
    Samples,
    Dt,
    N,
}

impl FromStr for SweepVar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nu" => Ok(Self::Nu),
            "samples" => Ok(Self::Samples),
            "dt" => Ok(Self::Dt),
            "n" => Ok(Self::N),
            _ => Err(Error::Config(format!("unknown sweep variable {s:?}"))),
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nu => "nu",
            Self::Samples => "samples",
            Self::Dt => "dt",
            Self::N => "n",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub u0: VectorField,
    pub base: StochasticConfig,
    pub sweep: SweepVar,
    /// Sorted sweep values. Viscosity sweeps may include 0.
    pub values: Vec<f64>,
    /// Observation times (inviscid limit) or horizons (contraction).
    pub times: Vec<f64>,
    /// Viscosity of the time sweep in the inviscid-limit experiment.
    pub t_nu: f64,
    /// Step of the deterministic solvers in the equivalence experiment.
    pub fine_dt: f64,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(name: &str, u0: VectorField, base: StochasticConfig, sweep: SweepVar, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            u0,
            base,
            sweep,
            values,
            times: Vec::new(),
            t_nu: 1e-3,
            fine_dt: 1e-3,
            output: None,
        }
    }

    /// Defaults of the viscosity sweep.
    pub fn inviscid_limit(u0: VectorField, base: StochasticConfig) -> Self {
        let mut s = Self::new("inviscid-limit", u0, base, SweepVar::Nu, vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2]);
        s.times = vec![0.05, 0.1, 0.15, 0.2, 0.25];
        s
    }

    pub fn contraction(u0: VectorField, base: StochasticConfig) -> Self {
        let mut s = Self::new("contraction", u0, base, SweepVar::Nu, vec![0.0, 1e-3, 1e-2, 1e-1]);
        s.times = vec![0.05, 0.1, 0.2];
        s
    }

    pub fn equivalence(u0: VectorField, base: StochasticConfig) -> Self {
        Self::new("equivalence", u0, base, SweepVar::Samples, Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep == SweepVar::N {
            return Err(Error::Unsupported("grid sweeps need initial data per resolution".into()));
        }
        let floor = if self.sweep == SweepVar::Nu { 0.0 } else { f64::MIN_POSITIVE };
        if self.values.iter().any(|v| !(v.is_finite() && *v >= floor)) {
            return Err(Error::InvalidParameter {
                name: "sweep",
                reason: format!("{} values must be positive", self.sweep),
            });
        }
        for (name, list) in [("sweep", &self.values), ("times", &self.times)] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter { name, reason: "values must be strictly increasing".into() });
            }
        }
        if self.times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidParameter { name: "times", reason: "must be positive".into() });
        }
        self.base.validate()
    }

    fn at(&self, value: f64) -> StochasticConfig {
        let mut c = self.base.clone();
        match self.sweep {
            SweepVar::Nu => c.nu = value,
            SweepVar::Samples => c.samples = value as usize,
            SweepVar::Dt => c.dt = value,
            SweepVar::N => {}
        }
        c
    }

    fn write(&self, csv: &str) -> Result<()> {
        if let Some(path) = &self.output {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, csv)?;
        }
        Ok(())
    }
}

fn header(schema: &str, name: &str) -> String {
    format!("# stochflow {name} v1\n{schema}\n")
}

/// Root-mean-square pointwise distance `sqrt(mean_x |a − b|²)`.
pub fn rms_distance(a: &Field, b: &Field) -> f64 {
    let n = a.grid().nodes() as f64;
    let s: f64 = a
        .components()
        .iter()
        .zip(b.components())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)))
        .sum();
    (s / n).sqrt()
}

fn fit_or_degenerate(xs: &[f64], ys: &[f64]) -> Option<RateFit> {
    fit_rate(xs, ys).ok()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InviscidRow {
    pub nu: f64,
    pub t: f64,
    pub err_l2: f64,
    pub err_c0: f64,
    pub mc_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InviscidLimitResult {
    pub nu_rows: Vec<InviscidRow>,
    pub t_rows: Vec<InviscidRow>,
    pub nu_fit: Option<RateFit>,
    pub t_fit: Option<RateFit>,
    /// Mean over paths of the RMS distance between the viscous and the
    /// inviscid characteristics at the final time, per viscosity.
    pub pathwise: Vec<(f64, f64)>,
    pub pathwise_fit: Option<RateFit>,
    /// Set when every error vanishes and no exponent can be fitted.
    pub degenerate: bool,
    /// Largest `sup|∇λ(t)| / (e^{t·sup|∇u|} − 1)` over every path integrated.
    pub gronwall: f64,
    pub failures: Vec<(f64, String)>,
}

impl InviscidLimitResult {
    pub fn to_csv(&self) -> String {
        let mut s = header(INVISCID_SCHEMA, "inviscid-limit");
        for (rows, fit) in [(&self.nu_rows, &self.nu_fit), (&self.t_rows, &self.t_fit)] {
            let (e, r2) = fit.map_or((f64::NAN, f64::NAN), |f| (f.exponent, f.r2));
            for r in rows {
                let _ = writeln!(
                    s,
                    "{},{},{:.12e},{:.12e},{:.12e},{:.6},{:.6}",
                    r.nu, r.t, r.err_l2, r.err_c0, r.mc_sigma, e, r2
                );
            }
        }
        s
    }
}

const PATHWISE_SAMPLES: u32 = 32;

/// Errors at or below this are rounding noise and not fitted.
const DEGENERATE_ERROR: f64 = 1e-12;

fn pathwise_distance(
    viscous: &VelocityHistory,
    euler: &VelocityHistory,
    cfg: &StochasticConfig,
) -> Result<f64> {
    let d = viscous.grid().dim();
    let steps = viscous.steps();
    let silent = BrownianDriver::silent(cfg.dt, steps, d);
    let inviscid = integrate_flow(&HistoryDrift::new(euler, cfg.interp), 0.0, &silent)?;
    let last = inviscid.lambda_slices.last().expect("slices").disp().clone();
    let drift = HistoryDrift::new(viscous, cfg.interp);
    let mut sum = 0.0;
    for p in 0..PATHWISE_SAMPLES {
        let driver = BrownianDriver::new(cfg.seed, p, cfg.dt, steps, d);
        let traj = integrate_flow(&drift, cfg.nu, &driver)?;
        sum += rms_distance(traj.lambda_slices.last().expect("slices").disp(), &last);
    }
    Ok(sum / PATHWISE_SAMPLES as f64)
}

/// Viscosity sweep at the final observation time with common random
/// numbers, plus a time sweep at `t_nu`. Errors are measured against the
/// single-path inviscid solution.
pub fn inviscid_limit_experiment(spec: &ExperimentSpec) -> Result<InviscidLimitResult> {
    spec.validate()?;
    let t_end = *spec.times.last().ok_or(Error::InvalidParameter { name: "times", reason: "empty".into() })?;
    let mut base = spec.base.clone();
    base.t_final = t_end;
    let spec_t = ExperimentSpec { base, ..spec.clone() };
    let (euler, _) = solve_euler(&spec.u0, &spec_t.base)?;
    let mut nus = spec.values.clone();
    if !nus.iter().any(|v| (v - spec.t_nu).abs() <= 1e-15 * spec.t_nu) {
        nus.push(spec.t_nu);
    }
    let runs: Vec<(f64, Result<(VelocityHistory, Vec<f64>, f64)>)> = nus
        .par_iter()
        .map(|&nu| {
            let cfg = spec_t.at(nu);
            (nu, solve(&spec.u0, &cfg).map(|(h, r)| (h, r.mc_sigma, r.stats.gronwall_ratio)))
        })
        .collect();
    let mut out = InviscidLimitResult {
        nu_rows: Vec::new(),
        t_rows: Vec::new(),
        nu_fit: None,
        t_fit: None,
        pathwise: Vec::new(),
        pathwise_fit: None,
        degenerate: false,
        gronwall: 0.0,
        failures: Vec::new(),
    };
    let row = |nu: f64, h: &VelocityHistory, sigma: &[f64], t: f64| -> Result<InviscidRow> {
        let k = ((t - h.t0()) / h.dt()).round() as usize;
        let (l2, c0, _) = field_errors(euler.slice(k), h.slice(k))?;
        Ok(InviscidRow { nu, t, err_l2: l2, err_c0: c0, mc_sigma: sigma.get(k).copied().unwrap_or(f64::NAN) })
    };
    for (nu, r) in &runs {
        match r {
            Ok((h, sigma, g)) => {
                out.gronwall = out.gronwall.max(*g);
                if spec.values.contains(nu) {
                    out.nu_rows.push(row(*nu, h, sigma, t_end)?);
                    out.pathwise.push((*nu, pathwise_distance(h, &euler, &spec_t.at(*nu))?));
                }
                if (nu - spec.t_nu).abs() <= 1e-15 * spec.t_nu {
                    for &t in &spec.times {
                        out.t_rows.push(row(*nu, h, sigma, t)?);
                    }
                }
            }
            Err(e) => out.failures.push((*nu, e.to_string())),
        }
    }
    let fit = |rows: &[InviscidRow], x: fn(&InviscidRow) -> f64| {
        let xs: Vec<f64> = rows.iter().map(x).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.err_l2).collect();
        fit_or_degenerate(&xs, &ys)
    };
    out.degenerate = out.nu_rows.iter().chain(&out.t_rows).all(|r| r.err_l2 <= DEGENERATE_ERROR);
    if !out.degenerate {
        out.nu_fit = fit(&out.nu_rows, |r| r.nu);
        out.t_fit = fit(&out.t_rows, |r| r.t);
        let (px, py): (Vec<f64>, Vec<f64>) = out.pathwise.iter().cloned().unzip();
        out.pathwise_fit = fit_or_degenerate(&px, &py);
    }
    spec.write(&out.to_csv())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionResult {
    /// `(T, residuals c0, residuals c1)` per horizon.
    pub runs: Vec<(f64, Vec<f64>, Vec<f64>)>,
    /// `(ν, sup_t ‖u‖∞)` at the smallest horizon.
    pub sup_norms: Vec<(f64, f64)>,
    /// Largest `sup|∇λ(t)| / (e^{t·sup|∇u|} − 1)` over every path integrated.
    pub gronwall: f64,
    pub failures: Vec<(f64, String)>,
}

fn ratios(r: &[f64]) -> Vec<f64> {
    r.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect()
}

impl ContractionResult {
    pub fn ratios(&self, i: usize) -> Vec<f64> {
        ratios(&self.runs[i].1)
    }

    /// Largest ratio at the smallest horizon.
    pub fn max_ratio_smallest(&self) -> f64 {
        self.runs.first().map_or(f64::NAN, |_| self.ratios(0).into_iter().fold(0.0, f64::max))
    }

    /// Mean ratio per horizon, which should grow with the horizon.
    pub fn mean_ratios(&self) -> Vec<(f64, f64)> {
        (0..self.runs.len())
            .map(|i| {
                let r = self.ratios(i);
                (self.runs[i].0, r.iter().sum::<f64>() / r.len().max(1) as f64)
            })
            .collect()
    }

    /// `(max − min) / max` of the sup norms across viscosities.
    pub fn viscosity_variation(&self) -> f64 {
        let hi = self.sup_norms.iter().map(|s| s.1).fold(0.0, f64::max);
        let lo = self.sup_norms.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = header(CONTRACTION_SCHEMA, "contraction");
        for (t, r0, r1) in &self.runs {
            for (i, (a, b)) in r0.iter().zip(r1).enumerate() {
                let ratio = if i > 0 && r0[i - 1] > 0.0 { a / r0[i - 1] } else { f64::NAN };
                let _ = writeln!(s, "{t},{},{a:.12e},{b:.12e},{ratio:.6}", i + 1);
            }
        }
        s
    }
}

fn run_any(u0: &VectorField, cfg: &StochasticConfig) -> Result<(VelocityHistory, crate::stochastic::ConvergenceReport)> {
    if cfg.nu == 0.0 {
        solve_euler(u0, cfg)
    } else {
        solve(u0, cfg)
    }
}

/// Picard residuals at each horizon in `times` with the base viscosity,
/// then `sup_t ‖u‖∞` at the smallest horizon for each swept viscosity.
/// Iteration stops at the base tolerance or `picard_max`, never on
/// failure to contract; a non-converged run still reports its residuals.
pub fn contraction_experiment(spec: &ExperimentSpec) -> Result<ContractionResult> {
    spec.validate()?;
    let mut out = ContractionResult { runs: Vec::new(), sup_norms: Vec::new(), gronwall: 0.0, failures: Vec::new() };
    let horizons: Vec<_> = spec
        .times
        .par_iter()
        .map(|&t| {
            let mut cfg = spec.base.clone();
            cfg.t_final = t;
            (t, run_any(&spec.u0, &cfg))
        })
        .collect();
    for (t, r) in horizons {
        match r {
            Ok((_, rep)) => {
                out.gronwall = out.gronwall.max(rep.stats.gronwall_ratio);
                out.runs.push((t, rep.residuals(), rep.iterations.iter().map(|i| i.residual_c1).collect()))
            }
            Err(Error::NoConvergence { residuals, .. }) => out.runs.push((t, residuals, Vec::new())),
            Err(e) => out.failures.push((t, e.to_string())),
        }
    }
    let t0 = spec.times.first().copied().unwrap_or(spec.base.t_final);
    let norms: Vec<_> = spec
        .values
        .par_iter()
        .map(|&nu| {
            let mut cfg = spec.at(nu);
            cfg.t_final = t0;
            (nu, run_any(&spec.u0, &cfg).map(|(h, r)| (h.sup_norm(), r.stats.gronwall_ratio)))
        })
        .collect();
    for (nu, r) in norms {
        match r {
            Ok((s, g)) => {
                out.gronwall = out.gronwall.max(g);
                out.sup_norms.push((nu, s))
            }
            Err(e) => out.failures.push((nu, e.to_string())),
        }
    }
    spec.write(&out.to_csv())?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairError {
    pub err_l2: f64,
    pub err_c0: f64,
    /// Absolute RMS distance, comparable with the Monte-Carlo error.
    pub err_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceResult {
    pub t: f64,
    pub stochastic_reference: PairError,
    pub diffusive_reference: PairError,
    pub stochastic_diffusive: PairError,
    pub mc_sigma: f64,
    /// Largest `sup|∇λ(t)| / (e^{t·sup|∇u|} − 1)` over every path integrated.
    pub gronwall: f64,
    pub stochastic: VelocityHistory,
}

impl EquivalenceResult {
    /// Stochastic and reference agree within three standard errors, or to
    /// rounding when the sample variance vanishes.
    pub fn within_three_sigma(&self) -> bool {
        let e = self.stochastic_reference;
        e.err_rms <= 3.0 * self.mc_sigma || e.err_l2 <= 1e-12
    }

    pub fn to_csv(&self) -> String {
        let mut s = header(EQUIVALENCE_SCHEMA, "equivalence");
        for (name, p, sigma) in [
            ("stochastic-reference", &self.stochastic_reference, self.mc_sigma),
            ("diffusive-reference", &self.diffusive_reference, 0.0),
            ("stochastic-diffusive", &self.stochastic_diffusive, self.mc_sigma),
        ] {
            let _ = writeln!(
                s,
                "{name},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.t, p.err_l2, p.err_c0, p.err_rms, sigma
            );
        }
        s
    }
}

fn pair(a: &Field, b: &Field) -> Result<PairError> {
    let (l2, c0, _) = field_errors(a, b)?;
    Ok(PairError { err_l2: l2, err_c0: c0, err_rms: rms_distance(a, b) })
}

/// Stochastic, diffusive and reference solutions from the same data,
/// compared at the final time.
pub fn equivalence_experiment(spec: &ExperimentSpec) -> Result<EquivalenceResult> {
    spec.validate()?;
    let cfg = &spec.base;
    let (sto, rep) = solve(&spec.u0, cfg)?;
    let dcfg = DiffusiveConfig {
        nu: cfg.nu,
        dt: spec.fine_dt,
        t_final: cfg.t_final,
        picard_tol: cfg.picard_tol.min(1e-10),
        picard_max: cfg.picard_max,
        remap_threshold: cfg.remap_threshold,
        max_window_steps: None,
    };
    let (dif, _) = solve_diffusive(&spec.u0, &dcfg)?;
    let refh = reference_solve(&spec.u0, &ReferenceConfig::new(cfg.nu, spec.fine_dt, cfg.t_final))?;
    let (s, d, r) = (sto.last(), dif.last(), refh.last());
    let out = EquivalenceResult {
        t: sto.t_final(),
        stochastic_reference: pair(r, s)?,
        diffusive_reference: pair(r, d)?,
        stochastic_diffusive: pair(d, s)?,
        mc_sigma: rep.mc_sigma.last().copied().unwrap_or(0.0),
        gronwall: rep.stats.gronwall_ratio,
        stochastic: sto,
    };
    spec.write(&out.to_csv())?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplesRow {
    pub samples: usize,
    pub batches: usize,
    pub err_l2: f64,
    pub err_rms: f64,
    pub mc_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplesResult {
    pub t: f64,
    pub rows: Vec<SamplesRow>,
    pub fit: Option<RateFit>,
    /// Largest `sup|∇λ(t)| / (e^{t·sup|∇u|} − 1)` over every path integrated.
    pub gronwall: f64,
}

impl SamplesResult {
    pub fn to_csv(&self) -> String {
        let mut s = header(SAMPLES_SCHEMA, "samples");
        let (e, r2) = self.fit.map_or((f64::NAN, f64::NAN), |f| (f.exponent, f.r2));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.12e},{:.12e},{:.12e},{e:.6},{r2:.6}",
                r.samples, r.batches, self.t, r.err_l2, r.err_rms, r.mc_sigma
            );
        }
        s
    }
}

/// Fewest seed batches averaged per sample count.
pub const MIN_BATCHES: usize = 4;

/// Monte-Carlo error against `exact` at the final time as a function of
/// the sample count. Each count is run on `budget / M` independent seed
/// batches (at least [`MIN_BATCHES`]) and the squared errors averaged.
pub fn samples_experiment(spec: &ExperimentSpec, exact: &VectorField, budget: usize) -> Result<SamplesResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut gronwall: f64 = 0.0;
    for &m in &spec.values {
        let m = m as usize;
        let batches = (budget / m).max(MIN_BATCHES);
        let runs: Vec<Result<(f64, f64, f64, f64)>> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut cfg = spec.at(m as f64);
                cfg.seed = spec.base.seed.wrapping_add(1_000_003 * b as u64);
                let (h, rep) = solve(&spec.u0, &cfg)?;
                let (l2, _, _) = field_errors(exact, h.last())?;
                let sigma = rep.mc_sigma.last().copied().unwrap_or(0.0);
                Ok((l2, rms_distance(exact, h.last()), sigma, rep.stats.gronwall_ratio))
            })
            .collect();
        let mut acc = (0.0, 0.0, 0.0);
        for r in runs {
            let (l2, rms, sigma, g) = r?;
            gronwall = gronwall.max(g);
            acc.0 += l2 * l2;
            acc.1 += rms * rms;
            acc.2 += sigma * sigma;
        }
        let b = batches as f64;
        rows.push(SamplesRow {
            samples: m,
            batches,
            err_l2: (acc.0 / b).sqrt(),
            err_rms: (acc.1 / b).sqrt(),
            mc_sigma: (acc.2 / b).sqrt(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.samples as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.err_l2).collect();
    let out = SamplesResult { t: spec.base.t_final, rows, fit: fit_or_degenerate(&xs, &ys), gronwall };
    spec.write(&out.to_csv())?;
    Ok(out)
}
