//! Run orchestration behind the `stochflow` binary.
//!
//! All artifacts go to `out.dir`: `config.resolved`, `report.csv`,
//! `errors.csv` (when the initial data has a closed-form solution),
//! `final.snap` and, with `out.snapshots`, one `u_<step>.snap` per slice.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Init, RunConfig, Settings, SolverKind};
use crate::diagnostics::{discrete_norms, error_metrics, PairSet, DEFAULT_ALPHA};
use crate::diffusive::{solve_diffusive, DiffusiveConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    contraction_experiment, equivalence_experiment, inviscid_limit_experiment, samples_experiment, ExperimentSpec,
};
use crate::grid::{Field, TorusGrid, VectorField};
use crate::history::VelocityHistory;
use crate::reference::{reference_solve, ring_mode, shear_mode, taylor_green, ExactSolution, ReferenceConfig};
use crate::snapshot::Snapshot;
use crate::spectral::divergence;
use crate::stochastic::{solve, solve_euler, solve_windowed, ConvergenceReport, StochasticConfig};
use crate::trig::TrigSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    InviscidLimit,
    Contraction,
    Equivalence,
    Samples,
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inviscid-limit" => Ok(Self::InviscidLimit),
            "contraction" => Ok(Self::Contraction),
            "equivalence" => Ok(Self::Equivalence),
            "samples" => Ok(Self::Samples),
            _ => Err(Error::Config(format!("unknown experiment {s:?}"))),
        }
    }
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } | Error::RemapRequired { .. } | Error::BallExit { .. } => 2,
        Error::Config(_) | Error::ConfigParse { .. } => 3,
        _ => 1,
    }
}

/// Closed-form solution of the configured initial data, if any.
pub enum Exact {
    Solution(ExactSolution),
    Constant(VectorField),
}

impl Exact {
    pub fn field(&self, t: f64, nu: f64) -> VectorField {
        match self {
            Self::Solution(s) => s.field(t, nu),
            Self::Constant(c) => c.clone(),
        }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) | Error::ConfigParse { .. } => e,
        other => Error::Config(other.to_string()),
    }
}

pub fn grid_of(s: &Settings) -> Result<TorusGrid> {
    TorusGrid::new(s.dim, s.n, s.length).map_err(config_err)
}

/// Initial data and, when known, the exact solution.
pub fn initial_data(s: &Settings) -> Result<(VectorField, Option<Exact>)> {
    let grid = grid_of(s)?;
    match &s.init {
        Init::TaylorGreen { amplitude } => {
            let ex = taylor_green(grid).map_err(config_err)?.with_amplitude(*amplitude);
            Ok((ex.initial_data(), Some(Exact::Solution(ex))))
        }
        Init::Shear { k } => {
            let ex = shear_mode(grid, *k).map_err(config_err)?;
            Ok((ex.initial_data(), Some(Exact::Solution(ex))))
        }
        Init::Ring { amplitude } => {
            let ex = ring_mode(grid).map_err(config_err)?.with_amplitude(*amplitude);
            Ok((ex.initial_data(), Some(Exact::Solution(ex))))
        }
        Init::Constant { value } => {
            let mut v = vec![0.0; s.dim];
            v[0] = *value;
            let c = Field::constant_vector(grid, &v);
            Ok((c.clone(), Some(Exact::Constant(c))))
        }
        Init::RandomDivfree { kmax } => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let f = TrigSeries::random_divfree(s.dim, s.length, *kmax, &mut rng).sample_vector(grid);
            let sup = f.sup_norm();
            Ok((if sup > 0.0 { f.scale(1.0 / sup) } else { f }, None))
        }
        Init::File { path } => {
            let snap = Snapshot::load(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if !snap.field.grid().same_shape(&grid) || snap.field.rank() != 1 {
                return Err(Error::Config(format!("{} does not hold a vector field on the configured grid", path.display())));
            }
            Ok((snap.field, None))
        }
    }
}

pub fn stochastic_config(s: &Settings) -> StochasticConfig {
    StochasticConfig {
        nu: s.nu,
        dt: s.dt,
        t_final: s.t_final,
        samples: s.samples,
        seed: s.seed,
        picard_tol: s.picard_tol,
        picard_max: s.picard_max,
        remap_threshold: s.remap_threshold,
        interp: s.interp,
    }
}

/// What a run produced.
pub struct RunOutput {
    pub history: VelocityHistory,
    pub report: Option<ConvergenceReport>,
    /// Final-time relative L∞ error against the exact solution.
    pub final_error: Option<f64>,
    pub summary: String,
}

fn write_reports(s: &Settings, out: &Path, history: &VelocityHistory, report: Option<&ConvergenceReport>) -> Result<()> {
    if let Some(r) = report {
        fs::write(out.join("report.csv"), r.to_csv(s.timing))?;
    }
    Snapshot::new(history.last().clone(), history.t_final()).save(out.join("final.snap"))?;
    if s.snapshots {
        for (k, snap) in history.snapshots().into_iter().enumerate() {
            snap.save(out.join(format!("u_{k:05}.snap")))?;
        }
    }
    Ok(())
}

/// Solves with the configured solver and writes every artifact.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let s = cfg.settings()?;
    fs::create_dir_all(&s.out_dir)?;
    fs::write(s.out_dir.join("config.resolved"), cfg.resolved())?;
    let (u0, exact) = initial_data(&s)?;
    let scfg = stochastic_config(&s);
    let (history, report) = match s.kind {
        SolverKind::Stochastic if s.windowed => solve_windowed(&u0, &scfg).map(|(h, r)| (h, Some(r)))?,
        SolverKind::Stochastic => solve(&u0, &scfg).map(|(h, r)| (h, Some(r)))?,
        SolverKind::Euler => solve_euler(&u0, &StochasticConfig { nu: 0.0, samples: 1, ..scfg })
            .map(|(h, r)| (h, Some(r)))?,
        SolverKind::Diffusive => {
            let dcfg = DiffusiveConfig {
                nu: s.nu,
                dt: s.dt,
                t_final: s.t_final,
                picard_tol: s.picard_tol,
                picard_max: s.picard_max,
                remap_threshold: s.remap_threshold,
                max_window_steps: None,
            };
            solve_diffusive(&u0, &dcfg).map(|(h, r)| (h, Some(r)))?
        }
        SolverKind::Reference => (reference_solve(&u0, &ReferenceConfig::new(s.nu, s.dt, s.t_final))?, None),
    };
    write_reports(&s, &s.out_dir, &history, report.as_ref())?;
    let nu = if s.kind == SolverKind::Euler { 0.0 } else { s.nu };
    let mut summary = format!("solver {} finished at t = {}\n", s.kind, history.t_final());
    if let Some(r) = &report {
        let _ = writeln!(summary, "picard iterations {} (windows {})", r.iterations.len(), r.windows.len());
        if let Some(sigma) = r.mc_sigma.last() {
            let _ = writeln!(summary, "monte-carlo standard error {sigma:.3e}");
        }
    }
    let mut final_error = None;
    if let Some(ex) = &exact {
        let slices = history.times().iter().map(|&t| ex.field(t, nu)).collect();
        let exact_h = VelocityHistory::new(history.t0(), history.dt(), slices)?;
        let metrics = error_metrics(&exact_h, &history)?;
        let mut csv = String::from("time,l2_rel,linf_rel,c1_rel\n");
        for m in &metrics {
            let _ = writeln!(csv, "{},{:.12e},{:.12e},{:.12e}", m.time, m.l2_rel, m.linf_rel, m.c1_rel);
        }
        fs::write(s.out_dir.join("errors.csv"), csv)?;
        let last = metrics.last().map(|m| m.linf_rel);
        if let Some(e) = last {
            let _ = writeln!(summary, "final relative Linf error vs exact {e:.3e}");
        }
        final_error = last;
    }
    Ok(RunOutput { history, report, final_error, summary })
}

/// Runs one experiment and returns the path of its CSV.
pub fn run_experiment(cfg: &RunConfig, which: Experiment) -> Result<(PathBuf, String)> {
    let s = cfg.settings()?;
    fs::create_dir_all(&s.out_dir)?;
    fs::write(s.out_dir.join("config.resolved"), cfg.resolved())?;
    let (u0, exact) = initial_data(&s)?;
    let base = stochastic_config(&s);
    let custom = |spec: &mut ExperimentSpec| {
        if !s.values.is_empty() {
            spec.values = s.values.clone();
        }
        if !s.times.is_empty() {
            spec.times = s.times.clone();
        }
        spec.fine_dt = s.fine_dt;
    };
    let mut summary = String::new();
    let path = match which {
        Experiment::InviscidLimit => {
            let mut spec = ExperimentSpec::inviscid_limit(u0, base);
            custom(&mut spec);
            spec.output = Some(s.out_dir.join("inviscid_limit.csv"));
            let r = inviscid_limit_experiment(&spec)?;
            if r.degenerate {
                summary.push_str("all errors vanish: fit skipped (degenerate)\n");
            }
            for (name, fit) in [("nu", r.nu_fit), ("t", r.t_fit), ("pathwise nu", r.pathwise_fit)] {
                if let Some(f) = fit {
                    let _ = writeln!(summary, "{name} exponent {:.4} (r2 {:.4})", f.exponent, f.r2);
                }
            }
            for (nu, e) in &r.failures {
                let _ = writeln!(summary, "nu = {nu} failed: {e}");
            }
            spec.output
        }
        Experiment::Contraction => {
            let mut spec = ExperimentSpec::contraction(u0, base);
            custom(&mut spec);
            spec.output = Some(s.out_dir.join("contraction.csv"));
            let r = contraction_experiment(&spec)?;
            let _ = writeln!(summary, "max ratio at smallest horizon {:.4}", r.max_ratio_smallest());
            let _ = writeln!(summary, "viscosity variation of sup norm {:.3e}", r.viscosity_variation());
            spec.output
        }
        Experiment::Equivalence => {
            let mut spec = ExperimentSpec::equivalence(u0, base);
            custom(&mut spec);
            spec.output = Some(s.out_dir.join("equivalence.csv"));
            let r = equivalence_experiment(&spec)?;
            let _ = writeln!(
                summary,
                "stochastic vs reference rms {:.3e}, 3 sigma {:.3e}; diffusive vs reference rel L2 {:.3e}",
                r.stochastic_reference.err_rms,
                3.0 * r.mc_sigma,
                r.diffusive_reference.err_l2
            );
            spec.output
        }
        Experiment::Samples => {
            let exact = exact.ok_or_else(|| Error::Config("samples experiment needs initial data with a closed-form solution".into()))?;
            let mut spec = ExperimentSpec::new("samples", u0, base, crate::experiments::SweepVar::Samples, vec![64.0, 256.0, 1024.0, 4096.0]);
            custom(&mut spec);
            spec.output = Some(s.out_dir.join("samples.csv"));
            let r = samples_experiment(&spec, &exact.field(s.t_final, s.nu), s.budget)?;
            if let Some(f) = r.fit {
                let _ = writeln!(summary, "samples exponent {:.4} (r2 {:.4})", f.exponent, f.r2);
            }
            spec.output
        }
    };
    Ok((path.expect("output set"), summary))
}

/// Header and norms of a snapshot file.
pub fn inspect(path: &Path) -> Result<String> {
    let snap = Snapshot::load(path)?;
    let f = &snap.field;
    let g = f.grid();
    let mut s = String::new();
    let _ = writeln!(s, "dim {} n {} length {} rank {} time {}", g.dim(), g.n(), g.length(), f.rank(), snap.time);
    if let Some(p) = snap.path_index {
        let _ = writeln!(s, "path index {p}");
    }
    if f.rank() <= 1 {
        let r = discrete_norms(f, DEFAULT_ALPHA, &PairSet::standard(g, 0))?;
        let _ = writeln!(s, "c0 {:.6e} c1 {:.6e} c2 {:.6e}", r.c0(), r.c1(), r.c2());
        let _ = writeln!(s, "holder seminorms (alpha {}) {:.6e} {:.6e} {:.6e}", r.alpha, r.seminorm[0], r.seminorm[1], r.seminorm[2]);
    } else {
        let _ = writeln!(s, "sup {:.6e}", f.sup_norm());
    }
    if f.rank() == 1 {
        let _ = writeln!(s, "max |div| {:.3e}", divergence(f)?.max_abs());
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
        assert_eq!(exit_code(&Error::NoConvergence { iterations: 1, last_residual: 1.0, residuals: vec![] }), 2);
        assert_eq!(exit_code(&Error::Degenerate("x".into())), 1);
    }

    #[test]
    fn reference_run_matches_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        for (k, v) in [
            ("solver.kind", "reference"),
            ("grid.n", "16"),
            ("solver.t_final", "0.1"),
            ("out.snapshots", "false"),
            ("out.dir", dir.path().to_str().unwrap()),
        ] {
            cfg.set(k, v).unwrap();
        }
        let out = run(&cfg).unwrap();
        assert!(out.final_error.unwrap() < 1e-8);
        assert!(dir.path().join("final.snap").exists());
        assert!(dir.path().join("config.resolved").exists());
        let text = inspect(&dir.path().join("final.snap")).unwrap();
        assert!(text.starts_with("dim 2 n 16"));
    }
}
