//! Empirical checks of the composition, inverse, Gronwall and Weber
//! estimates. Each inequality `lhs ≤ c · rhs_core` is sampled on random
//! band-limited draws and the implied constant `lhs / rhs_core` recorded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{discrete_norms, Ledger, PairSet};
use crate::error::Result;
use crate::flowmap::{integrate_flow, integrate_gradient, invert_map, BrownianDriver, DisplacementMap, HistoryDrift};
use crate::grid::{Field, TorusGrid, VectorField};
use crate::history::VelocityHistory;
use crate::interp::Interpolation;
use crate::spectral::spectral_gradient;
use crate::trig::TrigSeries;
use crate::weber::{weber, weber_lipschitz_probe};

pub const LEMMA_IDS: [&str; 7] = [
    "composition",
    "composition_difference",
    "inverse_distance",
    "strain_gronwall",
    "drift_stability",
    "weber_bound",
    "weber_lipschitz",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaConfig {
    pub draws: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Bandwidth of the random fields.
    pub kmax: i64,
    /// Ball radius for `‖∇λ‖∞` in the inverse estimate.
    pub ball: f64,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self { draws: 50, seed: 7, alpha: 0.5, kmax: 3, ball: 0.5, nu: 0.01, dt: 0.01, t_final: 0.2 }
    }
}

/// Series rescaled so the sampled field has `sup|∇f| = target`.
fn with_gradient(s: &TrigSeries, grid: TorusGrid, rank: usize, target: f64) -> Result<TrigSeries> {
    let g = spectral_gradient(&s.sample(grid, rank))?.sup_operator_norm();
    Ok(if g > 0.0 { s.scaled(target / g) } else { s.clone() })
}

/// `f ∘ (I + γ)` evaluated exactly from the series.
fn compose(f: &TrigSeries, gamma: &VectorField) -> Field {
    let grid = *gamma.grid();
    let d = grid.dim();
    let mut comps = vec![vec![0.0; grid.nodes()]; f.components];
    let mut x = [0.0; 3];
    let mut out = vec![0.0; f.components];
    for p in 0..grid.nodes() {
        let pos = grid.position(p);
        for a in 0..d {
            x[a] = pos[a] + gamma.comp(a)[p];
        }
        f.eval_into(&x[..d], &mut out);
        for (c, v) in comps.iter_mut().zip(&out) {
            c[p] = *v;
        }
    }
    let rank = if f.components == 1 { 0 } else { 1 };
    Field::from_components(grid, rank, comps).expect("shape")
}

/// One ledger over `cfg.draws` draws on `grid`. Draws depend only on
/// `(seed, draw)`, so ledgers at different resolutions see the same
/// continuum functions.
pub fn lemma_harness(grid: TorusGrid, cfg: &LemmaConfig) -> Result<Ledger> {
    let d = grid.dim();
    let len = grid.length();
    let a = cfg.alpha;
    let pairs = PairSet::standard(&grid, cfg.seed);
    let norms = |f: &Field| discrete_norms(f, a, &pairs);
    let steps = ((cfg.t_final / cfg.dt).round() as usize).max(1);
    let mut ledger = Ledger::default();
    for draw in 0..cfg.draws {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(draw as u64);
        let amp: f64 = rng.random_range(0.1..0.3);

        // composition bound with g = I + γ
        let f = TrigSeries::random(d, len, 1, cfg.kmax, &mut rng);
        let g1 = with_gradient(&TrigSeries::random(d, len, d, cfg.kmax, &mut rng), grid, 1, amp)?;
        let g2 = with_gradient(&TrigSeries::random(d, len, d, cfg.kmax, &mut rng), grid, 1, amp)?;
        let gamma1 = g1.sample_vector(grid);
        let gamma2 = g2.sample_vector(grid);
        let fs = f.sample(grid, 0);
        let nf = norms(&fs)?;
        let ng1 = norms(&spectral_gradient(&gamma1)?)?;
        let ng2 = norms(&spectral_gradient(&gamma2)?)?;
        let fg1 = compose(&f, &gamma1);
        let fg2 = compose(&f, &gamma2);
        ledger.push("composition", draw, norms(&fg1)?.holder(1), nf.holder(1) * (1.0 + ng1.holder(0)).powf(1.0 + a));
        let grad_f = norms(&spectral_gradient(&fs)?)?;
        let dg = norms(&gamma1.sub(&gamma2))?;
        ledger.push(
            "composition_difference",
            draw,
            norms(&fg1.sub(&fg2))?.holder(1),
            grad_f.holder(1) * (1.0 + ng1.holder(0) + ng2.holder(0)).powi(2) * dg.holder(1),
        );

        // inverse maps stay as close as the forward maps
        let lam1 = DisplacementMap::new(
            with_gradient(&TrigSeries::random(d, len, d, cfg.kmax, &mut rng), grid, 1, cfg.ball)?.sample_vector(grid),
        )?;
        let lam2 = DisplacementMap::new(
            with_gradient(&TrigSeries::random(d, len, d, cfg.kmax, &mut rng), grid, 1, cfg.ball)?.sample_vector(grid),
        )?;
        let ell1 = invert_map(&lam1)?;
        let ell2 = invert_map(&lam2)?;
        ledger.push("inverse_distance", draw, ell1.disp().sub(ell2.disp()).sup_norm(), lam1.disp().sub(lam2.disp()).sup_norm());

        // Gronwall bounds along noisy characteristics
        let speed: f64 = rng.random_range(1.0..3.0);
        let us = TrigSeries::random_divfree(d, len, cfg.kmax, &mut rng);
        let u = with_gradient(&us, grid, 1, speed)?.sample_vector(grid);
        let du = TrigSeries::random_divfree(d, len, cfg.kmax, &mut rng);
        let pert = with_gradient(&du, grid, 1, 0.1 * speed)?.sample_vector(grid);
        let ubar = u.add(&pert);
        let hu = VelocityHistory::constant(&u, 0.0, cfg.dt, steps)?;
        let hbar = VelocityHistory::constant(&ubar, 0.0, cfg.dt, steps)?;
        let driver = BrownianDriver::new(cfg.seed, draw as u32, cfg.dt, steps, d);
        let drift = HistoryDrift::new(&hu, Interpolation::Lagrange);
        let drift_bar = HistoryDrift::new(&hbar, Interpolation::Lagrange);
        let traj = integrate_flow(&drift, cfg.nu, &driver)?;
        let traj_bar = integrate_flow(&drift_bar, cfg.nu, &driver)?;
        let grads = integrate_gradient(&drift, &traj)?;
        let lip = spectral_gradient(&u)?.sup_operator_norm();
        let lip_bar = spectral_gradient(&ubar)?.sup_operator_norm();
        let t = cfg.t_final;
        let minus_id = |g: &Field| {
            let mut g = g.clone();
            for i in 0..d {
                g.comp_mut(i * d + i).iter_mut().for_each(|v| *v -= 1.0);
            }
            g.sup_operator_norm()
        };
        let glam = grads.iter().map(minus_id).fold(0.0, f64::max);
        ledger.push("strain_gronwall", draw, glam, (t * lip).exp_m1());
        let dx = traj
            .lambda_slices
            .last()
            .expect("slices")
            .disp()
            .sub(traj_bar.lambda_slices.last().expect("slices").disp())
            .sup_norm();
        ledger.push("drift_stability", draw, dx, t * pert.sup_norm() * (t * lip.max(lip_bar)).exp());

        // Weber operator bounds
        let v = TrigSeries::random(d, len, d, cfg.kmax, &mut rng).sample_vector(grid);
        let v2 = v.add(&TrigSeries::random(d, len, d, cfg.kmax, &mut rng).sample_vector(grid).scale(0.1));
        let nv = norms(&v)?;
        let w1 = DisplacementMap::new(lam1.disp().scale(0.6))?;
        let w2 = DisplacementMap::new(lam2.disp().scale(0.6))?;
        let gl = norms(&spectral_gradient(w1.disp())?)?;
        ledger.push("weber_bound", draw, norms(&weber(&v, &w1)?)?.holder(1), (1.0 + gl.holder(0)) * nv.holder(1));
        let probe = weber_lipschitz_probe(&v, &v2, &w1, &w2, a, &pairs)?;
        ledger.push("weber_lipschitz", draw, probe.lhs[1], probe.rhs_ell[1] + probe.rhs_v[1]);
    }
    Ok(ledger)
}

/// `max/min` of the fitted constants of `id` across several ledgers.
pub fn constant_spread(ledgers: &[&Ledger], id: &str) -> Option<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for l in ledgers {
        let (a, b) = l.constant_range(id)?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    (lo > 0.0 && hi.is_finite()).then(|| hi / lo)
}
