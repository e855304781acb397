//! Scaled discrete norms, error metrics, rate fits and the inequality ledger.
//!
//! Norms follow the torus-side scaling
//! `‖f‖_k = Σ_{|m|≤k} L^{|m|} sup|D^m f|` and
//! `‖f‖_{k,α} = ‖f‖_k + Σ_{|m|=k} L^k [D^m f]_α`, with
//! `[g]_α = sup L^α |g(x) − g(y)| / |x − y|^α`. Pointwise magnitudes of
//! vector or tensor values are Euclidean. The seminorm is estimated over a
//! finite [`PairSet`], so it is a lower bound of the continuum quantity.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};
use crate::history::VelocityHistory;
use crate::spectral::{differentiate, differentiate2, forward_components, inverse_components, spectral_gradient};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const RANDOM_PAIRS: usize = 4096;

/// Node pairs over which Hölder quotients are maximized.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    dim: usize,
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairSet {
    /// Every nearest-neighbour pair plus [`RANDOM_PAIRS`] seeded random pairs.
    pub fn standard(grid: &TorusGrid, seed: u64) -> Self {
        let mut s = Self::neighbours(grid);
        let nodes = grid.nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut added = 0;
        while added < RANDOM_PAIRS {
            let a = rng.random_range(0..nodes);
            let b = rng.random_range(0..nodes);
            if a != b {
                s.pairs.push((a, b));
                added += 1;
            }
        }
        s
    }

    pub fn neighbours(grid: &TorusGrid) -> Self {
        let d = grid.dim();
        let n = grid.n();
        let mut pairs = Vec::with_capacity(d * grid.nodes());
        for node in 0..grid.nodes() {
            let idx = grid.unflatten(node);
            for a in 0..d {
                let mut j = idx;
                j[a] = (j[a] + 1) % n;
                pairs.push((node, grid.flatten(j)));
            }
        }
        Self { dim: d, n, pairs }
    }

    /// The same pairs on a grid refined by an integer factor, together
    /// with the fine grid's nearest-neighbour pairs.
    pub fn lift(&self, fine: &TorusGrid) -> Result<Self> {
        if fine.dim() != self.dim || fine.n() % self.n != 0 {
            return Err(Error::Shape(format!("cannot lift n = {} pairs to n = {}", self.n, fine.n())));
        }
        let r = fine.n() / self.n;
        let coarse_flat = |node: usize| -> usize {
            let mut idx = [0usize; 3];
            let mut rest = node;
            for v in idx.iter_mut().take(self.dim) {
                *v = (rest % self.n) * r;
                rest /= self.n;
            }
            fine.flatten(idx)
        };
        let mut out = Self::neighbours(fine);
        out.pairs.extend(self.pairs.iter().map(|&(a, b)| (coarse_flat(a), coarse_flat(b))));
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Adds pairs (duplicates are harmless).
    pub fn extend(&mut self, more: impl IntoIterator<Item = (usize, usize)>) {
        self.pairs.extend(more);
    }

    fn check(&self, grid: &TorusGrid) -> Result<()> {
        if grid.dim() != self.dim || grid.n() != self.n {
            return Err(Error::Shape("pair set built for a different grid".into()));
        }
        Ok(())
    }
}

/// Scaled `C^k` and Hölder parts for `k = 0, 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub alpha: f64,
    /// `Σ_{|m|≤k} L^{|m|} sup|D^m f|`.
    pub c: [f64; 3],
    /// `Σ_{|m|=k} L^k sup|D^m f|`.
    pub order_sup: [f64; 3],
    /// `Σ_{|m|=k} L^k [D^m f]_α`.
    pub seminorm: [f64; 3],
}

impl NormReport {
    pub fn c0(&self) -> f64 {
        self.c[0]
    }
    pub fn c1(&self) -> f64 {
        self.c[1]
    }
    pub fn c2(&self) -> f64 {
        self.c[2]
    }

    /// `‖f‖_{k,α}`.
    pub fn holder(&self, k: usize) -> f64 {
        self.c[k] + self.seminorm[k]
    }
}

/// Multi-indices of order `k ≤ 2` as sorted axis lists.
fn multi_indices(d: usize, k: usize) -> Vec<Vec<usize>> {
    match k {
        0 => vec![vec![]],
        1 => (0..d).map(|a| vec![a]).collect(),
        _ => (0..d).flat_map(|a| (a..d).map(move |b| vec![a, b])).collect(),
    }
}

pub fn discrete_norms(f: &Field, alpha: f64, pairs: &PairSet) -> Result<NormReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter { name: "alpha", reason: format!("{alpha} not in (0, 1)") });
    }
    let grid = *f.grid();
    pairs.check(&grid)?;
    let spec = forward_components(f);
    let l = grid.length();
    let mut order_sup = [0.0; 3];
    let mut seminorm = [0.0; 3];
    for k in 0..3 {
        let scale = l.powi(k as i32);
        for m in multi_indices(grid.dim(), k) {
            let deriv = match m.len() {
                0 => f.clone(),
                1 => inverse_components(grid, f.rank(), &spec.iter().map(|s| differentiate(s, m[0])).collect::<Vec<_>>()),
                _ => inverse_components(
                    grid,
                    f.rank(),
                    &spec.iter().map(|s| differentiate2(s, m[0], m[1])).collect::<Vec<_>>(),
                ),
            };
            order_sup[k] += scale * deriv.sup_norm();
            seminorm[k] += scale * holder_seminorm(&deriv, alpha, pairs);
        }
    }
    let c = [order_sup[0], order_sup[0] + order_sup[1], order_sup[0] + order_sup[1] + order_sup[2]];
    Ok(NormReport { alpha, c, order_sup, seminorm })
}

/// `max L^α |g(x) − g(y)| / dist(x, y)^α` over the pair set.
pub fn holder_seminorm(g: &Field, alpha: f64, pairs: &PairSet) -> f64 {
    let grid = g.grid();
    let n = grid.n();
    let h = grid.spacing();
    let l = grid.length();
    let d = grid.dim();
    let mut best = 0.0f64;
    for &(a, b) in &pairs.pairs {
        let ia = grid.unflatten(a);
        let ib = grid.unflatten(b);
        let mut dist2 = 0.0;
        for ax in 0..d {
            let diff = ia[ax].abs_diff(ib[ax]);
            let steps = diff.min(n - diff) as f64;
            dist2 += (steps * h).powi(2);
        }
        if dist2 == 0.0 {
            continue;
        }
        let mut diff2 = 0.0;
        for c in g.components() {
            diff2 += (c[a] - c[b]).powi(2);
        }
        let q = (l * l / dist2).powf(alpha / 2.0) * diff2.sqrt();
        best = best.max(q);
    }
    best
}

/// Relative errors of one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub time: f64,
    pub l2_rel: f64,
    pub linf_rel: f64,
    pub c1_rel: f64,
}

fn rel(err: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        err / reference
    } else {
        err
    }
}

/// Errors of `b` relative to the reference `a`. A zero reference falls
/// back to absolute errors.
pub fn field_errors(a: &Field, b: &Field) -> Result<(f64, f64, f64)> {
    a.check_same(b)?;
    let e = b.sub(a);
    let l2 = rel(e.rms(), a.rms());
    let linf = rel(e.sup_norm(), a.sup_norm());
    let c1 = if a.rank() <= 1 {
        rel(spectral_gradient(&e)?.sup_norm(), spectral_gradient(a)?.sup_norm())
    } else {
        f64::NAN
    };
    Ok((l2, linf, c1))
}

pub fn error_metrics(a: &VelocityHistory, b: &VelocityHistory) -> Result<Vec<ErrorMetrics>> {
    if a.len() != b.len() || !a.grid().same_shape(b.grid()) {
        return Err(Error::Shape(format!("histories of {} and {} slices", a.len(), b.len())));
    }
    if (a.dt() - b.dt()).abs() > 1e-12 * a.dt() || (a.t0() - b.t0()).abs() > 1e-12 {
        return Err(Error::Shape("histories on different time grids".into()));
    }
    (0..a.len())
        .map(|k| {
            let (l2_rel, linf_rel, c1_rel) = field_errors(a.slice(k), b.slice(k))?;
            Ok(ErrorMetrics { time: a.time(k), l2_rel, linf_rel, c1_rel })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::Degenerate(format!("{} xs for {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 4 {
        return Err(Error::Degenerate(format!("{} points, need at least 4", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Degenerate("non-positive or non-finite value".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(Error::Degenerate("all xs equal".into()));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r2 = if syy <= 1e-300 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { exponent, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub lemma_id: String,
    pub draw: usize,
    pub lhs: f64,
    pub rhs_core: f64,
    pub fitted_c: f64,
}

/// Measured inequality sides, one row per draw.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub rows: Vec<LedgerRow>,
}

pub const LEDGER_SCHEMA: &str = "lemma_id,draw,lhs,rhs_core,fitted_c";

impl Ledger {
    /// Records a row. `fitted_c` is `lhs / rhs_core`, or NaN if the core
    /// vanishes.
    pub fn push(&mut self, lemma_id: &str, draw: usize, lhs: f64, rhs_core: f64) {
        let fitted_c = if rhs_core > 0.0 { lhs / rhs_core } else { f64::NAN };
        self.rows.push(LedgerRow { lemma_id: lemma_id.to_string(), draw, lhs, rhs_core, fitted_c });
    }

    pub fn extend(&mut self, other: Ledger) {
        self.rows.extend(other.rows);
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rows {
            if !ids.contains(&r.lemma_id) {
                ids.push(r.lemma_id.clone());
            }
        }
        ids
    }

    pub fn constants(&self, lemma_id: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.lemma_id == lemma_id && r.fitted_c.is_finite())
            .map(|r| r.fitted_c)
            .collect()
    }

    /// `(min, max)` of the finite fitted constants for one inequality.
    pub fn constant_range(&self, lemma_id: &str) -> Option<(f64, f64)> {
        let c = self.constants(lemma_id);
        if c.is_empty() {
            return None;
        }
        Some((c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(0.0, f64::max)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{LEDGER_SCHEMA}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.12e},{:.12e},{:.12e}", r.lemma_id, r.draw, r.lhs, r.rhs_core, r.fitted_c);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn constant_field() {
        let g = TorusGrid::square(16).unwrap();
        let f = Field::scalar(g, vec![-2.5; 256]).unwrap();
        let r = discrete_norms(&f, 0.5, &PairSet::standard(&g, 0)).unwrap();
        assert_eq!(r.c0(), 2.5);
        assert!(r.seminorm.iter().all(|&s| s == 0.0));
        assert!(r.order_sup[1] < 1e-12);
    }

    #[test]
    fn single_sine() {
        let g = TorusGrid::new(2, 32, 3.0).unwrap();
        let f = Field::from_fn(g, 0, |x, o| o[0] = (TAU * x[0] / 3.0).sin());
        let r = discrete_norms(&f, 0.5, &PairSet::standard(&g, 1)).unwrap();
        assert!((r.c0() - 1.0).abs() < 1e-12);
        assert!((r.order_sup[1] - TAU).abs() < 1e-11);
        assert!(r.c0() <= r.c1() && r.c1() <= r.c2());
    }

    #[test]
    fn lifted_pairs_contain_coarse_pairs() {
        let g = TorusGrid::square(8).unwrap();
        let fine = TorusGrid::square(16).unwrap();
        let p = PairSet::standard(&g, 3);
        let q = p.lift(&fine).unwrap();
        assert_eq!(q.len(), p.len() + 2 * 256);
        let (a, b) = p.pairs()[200];
        let (fa, fb) = q.pairs()[512 + 200];
        let ia = g.unflatten(a);
        assert_eq!(fine.unflatten(fa), [2 * ia[0], 2 * ia[1], 0]);
        let ib = g.unflatten(b);
        assert_eq!(fine.unflatten(fb), [2 * ib[0], 2 * ib[1], 0]);
    }

    #[test]
    fn fit_exact_powers() {
        let xs = [1e-4, 1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.sqrt()).collect();
        let f = fit_rate(&xs, &ys).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        assert!((fit_rate(&xs, &ys).unwrap().exponent - 1.0).abs() < 1e-12);
        assert!(fit_rate(&xs[..3], &ys[..3]).is_err());
        assert!(fit_rate(&xs, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn scaled_errors() {
        let g = TorusGrid::square(16).unwrap();
        let a = Field::from_fn(g, 1, |x, o| {
            o[0] = x[1].sin();
            o[1] = x[0].cos();
        });
        let (l2, linf, c1) = field_errors(&a, &a.scale(1.01)).unwrap();
        for e in [l2, linf, c1] {
            assert!((e - 0.01).abs() < 1e-12);
        }
        assert_eq!(field_errors(&a, &a).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ledger_csv() {
        let mut l = Ledger::default();
        l.push("inverse_distance", 0, 1.0, 2.0);
        l.push("inverse_distance", 1, 0.0, 0.0);
        let csv = l.to_csv();
        assert!(csv.starts_with("lemma_id,draw,lhs,rhs_core,fitted_c\ninverse_distance,0,"));
        assert_eq!(l.constant_range("inverse_distance"), Some((0.5, 0.5)));
    }
}
