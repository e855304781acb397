//! Finite trigonometric series evaluated in closed form.
//!
//! `f(x) = Σ_m a_m cos(θ_m) + b_m sin(θ_m)` with `θ_m = 2π k_m·x / L`.
//! Used for band-limited initial data and as an FFT-independent reference
//! for spectral operators.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::{Field, TorusGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub k: [i64; 3],
    /// Cosine amplitude per component.
    pub cos: Vec<f64>,
    /// Sine amplitude per component.
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries {
    pub dim: usize,
    pub length: f64,
    pub components: usize,
    pub modes: Vec<Mode>,
}

impl TrigSeries {
    pub fn new(dim: usize, length: f64, components: usize) -> Self {
        Self { dim, length, components, modes: Vec::new() }
    }

    pub fn push(&mut self, k: [i64; 3], cos: Vec<f64>, sin: Vec<f64>) {
        debug_assert_eq!(cos.len(), self.components);
        self.modes.push(Mode { k, cos, sin });
    }

    /// Random series over the half space of wavevectors with
    /// `0 < max|k_a| ≤ kmax`, amplitudes decaying like `exp(-|k|²/kmax²)`.
    pub fn random<R: Rng>(dim: usize, length: f64, components: usize, kmax: i64, rng: &mut R) -> Self {
        let mut s = Self::new(dim, length, components);
        let k2 = if dim == 3 { kmax } else { 0 };
        for kz in -k2..=k2 {
            for ky in -kmax..=kmax {
                for kx in 0..=kmax {
                    let k = [kx, ky, kz];
                    if !half_space(k) {
                        continue;
                    }
                    let mag2 = (kx * kx + ky * ky + kz * kz) as f64;
                    let amp = (-mag2 / (kmax * kmax) as f64).exp();
                    let cos = (0..components).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect();
                    let sin = (0..components).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect();
                    s.push(k, cos, sin);
                }
            }
        }
        s
    }

    /// Random divergence-free vector series.
    pub fn random_divfree<R: Rng>(dim: usize, length: f64, kmax: i64, rng: &mut R) -> Self {
        Self::random(dim, length, dim, kmax, rng).project()
    }

    fn phase(&self, k: &[i64; 3], x: &[f64]) -> f64 {
        let w = std::f64::consts::TAU / self.length;
        (0..self.dim).map(|a| w * k[a] as f64 * x[a]).sum()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for m in &self.modes {
            let (s, c) = self.phase(&m.k, x).sin_cos();
            for i in 0..self.components {
                out[i] += m.cos[i] * c + m.sin[i] * s;
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components];
        self.eval_into(x, &mut out);
        out
    }

    pub fn sample(&self, grid: TorusGrid, rank: usize) -> Field {
        assert_eq!(grid.components(rank), self.components);
        Field::from_fn(grid, rank, |x, o| self.eval_into(x, o))
    }

    pub fn sample_vector(&self, grid: TorusGrid) -> Field {
        self.sample(grid, 1)
    }

    /// `∂_axis` of the series.
    pub fn derivative(&self, axis: usize) -> Self {
        let w = std::f64::consts::TAU / self.length;
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let f = w * m.k[axis] as f64;
                Mode {
                    k: m.k,
                    cos: m.sin.iter().map(|b| f * b).collect(),
                    sin: m.cos.iter().map(|a| -f * a).collect(),
                }
            })
            .collect();
        Self { modes, ..self.clone() }
    }

    /// Removes the gradient part mode by mode (vector series only).
    pub fn project(&self) -> Self {
        assert_eq!(self.components, self.dim);
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let k2: i64 = (0..self.dim).map(|a| m.k[a] * m.k[a]).sum();
                if k2 == 0 {
                    return m.clone();
                }
                let proj = |v: &[f64]| -> Vec<f64> {
                    let dot: f64 = (0..self.dim).map(|a| v[a] * m.k[a] as f64).sum();
                    (0..self.dim).map(|a| v[a] - dot * m.k[a] as f64 / k2 as f64).collect()
                };
                Mode { k: m.k, cos: proj(&m.cos), sin: proj(&m.sin) }
            })
            .collect();
        Self { modes, ..self.clone() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| Mode {
                k: m.k,
                cos: m.cos.iter().map(|v| v * s).collect(),
                sin: m.sin.iter().map(|v| v * s).collect(),
            })
            .collect();
        Self { modes, ..self.clone() }
    }

    /// Largest `|k_a|` in the series.
    pub fn bandwidth(&self) -> i64 {
        self.modes
            .iter()
            .flat_map(|m| m.k.iter().take(self.dim).map(|v| v.abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Canonical representative of `±k`: first nonzero entry positive.
fn half_space(k: [i64; 3]) -> bool {
    for v in k {
        if v > 0 {
            return true;
        }
        if v < 0 {
            return false;
        }
    }
    false
}
