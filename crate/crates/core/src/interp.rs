//! Off-grid evaluation of nodal fields.
//!
//! `Lagrange` is periodic cubic (4 nodes per axis, `i-1..=i+2` around the
//! cell containing the point). `Trig` sums the resolved Fourier series
//! exactly, with Nyquist modes taken as cosines so that nodal values are
//! reproduced.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};
use crate::spectral::{forward_components, signed_wavenumber, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Lagrange,
    Trig,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lagrange" => Ok(Self::Lagrange),
            "trig" => Ok(Self::Trig),
            other => Err(Error::Config(format!("unknown interpolation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Interpolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lagrange => "lagrange",
            Self::Trig => "trig",
        })
    }
}

/// A field prepared for repeated off-grid evaluation.
pub struct Interpolator<'a> {
    field: &'a Field,
    kind: Interpolation,
    spectra: Vec<SpectralField>,
}

impl<'a> Interpolator<'a> {
    pub fn new(field: &'a Field, kind: Interpolation) -> Self {
        let spectra = match kind {
            Interpolation::Trig => forward_components(field),
            Interpolation::Lagrange => Vec::new(),
        };
        Self { field, kind, spectra }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.field.grid()
    }

    /// Evaluates every component at `points` (flat, `dim` per point).
    /// `out[c][p]` receives component `c` at point `p`.
    pub fn eval(&self, points: &[f64], out: &mut [Vec<f64>]) {
        let grid = self.field.grid();
        let d = grid.dim();
        let count = points.len() / d;
        for o in out.iter_mut() {
            o.resize(count, 0.0);
        }
        match (self.kind, d) {
            (Interpolation::Lagrange, 2) => lagrange2(self.field, points, out),
            (Interpolation::Lagrange, _) => lagrange3(self.field, points, out),
            (Interpolation::Trig, _) => self.trig(points, out),
        }
    }

    pub fn eval_vec(&self, points: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.field.num_components()];
        self.eval(points, &mut out);
        out
    }

    fn trig(&self, points: &[f64], out: &mut [Vec<f64>]) {
        let grid = self.field.grid();
        let d = grid.dim();
        let n = grid.n();
        let half = n / 2 + 1;
        let w = std::f64::consts::TAU / grid.length();
        let mut e0 = vec![Complex64::new(0.0, 0.0); half];
        let mut e1 = vec![Complex64::new(0.0, 0.0); n];
        let mut e2 = vec![Complex64::new(0.0, 0.0); if d == 3 { n } else { 1 }];
        let axis_phase = |k: i64, x: f64| -> Complex64 {
            if k.unsigned_abs() as usize == n / 2 {
                Complex64::new((w * k as f64 * x).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, w * k as f64 * x)
            }
        };
        for p in 0..points.len() / d {
            let x = &points[p * d..(p + 1) * d];
            for (k0, e) in e0.iter_mut().enumerate() {
                let weight = if k0 == 0 || k0 == n / 2 { 1.0 } else { 2.0 };
                *e = axis_phase(k0 as i64, x[0]) * weight;
            }
            for (i, e) in e1.iter_mut().enumerate() {
                *e = axis_phase(signed_wavenumber(i, n), x[1]);
            }
            if d == 3 {
                for (i, e) in e2.iter_mut().enumerate() {
                    *e = axis_phase(signed_wavenumber(i, n), x[2]);
                }
            } else {
                e2[0] = Complex64::new(1.0, 0.0);
            }
            for (c, spec) in self.spectra.iter().enumerate() {
                let coeffs = spec.coeffs();
                let mut total = Complex64::new(0.0, 0.0);
                for (i2, f2) in e2.iter().enumerate() {
                    let mut plane = Complex64::new(0.0, 0.0);
                    for (i1, f1) in e1.iter().enumerate() {
                        let row = &coeffs[half * (i1 + n * i2)..half * (i1 + n * i2 + 1)];
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (cv, f0) in row.iter().zip(&e0) {
                            acc += cv * f0;
                        }
                        plane += acc * f1;
                    }
                    total += plane * f2;
                }
                out[c][p] = total.re;
            }
        }
    }
}

/// Evaluate `f` at arbitrary points (wrapped onto the torus).
pub fn evaluate_offgrid(f: &Field, points: &[f64], kind: Interpolation) -> Vec<Vec<f64>> {
    Interpolator::new(f, kind).eval_vec(points)
}

#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

/// Cell index and weights along one axis.
#[inline]
fn locate(x: f64, inv_h: f64, n: usize) -> (usize, [f64; 4]) {
    let s = x * inv_h;
    let fl = s.floor();
    let t = s - fl;
    let i = (fl as i64).rem_euclid(n as i64) as usize;
    (i, cubic_weights(t))
}

/// `wrap[i] = (i − 1) mod n` for `i < n + 3`, so the stencil of cell `i`
/// is `wrap[i..i + 4]`.
fn wrap_table(n: usize) -> Vec<usize> {
    (0..n + 3).map(|i| (i + n - 1) % n).collect()
}

fn lagrange2(f: &Field, points: &[f64], out: &mut [Vec<f64>]) {
    let grid = f.grid();
    let n = grid.n();
    let inv_h = 1.0 / grid.spacing();
    let comps = f.components();
    let wrap = wrap_table(n);
    for p in 0..points.len() / 2 {
        let (ix, wx) = locate(points[2 * p], inv_h, n);
        let (iy, wy) = locate(points[2 * p + 1], inv_h, n);
        let cols = &wrap[ix..ix + 4];
        let rows = &wrap[iy..iy + 4];
        for (c, comp) in comps.iter().enumerate() {
            let mut acc = 0.0;
            for b in 0..4 {
                let row = &comp[rows[b] * n..rows[b] * n + n];
                let r = wx[0] * row[cols[0]] + wx[1] * row[cols[1]] + wx[2] * row[cols[2]] + wx[3] * row[cols[3]];
                acc += wy[b] * r;
            }
            out[c][p] = acc;
        }
    }
}

fn lagrange3(f: &Field, points: &[f64], out: &mut [Vec<f64>]) {
    let grid = f.grid();
    let n = grid.n();
    let inv_h = 1.0 / grid.spacing();
    let comps = f.components();
    let wrap = wrap_table(n);
    for p in 0..points.len() / 3 {
        let (ix, wx) = locate(points[3 * p], inv_h, n);
        let (iy, wy) = locate(points[3 * p + 1], inv_h, n);
        let (iz, wz) = locate(points[3 * p + 2], inv_h, n);
        let cols = &wrap[ix..ix + 4];
        let rows = &wrap[iy..iy + 4];
        let planes = &wrap[iz..iz + 4];
        for (c, comp) in comps.iter().enumerate() {
            let mut acc = 0.0;
            for cz in 0..4 {
                for b in 0..4 {
                    let start = (planes[cz] * n + rows[b]) * n;
                    let row = &comp[start..start + n];
                    let r = wx[0] * row[cols[0]] + wx[1] * row[cols[1]] + wx[2] * row[cols[2]] + wx[3] * row[cols[3]];
                    acc += wz[cz] * wy[b] * r;
                }
            }
            out[c][p] = acc;
        }
    }
}
