//! Fourier transforms and spectral operators on the torus.
//!
//! Coefficients are normalized so that `f(x) = Σ_k F_k exp(2πi k·x / L)`.
//! Storage is real-to-complex: axis 0 keeps `k0 = 0..=n/2` only (the
//! negative half is the complex conjugate), the remaining axes keep all `n`
//! wavenumbers in FFT order (`0, 1, .., n/2, -n/2+1, .., -1`). The flat
//! index of `(k0, i1, i2)` is `k0 + (n/2+1) * (i1 + n * i2)`.
//!
//! Odd derivatives zero the Nyquist wavenumber. The Leray projection maps
//! `ŵ ↦ ŵ − k (k·ŵ)/|k|²` for `k ≠ 0` and passes the mean mode through.
//! Dealiasing keeps `|k_a| ≤ (n-1)/3` on every axis.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};

struct Plans {
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Arc<Plans>>> = RefCell::new(HashMap::new());
}

fn plans(n: usize) -> Arc<Plans> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut rp = RealFftPlanner::<f64>::new();
                let mut cp = FftPlanner::<f64>::new();
                Arc::new(Plans {
                    r2c: rp.plan_fft_forward(n),
                    c2r: rp.plan_fft_inverse(n),
                    fwd: cp.plan_fft_forward(n),
                    inv: cp.plan_fft_inverse(n),
                })
            })
            .clone()
    })
}

/// Signed wavenumber of FFT-ordered index `i` on an axis of length `n`.
#[inline]
pub fn signed_wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Largest retained wavenumber under the 2/3 rule.
#[inline]
pub fn dealias_cutoff(n: usize) -> i64 {
    ((n - 1) / 3) as i64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); spectral_len(&grid)] }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn forward(grid: TorusGrid, values: &[f64]) -> Self {
        Self { grid, coeffs: forward_raw(&grid, values) }
    }

    pub fn inverse(&self) -> Vec<f64> {
        inverse_raw(&self.grid, &self.coeffs)
    }

    /// Integer wavevector of a stored index.
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        wavevector(&self.grid, idx)
    }

    /// Coefficient of an arbitrary integer wavevector (zero outside the
    /// resolved range).
    pub fn coefficient(&self, k: [i64; 3]) -> Complex64 {
        let n = self.grid.n() as i64;
        let d = self.grid.dim();
        let half = n / 2;
        if (0..d).any(|a| k[a].abs() > half) {
            return Complex64::new(0.0, 0.0);
        }
        let (k, conj) = if k[0] < 0 { ([-k[0], -k[1], -k[2]], true) } else { (k, false) };
        let fold = |v: i64| -> usize { v.rem_euclid(n) as usize };
        let k0 = k[0] as usize;
        let stride = half as usize + 1;
        let idx = match d {
            2 => k0 + stride * fold(k[1]),
            _ => k0 + stride * (fold(k[1]) + n as usize * fold(k[2])),
        };
        let c = self.coeffs[idx];
        if conj {
            c.conj()
        } else {
            c
        }
    }

    /// `Σ_k |F_k|²` over the full (Hermitian) spectrum.
    pub fn energy(&self) -> f64 {
        let n = self.grid.n();
        let half = n / 2 + 1;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k0 = i % half;
                let w = if k0 == 0 || k0 == n / 2 { 1.0 } else { 2.0 };
                w * c.norm_sqr()
            })
            .sum()
    }

    /// Largest deviation from Hermitian symmetry on the self-conjugate
    /// planes `k0 = 0` and `k0 = n/2`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n() as i64;
        let d = self.grid.dim();
        let mut worst: f64 = 0.0;
        for idx in 0..self.coeffs.len() {
            let k = self.wavevector(idx);
            if k[0] != 0 {
                continue;
            }
            let mut mk = [0i64; 3];
            for a in 1..d {
                mk[a] = if k[a].abs() == n / 2 { k[a] } else { -k[a] };
            }
            worst = worst.max((self.coefficient(mk) - self.coeffs[idx].conj()).norm());
        }
        worst
    }
}

pub fn spectral_len(grid: &TorusGrid) -> usize {
    (grid.n() / 2 + 1) * grid.n().pow(grid.dim() as u32 - 1)
}

pub fn wavevector(grid: &TorusGrid, idx: usize) -> [i64; 3] {
    let n = grid.n();
    let half = n / 2 + 1;
    let k0 = idx % half;
    let rest = idx / half;
    let mut k = [k0 as i64, signed_wavenumber(rest % n, n), 0];
    if grid.dim() == 3 {
        k[2] = signed_wavenumber(rest / n, n);
    }
    k
}

fn forward_raw(grid: &TorusGrid, values: &[f64]) -> Vec<Complex64> {
    let n = grid.n();
    let half = n / 2 + 1;
    let rows = grid.nodes() / n;
    let p = plans(n);
    let mut out = vec![Complex64::new(0.0, 0.0); half * rows];
    let mut row = vec![0.0; n];
    let mut scratch = p.r2c.make_scratch_vec();
    for r in 0..rows {
        row.copy_from_slice(&values[r * n..(r + 1) * n]);
        p.r2c
            .process_with_scratch(&mut row, &mut out[r * half..(r + 1) * half], &mut scratch)
            .expect("r2c length");
    }
    transform_outer_axes(grid, &mut out, &*p.fwd);
    let scale = 1.0 / grid.nodes() as f64;
    out.iter_mut().for_each(|c| *c *= scale);
    out
}

fn inverse_raw(grid: &TorusGrid, coeffs: &[Complex64]) -> Vec<f64> {
    let n = grid.n();
    let half = n / 2 + 1;
    let rows = grid.nodes() / n;
    let p = plans(n);
    let mut work = coeffs.to_vec();
    transform_outer_axes(grid, &mut work, &*p.inv);
    let mut out = vec![0.0; grid.nodes()];
    let mut scratch = p.c2r.make_scratch_vec();
    for r in 0..rows {
        let spec = &mut work[r * half..(r + 1) * half];
        spec[0].im = 0.0;
        spec[half - 1].im = 0.0;
        p.c2r
            .process_with_scratch(spec, &mut out[r * n..(r + 1) * n], &mut scratch)
            .expect("c2r length");
    }
    out
}

/// Complex transforms along axes 1 (and 2) of a half-spectrum array.
fn transform_outer_axes(grid: &TorusGrid, data: &mut [Complex64], fft: &dyn Fft<f64>) {
    let n = grid.n();
    let half = n / 2 + 1;
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let planes = if grid.dim() == 3 { n } else { 1 };
    // axis 1: stride `half`, one batch of `half` lines per plane
    let mut buf = vec![Complex64::new(0.0, 0.0); half * n];
    for p2 in 0..planes {
        let base = p2 * half * n;
        for k0 in 0..half {
            for i1 in 0..n {
                buf[k0 * n + i1] = data[base + k0 + half * i1];
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k0 in 0..half {
            for i1 in 0..n {
                data[base + k0 + half * i1] = buf[k0 * n + i1];
            }
        }
    }
    if grid.dim() == 3 {
        let stride = half * n;
        let lines = stride;
        let mut buf = vec![Complex64::new(0.0, 0.0); lines * n];
        for l in 0..lines {
            for i2 in 0..n {
                buf[l * n + i2] = data[l + stride * i2];
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for l in 0..lines {
            for i2 in 0..n {
                data[l + stride * i2] = buf[l * n + i2];
            }
        }
    }
}

/// Forward transform of a scalar field.
pub fn fft_forward(f: &Field) -> Result<SpectralField> {
    if f.rank() != 0 {
        return Err(Error::Shape(format!("fft_forward expects a scalar field, got rank {}", f.rank())));
    }
    Ok(SpectralField::forward(*f.grid(), f.comp(0)))
}

pub fn fft_inverse(s: &SpectralField) -> Field {
    Field::scalar(*s.grid(), s.inverse()).expect("shape")
}

/// Per-component spectra of a field.
pub fn forward_components(f: &Field) -> Vec<SpectralField> {
    f.components().iter().map(|c| SpectralField::forward(*f.grid(), c)).collect()
}

pub fn inverse_components(grid: TorusGrid, rank: usize, spec: &[SpectralField]) -> Field {
    Field::from_components(grid, rank, spec.iter().map(|s| s.inverse()).collect()).expect("shape")
}

/// Physical wavenumber `2πk/L` used by odd derivatives (Nyquist zeroed).
pub fn derivative_factors(grid: &TorusGrid, axis: usize) -> Vec<f64> {
    let n = grid.n() as i64;
    let scale = std::f64::consts::TAU / grid.length();
    (0..spectral_len(grid))
        .map(|i| {
            let k = wavevector(grid, i)[axis];
            if k.abs() == n / 2 {
                0.0
            } else {
                scale * k as f64
            }
        })
        .collect()
}

/// Spectral derivative `∂_axis` applied to coefficients.
pub fn differentiate(s: &SpectralField, axis: usize) -> SpectralField {
    let k = derivative_factors(s.grid(), axis);
    let coeffs = s
        .coeffs
        .iter()
        .zip(&k)
        .map(|(c, kk)| Complex64::new(-c.im * kk, c.re * kk))
        .collect();
    SpectralField { grid: s.grid, coeffs }
}

/// Second derivative `∂_a ∂_b` (Nyquist kept when `a == b`).
pub fn differentiate2(s: &SpectralField, a: usize, b: usize) -> SpectralField {
    let grid = s.grid;
    let scale = std::f64::consts::TAU / grid.length();
    let n = grid.n() as i64;
    let coeffs = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = wavevector(&grid, i);
            if a == b {
                -c * (scale * k[a] as f64).powi(2)
            } else if k[a].abs() == n / 2 || k[b].abs() == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                -c * (scale * scale * (k[a] * k[b]) as f64)
            }
        })
        .collect();
    SpectralField { grid, coeffs }
}

/// Gradient raising rank by one: scalar → vector `∂_i f`, vector → matrix
/// with entry `(i, j) = ∂_i w_j`.
pub fn spectral_gradient(f: &Field) -> Result<Field> {
    if f.rank() > 1 {
        return Err(Error::Shape("gradient of rank-2 fields is not supported".into()));
    }
    let grid = *f.grid();
    let d = grid.dim();
    let spec = forward_components(f);
    let mut comps = vec![Vec::new(); d * spec.len()];
    let nc = spec.len();
    for i in 0..d {
        for (j, s) in spec.iter().enumerate() {
            comps[i * nc + j] = differentiate(s, i).inverse();
        }
    }
    Field::from_components(grid, f.rank() + 1, comps)
}

/// Gradient from precomputed component spectra of a vector field.
pub fn gradient_from_spectra(grid: TorusGrid, spec: &[SpectralField]) -> Field {
    let d = grid.dim();
    let mut comps = vec![Vec::new(); d * d];
    for i in 0..d {
        for (j, s) in spec.iter().enumerate() {
            comps[i * d + j] = differentiate(s, i).inverse();
        }
    }
    Field::from_components(grid, 2, comps).expect("shape")
}

pub fn divergence(w: &Field) -> Result<Field> {
    if w.rank() != 1 {
        return Err(Error::Shape("divergence needs a vector field".into()));
    }
    let grid = *w.grid();
    let mut acc = SpectralField::zeros(grid);
    for a in 0..grid.dim() {
        let s = differentiate(&SpectralField::forward(grid, w.comp(a)), a);
        for (o, c) in acc.coeffs.iter_mut().zip(&s.coeffs) {
            *o += c;
        }
    }
    Ok(fft_inverse(&acc))
}

/// Spectrum of the divergence of a vector field given in spectral form.
pub fn divergence_spectrum(spec: &[SpectralField]) -> SpectralField {
    let grid = *spec[0].grid();
    let mut acc = SpectralField::zeros(grid);
    for (a, s) in spec.iter().enumerate() {
        let ds = differentiate(s, a);
        for (o, c) in acc.coeffs.iter_mut().zip(&ds.coeffs) {
            *o += c;
        }
    }
    acc
}

pub fn laplacian(f: &Field) -> Field {
    let grid = *f.grid();
    let spec = forward_components(f);
    let out: Vec<SpectralField> = spec
        .iter()
        .map(|s| {
            let mut acc = SpectralField::zeros(grid);
            for a in 0..grid.dim() {
                let d2 = differentiate2(s, a, a);
                for (o, c) in acc.coeffs.iter_mut().zip(&d2.coeffs) {
                    *o += c;
                }
            }
            acc
        })
        .collect();
    inverse_components(grid, f.rank(), &out)
}

/// In-place Leray projection of vector spectra.
pub fn project_spectra(spec: &mut [SpectralField]) {
    let grid = *spec[0].grid();
    let d = grid.dim();
    let len = spec[0].coeffs.len();
    for i in 0..len {
        let k = wavevector(&grid, i);
        let k2: i64 = (0..d).map(|a| k[a] * k[a]).sum();
        if k2 == 0 {
            continue;
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for (a, s) in spec.iter().enumerate() {
            dot += s.coeffs[i] * k[a] as f64;
        }
        let f = dot / k2 as f64;
        for (a, s) in spec.iter_mut().enumerate() {
            s.coeffs[i] -= f * k[a] as f64;
        }
    }
}

pub fn leray_project(w: &Field) -> Result<Field> {
    if w.rank() != 1 {
        return Err(Error::Shape("leray_project needs a vector field".into()));
    }
    let mut spec = forward_components(w);
    project_spectra(&mut spec);
    Ok(inverse_components(*w.grid(), 1, &spec))
}

/// Zero every mode outside the 2/3 box.
pub fn truncate_spectrum(s: &mut SpectralField) {
    let grid = s.grid;
    let cut = dealias_cutoff(grid.n());
    let d = grid.dim();
    for (i, c) in s.coeffs.iter_mut().enumerate() {
        let k = wavevector(&grid, i);
        if (0..d).any(|a| k[a].abs() > cut) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Mask (1 kept, 0 dropped) of the 2/3 box in spectral storage order.
pub fn dealias_mask(grid: &TorusGrid) -> Vec<bool> {
    let cut = dealias_cutoff(grid.n());
    (0..spectral_len(grid))
        .map(|i| {
            let k = wavevector(grid, i);
            (0..grid.dim()).all(|a| k[a].abs() <= cut)
        })
        .collect()
}

pub fn truncate(f: &Field) -> Field {
    let grid = *f.grid();
    let mut spec = forward_components(f);
    spec.iter_mut().for_each(truncate_spectrum);
    inverse_components(grid, f.rank(), &spec)
}

/// Pointwise product of 2/3-truncated factors, truncated again.
///
/// Either factor may be scalar (broadcast); otherwise ranks must match and
/// the product is componentwise.
pub fn dealiased_product(a: &Field, b: &Field) -> Result<Field> {
    if !a.grid().same_shape(b.grid()) {
        return Err(Error::Shape("fields live on different grids".into()));
    }
    let ta = truncate(a);
    let tb = truncate(b);
    let grid = *a.grid();
    let (rank, comps) = match (ta.rank(), tb.rank()) {
        (0, _) => (
            tb.rank(),
            tb.components()
                .iter()
                .map(|c| c.iter().zip(ta.comp(0)).map(|(x, y)| x * y).collect())
                .collect::<Vec<Vec<f64>>>(),
        ),
        (_, 0) => (
            ta.rank(),
            ta.components()
                .iter()
                .map(|c| c.iter().zip(tb.comp(0)).map(|(x, y)| x * y).collect())
                .collect(),
        ),
        (ra, rb) if ra == rb => (ra, ta.zip_with(&tb, |x, y| x * y).into_components()),
        (ra, rb) => {
            return Err(Error::Shape(format!("cannot multiply rank {ra} by rank {rb}")));
        }
    };
    Ok(truncate(&Field::from_components(grid, rank, comps)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(2, n, 1.0).unwrap()
    }

    #[test]
    fn zero_field_has_zero_spectrum() {
        let g = grid(16);
        let s = fft_forward(&Field::zeros(g, 0)).unwrap();
        assert!(s.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn cosine_is_two_modes() {
        let g = grid(16);
        let f = Field::from_fn(g, 0, |x, o| o[0] = (TAU * x[0]).cos());
        let s = fft_forward(&f).unwrap();
        let mut nonzero = Vec::new();
        for k1 in -7i64..=8 {
            for k0 in -7i64..=8 {
                let c = s.coefficient([k0, k1, 0]);
                if c.norm() > 1e-14 {
                    nonzero.push(([k0, k1], c));
                }
            }
        }
        assert_eq!(nonzero.len(), 2);
        for (k, c) in nonzero {
            assert_eq!(k[1], 0);
            assert_eq!(k[0].abs(), 1);
            assert!((c.re - 0.5).abs() < 1e-15 && c.im.abs() < 1e-15);
        }
    }

    #[test]
    fn sine_derivative() {
        let g = grid(32);
        let f = Field::from_fn(g, 0, |x, o| o[0] = (TAU * x[0]).sin());
        let grad = spectral_gradient(&f).unwrap();
        for node in 0..g.nodes() {
            let x = g.position(node);
            assert!((grad.comp(0)[node] - TAU * (TAU * x[0]).cos()).abs() < 1e-12);
            assert!(grad.comp(1)[node].abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = TorusGrid::new(3, 8, 2.0).unwrap();
        let f = Field::constant_vector(g, &[1.5, -2.0, 0.25]);
        let grad = spectral_gradient(&f).unwrap();
        assert!(grad.max_abs() < 1e-13);
        assert_eq!(grad.rank(), 2);
    }

    #[test]
    fn dealias_cosine_square() {
        let g = grid(32);
        let k = 8.0;
        let f = Field::from_fn(g, 0, |x, o| o[0] = (TAU * k * x[0]).cos());
        let p = dealiased_product(&f, &f).unwrap();
        for v in p.comp(0) {
            assert!((v - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_factor_truncates() {
        let g = grid(16);
        let one = Field::scalar(g, vec![1.0; g.nodes()]).unwrap();
        let b = Field::from_fn(g, 0, |x, o| o[0] = (TAU * 2.0 * x[1]).sin() + (TAU * 7.0 * x[0]).cos());
        let p = dealiased_product(&one, &b).unwrap();
        for node in 0..g.nodes() {
            let x = g.position(node);
            assert!((p.comp(0)[node] - (TAU * 2.0 * x[1]).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn hermitian_storage() {
        let g = TorusGrid::new(3, 8, 1.0).unwrap();
        let f = Field::from_fn(g, 0, |x, o| {
            o[0] = (TAU * (x[0] + 2.0 * x[1] - x[2])).sin() + (TAU * 3.0 * x[2]).cos()
        });
        let s = fft_forward(&f).unwrap();
        assert!(s.hermitian_defect() < 1e-15);
        let back = fft_inverse(&s);
        for (a, b) in back.comp(0).iter().zip(f.comp(0)) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
