//! The Weber operator `W(v, ℓ) = P[(𝕀 + ∇ᵀℓ) v]` and its companion
//! identities.
//!
//! `((∇ᵀℓ) v)_i = Σ_j ∂_i ℓ_j v_j`. Both factors are 2/3-truncated before
//! the pointwise product and the result is truncated again before
//! projection, so outputs live in the dealiased, divergence-free subspace.

use crate::diagnostics::{discrete_norms, PairSet};
use crate::error::{Error, Result};
use crate::flowmap::DisplacementMap;
use crate::grid::{Field, VectorField};
use crate::spectral::{
    differentiate, forward_components, inverse_components, project_spectra, truncate_spectrum,
    SpectralField,
};

/// `W(v, ℓ)` together with the truncated `∇ᵀℓ` used to form it.
pub(crate) fn weber_with_gradient(v: &VectorField, ell: &VectorField) -> Result<(VectorField, Field)> {
    v.check_same(ell)?;
    if v.rank() != 1 {
        return Err(Error::Shape("weber needs vector fields".into()));
    }
    let grid = *v.grid();
    let d = grid.dim();
    let mut vs = forward_components(v);
    vs.iter_mut().for_each(truncate_spectrum);
    let vt = inverse_components(grid, 1, &vs);
    let mut ls = forward_components(ell);
    ls.iter_mut().for_each(truncate_spectrum);
    let mut grad = vec![Vec::new(); d * d];
    for i in 0..d {
        for j in 0..d {
            grad[i * d + j] = differentiate(&ls[j], i).inverse();
        }
    }
    let grad = Field::from_components(grid, 2, grad)?;
    let mut w = vt.clone();
    for i in 0..d {
        let out = w.comp_mut(i);
        for j in 0..d {
            let g = grad.entry(i, j);
            let vj = vt.comp(j);
            for node in 0..out.len() {
                out[node] += g[node] * vj[node];
            }
        }
    }
    Ok((project_truncated(&w), grad))
}

fn project_truncated(w: &Field) -> Field {
    let mut spec = forward_components(w);
    spec.iter_mut().for_each(truncate_spectrum);
    project_spectra(&mut spec);
    inverse_components(*w.grid(), 1, &spec)
}

pub fn weber(v: &VectorField, ell: &DisplacementMap) -> Result<VectorField> {
    Ok(weber_with_gradient(v, ell.disp())?.0)
}

/// Dealiased `(∇ᵀa) b`, i.e. `Σ_j ∂_i a_j b_j`, without projection.
pub fn gradient_transpose_product(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    a.check_same(b)?;
    let grid = *a.grid();
    let d = grid.dim();
    let mut asp = forward_components(a);
    asp.iter_mut().for_each(truncate_spectrum);
    let mut bsp = forward_components(b);
    bsp.iter_mut().for_each(truncate_spectrum);
    let bt = inverse_components(grid, 1, &bsp);
    let mut out = Field::zeros(grid, 1);
    for i in 0..d {
        for j in 0..d {
            let g = differentiate(&asp[j], i).inverse();
            let bj = bt.comp(j);
            let o = out.comp_mut(i);
            for node in 0..o.len() {
                o[node] += g[node] * bj[node];
            }
        }
    }
    let mut spec = forward_components(&out);
    spec.iter_mut().for_each(truncate_spectrum);
    Ok(inverse_components(grid, 1, &spec))
}

fn project(w: &Field) -> Field {
    let mut spec = forward_components(w);
    project_spectra(&mut spec);
    inverse_components(*w.grid(), 1, &spec)
}

/// Normalized residual of `P[(∇ᵀu)v] = −P[(∇ᵀv)u]`.
pub fn ibp_residual(u: &VectorField, v: &VectorField) -> Result<f64> {
    let a = project(&gradient_transpose_product(u, v)?);
    let b = project(&gradient_transpose_product(v, u)?);
    let r = a.add(&b).sup_norm();
    let gu = crate::spectral::spectral_gradient(u)?.max_abs();
    let gv = crate::spectral::spectral_gradient(v)?.max_abs();
    let scale = gu * v.sup_norm() + gv * u.sup_norm();
    Ok(if scale > 0.0 { r / scale } else { r })
}

/// `∂_axis W(v, ℓ)` assembled from first derivatives only:
/// `P[−(∇ᵀv) ∂ℓ + (∇ᵀℓ) ∂v] + P[∂v]`.
pub fn weber_derivative_ibp(v: &VectorField, ell: &VectorField, axis: usize) -> Result<VectorField> {
    let grid = *v.grid();
    let dv = derivative_of(v, axis);
    let dl = derivative_of(ell, axis);
    let t1 = gradient_transpose_product(v, &dl)?.scale(-1.0);
    let t2 = gradient_transpose_product(ell, &dv)?;
    let mut spec = forward_components(&dv);
    spec.iter_mut().for_each(truncate_spectrum);
    let dvt = inverse_components(grid, 1, &spec);
    Ok(project(&t1.add(&t2).add(&dvt)))
}

fn derivative_of(f: &Field, axis: usize) -> Field {
    let spec: Vec<SpectralField> =
        forward_components(f).iter().map(|s| differentiate(s, axis)).collect();
    inverse_components(*f.grid(), f.rank(), &spec)
}

/// Measured sides of the Lipschitz estimate for `W`.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzProbe {
    /// `‖W(v₁,ℓ₁) − W(v₂,ℓ₂)‖_{k,α}` for `k = 0, 1`.
    pub lhs: [f64; 2],
    /// `U/L · ‖ℓ₁ − ℓ₂‖_{k,α}` for `k = 0, 1`.
    pub rhs_ell: [f64; 2],
    /// `‖v₁ − v₂‖_{k,α}` for `k = 0, 1`.
    pub rhs_v: [f64; 2],
    /// `U = max_i ‖v_i‖_{1,α}`.
    pub u_bound: f64,
}

impl LipschitzProbe {
    /// Implied constant `lhs / (rhs_ell + rhs_v)` at order `k`.
    pub fn fitted_constant(&self, k: usize) -> Option<f64> {
        let r = self.rhs_ell[k] + self.rhs_v[k];
        (r > 0.0).then(|| self.lhs[k] / r)
    }
}

pub fn weber_lipschitz_probe(
    v1: &VectorField,
    v2: &VectorField,
    ell1: &DisplacementMap,
    ell2: &DisplacementMap,
    alpha: f64,
    pairs: &PairSet,
) -> Result<LipschitzProbe> {
    for ell in [ell1, ell2] {
        let g = ell.gradient_norm();
        if g >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "ell",
                reason: format!("|grad ell| = {g:.3} must be below 1"),
            });
        }
    }
    let grid = *v1.grid();
    let w1 = weber(v1, ell1)?;
    let w2 = weber(v2, ell2)?;
    let lhs = discrete_norms(&w1.sub(&w2), alpha, pairs)?;
    let dl = discrete_norms(&ell1.disp().sub(ell2.disp()), alpha, pairs)?;
    let dv = discrete_norms(&v1.sub(v2), alpha, pairs)?;
    let u_bound = discrete_norms(v1, alpha, pairs)?
        .holder(1)
        .max(discrete_norms(v2, alpha, pairs)?.holder(1));
    let scale = u_bound / grid.length();
    Ok(LipschitzProbe {
        lhs: [lhs.holder(0), lhs.holder(1)],
        rhs_ell: [scale * dl.holder(0), scale * dl.holder(1)],
        rhs_v: [dv.holder(0), dv.holder(1)],
        u_bound,
    })
}
