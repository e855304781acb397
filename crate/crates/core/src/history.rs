//! Time-indexed velocity slices on a uniform time grid.

use crate::error::{Error, Result};
use crate::grid::{TorusGrid, VectorField};
use crate::snapshot::Snapshot;
use crate::spectral::divergence;

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityHistory {
    grid: TorusGrid,
    /// Time of slice 0.
    t0: f64,
    dt: f64,
    slices: Vec<VectorField>,
}

impl VelocityHistory {
    pub fn new(t0: f64, dt: f64, slices: Vec<VectorField>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Shape("history needs at least one slice".into()))?;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter { name: "dt", reason: format!("{dt} must be positive") });
        }
        let grid = *first.grid();
        for s in &slices {
            if s.rank() != 1 || !s.grid().same_shape(&grid) {
                return Err(Error::Shape("history slices must be vector fields on one grid".into()));
            }
        }
        Ok(Self { grid, t0, dt, slices })
    }

    /// `steps + 1` copies of `u0`.
    pub fn constant(u0: &VectorField, t0: f64, dt: f64, steps: usize) -> Result<Self> {
        Self::new(t0, dt, vec![u0.clone(); steps + 1])
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Number of time steps (slices minus one).
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn slice(&self, k: usize) -> &VectorField {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[VectorField] {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut [VectorField] {
        &mut self.slices
    }

    pub fn last(&self) -> &VectorField {
        self.slices.last().expect("non-empty")
    }

    pub fn into_slices(self) -> Vec<VectorField> {
        self.slices
    }

    /// Slice nearest to time `t`.
    pub fn at_time(&self, t: f64) -> &VectorField {
        let k = ((t - self.t0) / self.dt).round().clamp(0.0, self.steps() as f64) as usize;
        &self.slices[k]
    }

    /// Appends `other` without duplicating the shared endpoint.
    pub fn extend(&mut self, other: VelocityHistory) -> Result<()> {
        if (other.t0 - self.t_final()).abs() > 1e-9 * self.dt.max(1.0) || (other.dt - self.dt).abs() > 1e-12 {
            return Err(Error::Shape("histories do not join".into()));
        }
        self.slices.extend(other.slices.into_iter().skip(1));
        Ok(())
    }

    /// `sup_t ‖self(t) − other(t)‖∞`.
    pub fn sup_distance(&self, other: &VelocityHistory) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.sub(b).sup_norm())
            .fold(0.0, f64::max)
    }

    /// `sup_t ‖u(t)‖∞` (pointwise Euclidean magnitude).
    pub fn sup_norm(&self) -> f64 {
        self.slices.iter().map(|s| s.sup_norm()).fold(0.0, f64::max)
    }

    pub fn max_divergence(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| divergence(s).map(|d| d.max_abs()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    pub fn snapshots(&self) -> Vec<Snapshot> {
        self.slices
            .iter()
            .enumerate()
            .map(|(k, s)| Snapshot::new(s.clone(), self.time(k)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;

    #[test]
    fn extend_joins_windows() {
        let g = TorusGrid::square(8).unwrap();
        let a = Field::constant_vector(g, &[1.0, 0.0]);
        let mut h = VelocityHistory::constant(&a, 0.0, 0.1, 3).unwrap();
        let h2 = VelocityHistory::constant(&a.scale(2.0), 0.3, 0.1, 2).unwrap();
        h.extend(h2).unwrap();
        assert_eq!(h.len(), 6);
        assert!((h.t_final() - 0.5).abs() < 1e-12);
        assert_eq!(h.slice(4).comp(0)[0], 2.0);
        let bad = VelocityHistory::constant(&a, 0.7, 0.1, 2).unwrap();
        assert!(h.extend(bad).is_err());
    }
}
