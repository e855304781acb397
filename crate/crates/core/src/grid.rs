//! Periodic grid on the torus `[0, L)^d` and nodal fields.
//!
//! Nodes are laid out with axis 0 varying fastest: the flat node index of
//! `(i0, i1, i2)` is `i0 + n * (i1 + n * i2)`. Fields store one contiguous
//! array per component. Rank-2 components are indexed `i * dim + j`; for
//! gradients this is `(∇ᵀw)_{ij} = ∂_i w_j`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    length: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n must be even and >= 8, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    /// Two-dimensional grid of side `2π`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(2, n, std::f64::consts::TAU)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Number of components of a field of the given tensor rank.
    pub fn components(&self, rank: usize) -> usize {
        self.dim.pow(rank as u32)
    }

    /// Per-axis integer indices of a flat node index.
    pub fn unflatten(&self, node: usize) -> [usize; 3] {
        let n = self.n;
        let mut idx = [0usize; 3];
        let mut rest = node;
        for slot in idx.iter_mut().take(self.dim) {
            *slot = rest % n;
            rest /= n;
        }
        idx
    }

    pub fn flatten(&self, idx: [usize; 3]) -> usize {
        let n = self.n;
        match self.dim {
            2 => idx[0] + n * idx[1],
            _ => idx[0] + n * (idx[1] + n * idx[2]),
        }
    }

    /// Physical coordinates of a node; unused trailing entries are zero.
    pub fn position(&self, node: usize) -> [f64; 3] {
        let idx = self.unflatten(node);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 * h;
        }
        x
    }

    /// Flat `dim`-strided list of all node positions.
    pub fn positions(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(self.nodes() * d);
        for node in 0..self.nodes() {
            let x = self.position(node);
            out.extend_from_slice(&x[..d]);
        }
        out
    }

    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length;
        let r = x.rem_euclid(l);
        if r >= l {
            0.0
        } else {
            r
        }
    }

    /// Shortest periodic displacement `b - a` along one axis.
    pub fn periodic_delta(&self, a: f64, b: f64) -> f64 {
        let l = self.length;
        let d = (b - a).rem_euclid(l);
        if d > 0.5 * l {
            d - l
        } else {
            d
        }
    }

    /// Euclidean distance on the torus.
    pub fn torus_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| self.periodic_delta(a[i], b[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_shape(&self, other: &TorusGrid) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

/// Nodal samples of a scalar (rank 0), vector (rank 1) or matrix (rank 2)
/// field on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    rank: usize,
    comps: Vec<Vec<f64>>,
}

pub type ScalarField = Field;
pub type VectorField = Field;
pub type TensorField = Field;

impl Field {
    pub fn zeros(grid: TorusGrid, rank: usize) -> Self {
        let comps = vec![vec![0.0; grid.nodes()]; grid.components(rank)];
        Self { grid, rank, comps }
    }

    pub fn from_components(grid: TorusGrid, rank: usize, comps: Vec<Vec<f64>>) -> Result<Self> {
        if rank > 2 {
            return Err(Error::Shape(format!("rank {rank} not supported")));
        }
        if comps.len() != grid.components(rank) {
            return Err(Error::Shape(format!(
                "rank {rank} field on dim {} needs {} components, got {}",
                grid.dim(),
                grid.components(rank),
                comps.len()
            )));
        }
        if let Some(c) = comps.iter().find(|c| c.len() != grid.nodes()) {
            return Err(Error::Shape(format!(
                "component has {} values, grid has {} nodes",
                c.len(),
                grid.nodes()
            )));
        }
        Ok(Self { grid, rank, comps })
    }

    pub fn scalar(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        Self::from_components(grid, 0, vec![values])
    }

    pub fn vector(grid: TorusGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_components(grid, 1, comps)
    }

    /// Samples `f(x)` at every node. `f` writes `dim^rank` values.
    pub fn from_fn<F>(grid: TorusGrid, rank: usize, mut f: F) -> Self
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let nc = grid.components(rank);
        let mut out = Self::zeros(grid, rank);
        let mut buf = vec![0.0; nc];
        for node in 0..grid.nodes() {
            let x = grid.position(node);
            f(&x[..grid.dim()], &mut buf);
            for (c, v) in buf.iter().enumerate() {
                out.comps[c][node] = *v;
            }
        }
        out
    }

    /// Spatially uniform vector field.
    pub fn constant_vector(grid: TorusGrid, value: &[f64]) -> Self {
        let comps = (0..grid.dim()).map(|i| vec![value[i]; grid.nodes()]).collect();
        Self { grid, rank: 1, comps }
    }

    /// Interleaved values in the snapshot layout (component fastest).
    pub fn to_interleaved(&self) -> Vec<f64> {
        let nc = self.comps.len();
        let mut out = vec![0.0; nc * self.grid.nodes()];
        for (c, comp) in self.comps.iter().enumerate() {
            for (node, v) in comp.iter().enumerate() {
                out[node * nc + c] = *v;
            }
        }
        out
    }

    pub fn from_interleaved(grid: TorusGrid, rank: usize, values: &[f64]) -> Result<Self> {
        let nc = grid.components(rank);
        if values.len() != nc * grid.nodes() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                nc * grid.nodes(),
                values.len()
            )));
        }
        let mut out = Self::zeros(grid, rank);
        for (i, v) in values.iter().enumerate() {
            out.comps[i % nc][i / nc] = *v;
        }
        Ok(out)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn num_components(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    /// Component `(i, j)` of a rank-2 field.
    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[i * self.grid.dim() + j]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Value of every component at one node.
    pub fn at(&self, node: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[node]).collect()
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if !self.grid.same_shape(&other.grid) || self.rank != other.rank {
            return Err(Error::Shape(format!(
                "fields differ: rank {} n {} vs rank {} n {}",
                self.rank,
                self.grid.n(),
                other.rank,
                other.grid.n()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let comps = self.comps.iter().map(|c| c.iter().map(|v| f(*v)).collect()).collect();
        Field { grid: self.grid, rank: self.rank, comps }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.comps.len(), other.comps.len());
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            .collect();
        Field { grid: self.grid, rank: self.rank, comps }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Field) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    /// Pointwise Euclidean (Frobenius for rank 2) magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.nodes()];
        for comp in &self.comps {
            for (o, v) in out.iter_mut().zip(comp) {
                *o += v * v;
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        out
    }

    /// Sup over nodes of the pointwise magnitude.
    pub fn sup_norm(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    /// Root-mean-square of the pointwise magnitude.
    pub fn rms(&self) -> f64 {
        let n = self.grid.nodes() as f64;
        let s: f64 = self.comps.iter().flat_map(|c| c.iter()).map(|v| v * v).sum();
        (s / n).sqrt()
    }

    /// Largest absolute value of any component.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.grid.nodes() as f64;
        self.comps.iter().map(|c| c.iter().sum::<f64>() / n).collect()
    }

    /// Largest pointwise operator 2-norm of a rank-2 field.
    pub fn sup_operator_norm(&self) -> f64 {
        assert_eq!(self.rank, 2, "operator norm needs a rank-2 field");
        let d = self.grid.dim();
        if d == 2 {
            let (a, b, c, e) = (&self.comps[0], &self.comps[1], &self.comps[2], &self.comps[3]);
            let mut best: f64 = 0.0;
            for p in 0..a.len() {
                let f = a[p] * a[p] + b[p] * b[p] + c[p] * c[p] + e[p] * e[p];
                let det = a[p] * e[p] - b[p] * c[p];
                let s2 = 0.5 * (f + (f * f - 4.0 * det * det).max(0.0).sqrt());
                best = best.max(s2);
            }
            return best.sqrt();
        }
        let mut m = [[0.0; 3]; 3];
        let mut best: f64 = 0.0;
        for node in 0..self.grid.nodes() {
            for i in 0..d {
                for j in 0..d {
                    m[i][j] = self.comps[i * d + j][node];
                }
            }
            best = best.max(crate::linalg::operator_norm(&m, d));
        }
        best
    }

    /// Transpose of a rank-2 field.
    pub fn transpose(&self) -> Field {
        assert_eq!(self.rank, 2);
        let d = self.grid.dim();
        let mut comps = self.comps.clone();
        for i in 0..d {
            for j in 0..d {
                comps[j * d + i] = self.comps[i * d + j].clone();
            }
        }
        Field { grid: self.grid, rank: 2, comps }
    }

    /// Injection onto a coarser nested grid (keeps the shared nodes).
    pub fn restrict(&self, coarse: TorusGrid) -> Result<Field> {
        if coarse.dim() != self.dim() || self.grid.n() % coarse.n() != 0 {
            return Err(Error::Shape("grids are not nested".into()));
        }
        let step = self.grid.n() / coarse.n();
        let mut out = Field::zeros(coarse, self.rank);
        for node in 0..coarse.nodes() {
            let mut idx = coarse.unflatten(node);
            for a in 0..coarse.dim() {
                idx[a] *= step;
            }
            let fine = self.grid.flatten(idx);
            for c in 0..self.comps.len() {
                out.comps[c][node] = self.comps[c][fine];
            }
        }
        Ok(out)
    }
}
