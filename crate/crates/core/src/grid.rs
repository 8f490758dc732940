//! Structured box grids, node-indexed fields and their discrete norms.
//!
//! Only interior nodes carry unknowns; boundary values are identically zero
//! and never stored. Interior nodes are numbered row-major (the last axis
//! varies fastest). Integrals use the rectangle rule on interior nodes,
//! `∫ v ≈ Σ v_i · Π h_k`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "GridRepr"))]
pub struct Grid {
    dim: usize,
    cells: [usize; MAX_DIM],
    side: [f64; MAX_DIM],
}

impl Grid {
    /// Box `[0, side_0] × … × [0, side_{dim-1}]` with `cells[k]` cells along
    /// axis `k`. At least two cells per axis, i.e. at least one interior node.
    pub fn new(dim: usize, cells: &[usize], side: &[f64]) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::domain("grid dimension must be 2 or 3"));
        }
        if cells.len() != dim || side.len() != dim {
            return Err(Error::domain("cells and side lengths need one entry per axis"));
        }
        let mut c = [1usize; MAX_DIM];
        let mut s = [1.0; MAX_DIM];
        for k in 0..dim {
            if cells[k] < 2 {
                return Err(Error::domain("each axis needs at least 2 cells"));
            }
            if !(side[k] > 0.0) || !side[k].is_finite() {
                return Err(Error::domain("side lengths must be positive and finite"));
            }
            c[k] = cells[k];
            s[k] = side[k];
        }
        Ok(Grid { dim, cells: c, side: s })
    }

    /// Unit box with the same cell count on every axis.
    pub fn uniform(dim: usize, cells: usize) -> Result<Self> {
        Self::new(dim, &[cells; MAX_DIM][..dim.min(MAX_DIM)], &[1.0; MAX_DIM][..dim.min(MAX_DIM)])
    }

    /// Cube of side `side` with `cells` cells per axis.
    pub fn cube(dim: usize, cells: usize, side: f64) -> Result<Self> {
        Self::new(dim, &[cells; MAX_DIM][..dim.min(MAX_DIM)], &[side; MAX_DIM][..dim.min(MAX_DIM)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn side_lengths(&self) -> &[f64] {
        &self.side[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.side[axis] / self.cells[axis] as f64
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|k| self.spacing(k)).fold(0.0, f64::max)
    }

    /// Interior node count along `axis`.
    pub fn interior_count(&self, axis: usize) -> usize {
        if axis < self.dim {
            self.cells[axis] - 1
        } else {
            1
        }
    }

    /// Total number of interior nodes (unknowns).
    pub fn len(&self) -> usize {
        (0..self.dim).map(|k| self.interior_count(k)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of one node, `Π h_k`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|k| self.spacing(k)).product()
    }

    /// Volume of the box.
    pub fn volume(&self) -> f64 {
        self.side_lengths().iter().product()
    }

    /// Linear-index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        ((axis + 1)..self.dim).map(|k| self.interior_count(k)).product()
    }

    /// Zero-based interior multi-index of a node.
    pub fn multi_index(&self, mut index: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        for k in (0..self.dim).rev() {
            let n = self.interior_count(k);
            out[k] = index % n;
            index /= n;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize; MAX_DIM]) -> usize {
        let mut idx = 0;
        for k in 0..self.dim {
            idx = idx * self.interior_count(k) + multi[k];
        }
        idx
    }

    /// Physical coordinates of an interior node; unused axes are zero.
    pub fn coords(&self, index: usize) -> [f64; MAX_DIM] {
        let multi = self.multi_index(index);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            x[k] = (multi[k] + 1) as f64 * self.spacing(k);
        }
        x
    }

    /// Coordinates of a node given by its full multi-index, where `0` and
    /// `cells[k]` are boundary positions.
    pub fn node_coords(&self, full: &[usize; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            x[k] = full[k] as f64 * self.spacing(k);
        }
        x
    }

    /// Same shape, every cell count doubled.
    pub fn refined(&self) -> Grid {
        let mut g = *self;
        for k in 0..self.dim {
            g.cells[k] *= 2;
        }
        g
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct GridRepr {
    dim: usize,
    cells: [usize; MAX_DIM],
    side: [f64; MAX_DIM],
}

#[cfg(feature = "serde")]
impl TryFrom<GridRepr> for Grid {
    type Error = Error;

    fn try_from(g: GridRepr) -> Result<Self> {
        let dim = g.dim.min(MAX_DIM);
        Grid::new(g.dim, &g.cells[..dim], &g.side[..dim])
    }
}

/// Real values on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "FieldRepr"))]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct FieldRepr {
    grid: Grid,
    values: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<FieldRepr> for ScalarField {
    type Error = Error;

    fn try_from(f: FieldRepr) -> Result<Self> {
        ScalarField::new(f.grid, f.values)
    }
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("field values must be finite"));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at interior node coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64; MAX_DIM]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub(crate) fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Σ v_i · Π h_k`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Weighted pairing `Σ u_i v_i · Π h_k`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(dot(&self.values, &other.values) * self.grid.cell_volume())
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `T_k(s) = max(-k, min(s, k))`.
pub fn truncate_t(s: f64, k: f64) -> f64 {
    s.min(k).max(-k)
}

/// `G_k(s) = (|s| - k)^+ sign(s)`, so that `T_k + G_k` is the identity.
pub fn truncate_g(s: f64, k: f64) -> f64 {
    s - truncate_t(s, k)
}

pub fn truncate_t_field(field: &ScalarField, k: f64) -> ScalarField {
    field.map(|v| truncate_t(v, k))
}

pub fn truncate_g_field(field: &ScalarField, k: f64) -> ScalarField {
    field.map(|v| truncate_g(v, k))
}

/// Discrete `L^p` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(field: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::domain("L^p norm needs p >= 1"));
    }
    if p.is_infinite() {
        return Ok(field.max_abs());
    }
    let w = field.grid.cell_volume();
    let sum: f64 = if p == 1.0 {
        field.values.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        field.values.iter().map(|v| v * v).sum()
    } else {
        field.values.iter().map(|v| math::pow(v.abs(), p)).sum()
    };
    Ok(math::pow(sum * w, 1.0 / p))
}

/// `∫ |∇v|²` with forward differences across every edge, boundary edges
/// included (boundary values are zero).
pub fn dirichlet_energy(field: &ScalarField) -> f64 {
    weighted_dirichlet_energy(field, |_, _| 1.0)
}

/// `Σ_edges w(v_i, v_j) (v_i - v_j)² / h² · h^d`, where the boundary end of
/// a boundary edge carries the value 0 and is passed as the second argument.
pub fn weighted_dirichlet_energy(field: &ScalarField, w: impl Fn(f64, f64) -> f64) -> f64 {
    let grid = &field.grid;
    let v = &field.values;
    let mut total = 0.0;
    for axis in 0..grid.dim() {
        let h = grid.spacing(axis);
        let n = grid.interior_count(axis);
        let stride = grid.stride(axis);
        let mut axis_sum = 0.0;
        for i in 0..v.len() {
            let pos = (i / stride) % n;
            // edge from the previous node (or the boundary) to node i
            let prev = if pos == 0 { 0.0 } else { v[i - stride] };
            let d = v[i] - prev;
            axis_sum += w(v[i], prev) * d * d;
            if pos == n - 1 {
                axis_sum += w(v[i], 0.0) * v[i] * v[i];
            }
        }
        total += axis_sum / (h * h);
    }
    total * grid.cell_volume()
}

/// `(∫ |∇v|²)^{1/2}`.
pub fn h1_seminorm(field: &ScalarField) -> f64 {
    math::sqrt(dirichlet_energy(field))
}

/// Interior nodes at distance at least `margin` from the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSubdomain {
    grid: Grid,
    margin: f64,
    mask: Vec<bool>,
}

impl InteriorSubdomain {
    pub fn new(grid: Grid, margin: f64) -> Result<Self> {
        if !(margin >= 0.0) {
            return Err(Error::domain("interior margin must be nonnegative"));
        }
        let eps = 1e-12;
        let mask: Vec<bool> = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i);
                (0..grid.dim()).all(|k| {
                    x[k] >= margin - eps && x[k] <= grid.side_lengths()[k] - margin + eps
                })
            })
            .collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::domain("interior subdomain contains no grid node"));
        }
        Ok(InteriorSubdomain { grid, margin, mask })
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn node_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn interior_min(field: &ScalarField, sub: &InteriorSubdomain) -> Result<f64> {
    if field.grid != sub.grid {
        return Err(Error::GridMismatch {
            expected: sub.grid.len(),
            found: field.len(),
        });
    }
    field
        .values
        .iter()
        .zip(&sub.mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .reduce(f64::min)
        .ok_or_else(|| Error::domain("interior subdomain is empty"))
}
