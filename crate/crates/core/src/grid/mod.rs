//! The discrete unit cube `Ōʰ = {0, h, …, 1}^N` with `h = 1/(M+1)`,
//! grid functions on it, the standard difference operators and the
//! `h`-weighted discrete norms.
//!
//! Nodes are addressed by a flat index in row-major (lexicographic) order
//! over the full closed grid, boundary layer included; the last axis varies
//! fastest. Axes are zero-based throughout the API.

mod hminus2;
mod quadrature;

pub use hminus2::{hminus2_norm, HMinus2};
pub use quadrature::gauss_legendre;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Boundary condition imposed on `c` (and on anything that inherits it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

impl BoundaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryKind::Dirichlet => "dirichlet",
            BoundaryKind::Neumann => "neumann",
        }
    }
}

impl std::str::FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(BoundaryKind::Dirichlet),
            "neumann" => Ok(BoundaryKind::Neumann),
            other => Err(Error::InvalidParameter(format!(
                "boundary condition `{other}` (expected dirichlet or neumann)"
            ))),
        }
    }
}

/// Uniform grid on the closed unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    cells_per_axis: usize,
    spacing: f64,
}

/// Build the grid with `cells_per_axis` interior points per axis.
pub fn build_grid(dim: usize, cells_per_axis: usize) -> Result<GridSpec> {
    GridSpec::new(dim, cells_per_axis)
}

impl GridSpec {
    pub fn new(dim: usize, cells_per_axis: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if cells_per_axis < 2 {
            return Err(Error::InvalidGrid(format!(
                "cells_per_axis must be at least 2, got {cells_per_axis}"
            )));
        }
        let total = (cells_per_axis + 2)
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;
        if total > 1 << 28 {
            return Err(Error::InvalidGrid(format!("{total} nodes is too many")));
        }
        Ok(Self {
            dim,
            cells_per_axis,
            spacing: 1.0 / (cells_per_axis as f64 + 1.0),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of nodes along one axis of `Ōʰ`, i.e. `M + 2`.
    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.cells_per_axis + 2
    }

    /// `|Ōʰ| = (M+2)^N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// `|Oʰ| = M^N`.
    pub fn interior_len(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    /// Node volume `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Flat-index stride of `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis().pow((self.dim - 1 - axis) as u32)
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            Err(Error::AxisOutOfRange {
                axis,
                dim: self.dim,
            })
        } else {
            Ok(())
        }
    }

    /// Flat index of a multi-index with entries in `0..=M+1`.
    pub fn index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim);
        let p = self.points_per_axis();
        multi.iter().fold(0, |acc, &i| {
            debug_assert!(i < p);
            acc * p + i
        })
    }

    /// Integer coordinate of node `idx` along `axis`.
    #[inline]
    pub fn coordinate(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.points_per_axis()
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        (0..self.dim).map(|k| self.coordinate(idx, k)).collect()
    }

    /// Physical position of node `idx`.
    pub fn position(&self, idx: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|k| self.coordinate(idx, k) as f64 * self.spacing)
            .collect()
    }

    /// True for nodes of `Oʰ`.
    #[inline]
    pub fn is_interior(&self, idx: usize) -> bool {
        let last = self.cells_per_axis + 1;
        (0..self.dim).all(|k| {
            let i = self.coordinate(idx, k);
            i != 0 && i != last
        })
    }

    /// True for nodes at distance at least `2h` from `∂O`: the unknowns of
    /// `H₀²(Ōʰ;h)` once both the value and the discrete normal derivative
    /// vanish on the boundary layer.
    pub fn is_free(&self, idx: usize) -> bool {
        let m = self.cells_per_axis;
        (0..self.dim).all(|k| {
            let i = self.coordinate(idx, k);
            i >= 2 && i + 1 < m + 1
        })
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_interior(i)).collect()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_interior(i)).collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_free(i)).collect()
    }

    /// Reflected node `m̄`: coordinate 0 moves to `h`, coordinate 1 to
    /// `1-h`, interior coordinates stay.
    pub fn reflect(&self, idx: usize) -> usize {
        let last = self.cells_per_axis + 1;
        let mut out = idx;
        for k in 0..self.dim {
            let i = self.coordinate(idx, k);
            let s = self.stride(k);
            if i == 0 {
                out += s;
            } else if i == last {
                out -= s;
            }
        }
        out
    }

    /// `|O ∖ Uʰ|` for the open subcube `Uʰ = (2h, 1-2h)^N`.
    pub fn exterior_measure(&self) -> f64 {
        let side = (1.0 - 4.0 * self.spacing).max(0.0);
        1.0 - side.powi(self.dim as i32)
    }

    /// Node positions along one axis.
    pub fn axis_nodes(&self) -> Vec<f64> {
        (0..self.points_per_axis())
            .map(|i| i as f64 * self.spacing)
            .collect()
    }
}

/// A real-valued function on `Ōʰ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "field value",
                t: f64::NAN,
                node,
            });
        }
        Ok(Self { grid, values })
    }

    /// Nodal sampling of `u`.
    pub fn from_fn(grid: GridSpec, mut u: impl FnMut(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|idx| {
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = grid.coordinate(idx, k) as f64 * grid.spacing();
                }
                u(&x)
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn map(&self, mut g: impl FnMut(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Field, mut g: impl FnMut(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| g(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A grid function defined only on part of `Ōʰ`; undefined nodes are
/// reported as `None` rather than filled with zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialField {
    grid: GridSpec,
    values: Vec<f64>,
    defined: Vec<bool>,
}

impl PartialField {
    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Option<f64> {
        self.defined[idx].then(|| self.values[idx])
    }

    pub fn is_defined(&self, idx: usize) -> bool {
        self.defined[idx]
    }

    /// `(index, value)` pairs over the defined nodes.
    pub fn iter_defined(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.defined)
            .enumerate()
            .filter_map(|(i, (&v, &d))| d.then_some((i, v)))
    }

    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    /// Completes to a full field, filling undefined nodes with `fill`.
    pub fn to_field(&self, fill: f64) -> Field {
        Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&self.defined)
                .map(|(&v, &d)| if d { v } else { fill })
                .collect(),
        )
    }
}

/// `∂ₖʰu(m) = (u(m + h eₖ) - u(m)) / h`, defined where `m + h eₖ ∈ Ōʰ`.
pub fn forward_diff(u: &Field, axis: usize) -> Result<PartialField> {
    let g = *u.grid();
    g.check_axis(axis)?;
    let s = g.stride(axis);
    let last = g.cells_per_axis() + 1;
    let inv_h = 1.0 / g.spacing();
    let n = g.len();
    let mut values = vec![0.0; n];
    let mut defined = vec![false; n];
    for idx in 0..n {
        if g.coordinate(idx, axis) < last {
            values[idx] = (u.values[idx + s] - u.values[idx]) * inv_h;
            defined[idx] = true;
        }
    }
    Ok(PartialField {
        grid: g,
        values,
        defined,
    })
}

/// `(u(m) - u(m - h eₖ)) / h`, defined where `m - h eₖ ∈ Ōʰ`.
pub fn backward_diff(u: &Field, axis: usize) -> Result<PartialField> {
    let g = *u.grid();
    g.check_axis(axis)?;
    let s = g.stride(axis);
    let inv_h = 1.0 / g.spacing();
    let n = g.len();
    let mut values = vec![0.0; n];
    let mut defined = vec![false; n];
    for idx in 0..n {
        if g.coordinate(idx, axis) > 0 {
            values[idx] = (u.values[idx] - u.values[idx - s]) * inv_h;
            defined[idx] = true;
        }
    }
    Ok(PartialField {
        grid: g,
        values,
        defined,
    })
}

/// Five-point (in general `2N+1`-point) Laplacian at an interior node.
#[inline]
pub(crate) fn laplacian_at(g: &GridSpec, u: &[f64], idx: usize) -> f64 {
    let centre = u[idx];
    let mut acc = 0.0;
    for k in 0..g.dim() {
        let s = g.stride(k);
        acc += u[idx + s] - 2.0 * centre + u[idx - s];
    }
    acc / (g.spacing() * g.spacing())
}

/// `Δʰu` on `Oʰ`.
pub fn laplacian(u: &Field) -> PartialField {
    let g = *u.grid();
    let n = g.len();
    let mut values = vec![0.0; n];
    let mut defined = vec![false; n];
    for idx in 0..n {
        if g.is_interior(idx) {
            values[idx] = laplacian_at(&g, &u.values, idx);
            defined[idx] = true;
        }
    }
    PartialField {
        grid: g,
        values,
        defined,
    }
}

/// `∂_νʰu(m) = (u(m) - u(m̄)) / h` on `∂ʰOʰ`.
pub fn normal_diff(u: &Field) -> PartialField {
    let g = *u.grid();
    let n = g.len();
    let inv_h = 1.0 / g.spacing();
    let mut values = vec![0.0; n];
    let mut defined = vec![false; n];
    for idx in 0..n {
        if !g.is_interior(idx) {
            values[idx] = (u.values[idx] - u.values[g.reflect(idx)]) * inv_h;
            defined[idx] = true;
        }
    }
    PartialField {
        grid: g,
        values,
        defined,
    }
}

/// Reflection `m ↦ m̄` on multi-indices.
pub fn reflect(grid: &GridSpec, multi: &[usize]) -> Vec<usize> {
    grid.multi_index(grid.reflect(grid.index(multi)))
}

/// Node subset over which a discrete norm is taken.
#[derive(Debug, Clone, Copy)]
pub enum Subset<'a> {
    Interior,
    Full,
    Custom(&'a [usize]),
}

impl Subset<'_> {
    fn for_each(&self, g: &GridSpec, mut visit: impl FnMut(usize)) {
        match self {
            Subset::Full => (0..g.len()).for_each(visit),
            Subset::Interior => (0..g.len()).filter(|&i| g.is_interior(i)).for_each(visit),
            Subset::Custom(idx) => idx.iter().for_each(|&i| visit(i)),
        }
    }
}

/// `‖u‖_{L^p(Dʰ;h)} = (h^N Σ |u|^p)^{1/p}`, or the maximum for `p = ∞`.
pub fn lp_norm(u: &Field, p: f64, subset: Subset<'_>) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "L^p norm needs p >= 1, got {p}"
        )));
    }
    let g = u.grid();
    if p.is_infinite() {
        let mut m = 0.0_f64;
        subset.for_each(g, |i| m = m.max(u.values[i].abs()));
        return Ok(m);
    }
    let mut acc = 0.0;
    if p == 2.0 {
        subset.for_each(g, |i| acc += u.values[i] * u.values[i]);
        return Ok((g.cell_volume() * acc).sqrt());
    }
    subset.for_each(g, |i| acc += u.values[i].abs().powf(p));
    Ok((g.cell_volume() * acc).powf(1.0 / p))
}

/// `(u, v)_{L²(Dʰ;h)}`.
pub fn inner_product(u: &Field, v: &Field, subset: Subset<'_>) -> Result<f64> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let mut acc = 0.0;
    subset.for_each(u.grid(), |i| acc += u.values[i] * v.values[i]);
    Ok(u.grid().cell_volume() * acc)
}

/// `|u|_{H¹(Ōʰ;h)}`: square root of `h^{N-2}` times the sum of squared
/// differences over axis-adjacent node pairs.
pub fn h1_seminorm(u: &Field) -> f64 {
    let g = u.grid();
    let last = g.cells_per_axis() + 1;
    let mut acc = 0.0;
    for k in 0..g.dim() {
        let s = g.stride(k);
        for idx in 0..g.len() {
            if g.coordinate(idx, k) < last {
                let d = u.values[idx + s] - u.values[idx];
                acc += d * d;
            }
        }
    }
    (g.spacing().powi(g.dim() as i32 - 2) * acc).sqrt()
}

/// The same seminorm for a partially defined function; only pairs whose
/// two nodes are both defined contribute.
pub fn h1_seminorm_partial(u: &PartialField) -> f64 {
    let g = u.grid();
    let last = g.cells_per_axis() + 1;
    let mut acc = 0.0;
    for k in 0..g.dim() {
        let s = g.stride(k);
        for idx in 0..g.len() {
            if g.coordinate(idx, k) < last && u.defined[idx] && u.defined[idx + s] {
                let d = u.values[idx + s] - u.values[idx];
                acc += d * d;
            }
        }
    }
    (g.spacing().powi(g.dim() as i32 - 2) * acc).sqrt()
}

/// `‖u‖_{H¹(Ōʰ;h)}`.
pub fn h1_norm(u: &Field) -> f64 {
    let semi = h1_seminorm(u);
    let l2 = lp_norm(u, 2.0, Subset::Full).expect("p = 2 is valid");
    (semi * semi + l2 * l2).sqrt()
}

/// Largest deviation from the discrete chain rule
/// `∂ₖʰ(g(u)) = ∂ₖʰu ∫₀¹ g′(u + τ h ∂ₖʰu) dτ`, with the τ-integral done by
/// Gauss–Legendre quadrature of the given order.
pub fn chain_rule_residual(
    g: impl Fn(f64) -> f64,
    g_prime: impl Fn(f64) -> f64,
    u: &Field,
    axis: usize,
    quad_order: usize,
) -> Result<f64> {
    if quad_order == 0 {
        return Err(Error::InvalidParameter(
            "quadrature order must be positive".into(),
        ));
    }
    let grid = *u.grid();
    let du = forward_diff(u, axis)?;
    let gu = u.map(&g);
    let dgu = forward_diff(&gu, axis)?;
    let (nodes, weights) = gauss_legendre(quad_order);
    let h = grid.spacing();
    let mut worst = 0.0_f64;
    for (idx, d) in du.iter_defined() {
        let base = u.values[idx];
        let avg: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&tau, &w)| w * g_prime(base + tau * h * d))
            .sum();
        let lhs = dgu.values[idx];
        worst = worst.max((lhs - d * avg).abs());
    }
    Ok(worst)
}
