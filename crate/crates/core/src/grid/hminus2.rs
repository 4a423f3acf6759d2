use nalgebra::{DMatrix, DVector};

use super::{laplacian_at, Field, GridSpec};
use crate::{Error, Result};

/// Above this many free unknowns the dense SVD is replaced by conjugate
/// gradients on the normal equations.
const DENSE_LIMIT: usize = 512;
const CG_TOLERANCE: f64 = 1e-10;
const CG_MAX_ITERATIONS: usize = 10_000;

/// Discrete `H⁻²(Ōʰ;h)` norm
/// `sup_{v ∈ H₀²} (u, v)_{L²(Oʰ;h)} / ‖Δʰv‖_{L²(Oʰ;h)}`.
///
/// The unknowns of `v` are the nodes at distance `≥ 2h` from `∂O`. Writing
/// `A` for the map `v ↦ Δʰv|_{Oʰ}` and `g` for `u` on those nodes, the sup
/// equals `h^{N/2} √(gᵀ (AᵀA)⁻¹ g)`. Building the operator once per grid
/// and reusing it is much cheaper than calling [`hminus2_norm`] in a loop.
#[derive(Debug, Clone)]
pub struct HMinus2 {
    grid: GridSpec,
    free: Vec<usize>,
    interior: Vec<usize>,
    /// `Σ⁻¹Vᵀ` from the SVD of `A`, when small enough to keep dense.
    dense: Option<DMatrix<f64>>,
}

impl HMinus2 {
    pub fn new(grid: GridSpec) -> Self {
        let free = grid.free_indices();
        let interior = grid.interior_indices();
        let mut op = Self {
            grid,
            free,
            interior,
            dense: None,
        };
        if !op.free.is_empty() && op.free.len() <= DENSE_LIMIT {
            op.dense = Some(op.dense_factor());
        }
        op
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// True when `H₀²(Ōʰ;h)` is trivial and every norm is zero.
    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn norm(&self, u: &Field) -> Result<f64> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        self.norm_of_values(u.values())
    }

    /// Same as [`HMinus2::norm`] on a raw value slice over `Ōʰ`.
    pub fn norm_of_values(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.grid.len() {
            return Err(Error::GridMismatch);
        }
        if self.is_empty() {
            return Ok(0.0);
        }
        let g = DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| u[i]));
        let quad = match &self.dense {
            Some(b) => (b * &g).norm_squared(),
            None => g.dot(&self.solve_normal(&g)?),
        };
        let scale = self.grid.spacing().powf(self.grid.dim() as f64 / 2.0);
        Ok(scale * quad.max(0.0).sqrt())
    }

    /// `A x` as a vector over `Oʰ` (in `interior` order).
    fn apply(&self, x: &[f64], work: &mut [f64]) -> Vec<f64> {
        work.fill(0.0);
        for (&idx, &xi) in self.free.iter().zip(x) {
            work[idx] = xi;
        }
        self.interior
            .iter()
            .map(|&idx| laplacian_at(&self.grid, work, idx))
            .collect()
    }

    /// `Aᵀ y`; the zero-padded Dirichlet Laplacian is symmetric, so this is
    /// the same stencil read back on the free nodes.
    fn apply_transpose(&self, y: &[f64], work: &mut [f64]) -> Vec<f64> {
        work.fill(0.0);
        for (&idx, &yi) in self.interior.iter().zip(y) {
            work[idx] = yi;
        }
        self.free
            .iter()
            .map(|&idx| laplacian_at(&self.grid, work, idx))
            .collect()
    }

    fn dense_factor(&self) -> DMatrix<f64> {
        let n_free = self.free.len();
        let mut a = DMatrix::zeros(self.interior.len(), n_free);
        let mut work = vec![0.0; self.grid.len()];
        let mut e = vec![0.0; n_free];
        for j in 0..n_free {
            e[j] = 1.0;
            let col = self.apply(&e, &mut work);
            a.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        let svd = a.svd(false, true);
        let mut b = svd.v_t.expect("requested V^T");
        let cutoff = svd.singular_values.max() * 1e-13;
        for (mut row, &s) in b.row_iter_mut().zip(svd.singular_values.iter()) {
            let inv = if s > cutoff { 1.0 / s } else { 0.0 };
            row *= inv;
        }
        b
    }

    fn solve_normal(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        let n = g.len();
        let mut work = vec![0.0; self.grid.len()];
        let mut normal = |p: &DVector<f64>| {
            let ap = self.apply(p.as_slice(), &mut work);
            DVector::from_vec(self.apply_transpose(&ap, &mut work))
        };
        let g_norm = g.norm();
        let mut x = DVector::zeros(n);
        if g_norm == 0.0 {
            return Ok(x);
        }
        let mut r = g.clone();
        let mut p = r.clone();
        let mut rr = r.norm_squared();
        for _ in 0..CG_MAX_ITERATIONS {
            let q = normal(&p);
            let alpha = rr / p.dot(&q);
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &q, 1.0);
            let rr_next = r.norm_squared();
            if rr_next.sqrt() <= CG_TOLERANCE * g_norm {
                return Ok(x);
            }
            p = &r + (rr_next / rr) * &p;
            rr = rr_next;
        }
        log::warn!("H^-2 conjugate gradients stopped at {CG_MAX_ITERATIONS} iterations");
        Ok(x)
    }
}

/// One-shot discrete `H⁻²` norm; see [`HMinus2`].
pub fn hminus2_norm(u: &Field) -> Result<f64> {
    HMinus2::new(*u.grid()).norm(u)
}
