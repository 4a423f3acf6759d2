//! Cell projection `Pʰ`, the piecewise-constant spline `Πʰ` and the
//! piecewise polyaffine spline `Λʰ`, together with exact `L²(O)` integrals
//! of the splines and the measured interpolation estimates.
//!
//! `Πʰu` is constant on the dual cells `(m + (−h/2, h/2)^N) ∩ O`; `Λʰu` is
//! multilinear on the primal cells `m + [0, h]^N`. On each of the `2^N`
//! half-cells of a primal cell both are polynomial, so a tensor Gauss rule
//! over half-cells integrates any polynomial combination of them exactly.

use crate::grid::{
    forward_diff, gauss_legendre, h1_seminorm, h1_seminorm_partial, laplacian, lp_norm, Field,
    GridSpec, Subset,
};
use crate::{Error, Result};

/// Which spline a [`CellFunction`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    PiecewiseConstant,
    Polyaffine,
}

/// A grid function extended to all of `Ō`.
#[derive(Debug, Clone)]
pub struct CellFunction {
    source: Field,
    kind: CellKind,
}

impl CellFunction {
    pub fn piecewise_constant(source: Field) -> Self {
        Self {
            source,
            kind: CellKind::PiecewiseConstant,
        }
    }

    pub fn polyaffine(source: Field) -> Self {
        Self {
            source,
            kind: CellKind::Polyaffine,
        }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn source(&self) -> &Field {
        &self.source
    }

    pub fn grid(&self) -> &GridSpec {
        self.source.grid()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            CellKind::PiecewiseConstant => pc_eval(&self.source, x),
            CellKind::Polyaffine => pa_eval(&self.source, x),
        }
    }
}

fn check_point(grid: &GridSpec, x: &[f64]) -> Result<()> {
    if x.len() != grid.dim() || x.iter().any(|&xi| !(0.0..=1.0).contains(&xi)) {
        return Err(Error::OutOfDomain(x.to_vec()));
    }
    Ok(())
}

/// Index of the node owning coordinate `x` under `Πʰ`; a point on a face
/// between two dual cells goes to the smaller node.
#[inline]
fn owner(grid: &GridSpec, x: f64) -> usize {
    let last = grid.cells_per_axis() + 1;
    let i = (x / grid.spacing() - 0.5).ceil();
    (i.max(0.0) as usize).min(last)
}

/// Primal cell containing `x` and the local coordinate in `[0, 1]`; `x = 1`
/// belongs to the last cell.
#[inline]
fn primal_cell(grid: &GridSpec, x: f64) -> (usize, f64) {
    let s = x / grid.spacing();
    let l = (s.floor().max(0.0) as usize).min(grid.cells_per_axis());
    (l, (s - l as f64).clamp(0.0, 1.0))
}

/// `Πʰu(x)`.
pub fn pc_eval(u: &Field, x: &[f64]) -> Result<f64> {
    let g = u.grid();
    check_point(g, x)?;
    let idx = x
        .iter()
        .enumerate()
        .map(|(k, &xk)| owner(g, xk) * g.stride(k))
        .sum();
    Ok(u.get(idx))
}

/// `Λʰu(x)`.
pub fn pa_eval(u: &Field, x: &[f64]) -> Result<f64> {
    let g = u.grid();
    check_point(g, x)?;
    let cells: Vec<(usize, f64)> = x.iter().map(|&xk| primal_cell(g, xk)).collect();
    Ok(multilinear(g, u.values(), &cells))
}

/// `Σ_corners u(corner) ∏ b_{l_k}(r_k)` with `b₀ = 1 − r`, `b₁ = r`.
fn multilinear(g: &GridSpec, u: &[f64], cells: &[(usize, f64)]) -> f64 {
    let n = g.dim();
    let mut acc = 0.0;
    for corner in 0..1usize << n {
        let mut w = 1.0;
        let mut idx = 0;
        for (k, &(l, r)) in cells.iter().enumerate() {
            let bit = (corner >> k) & 1;
            w *= if bit == 1 { r } else { 1.0 - r };
            idx += (l + bit) * g.stride(k);
        }
        if w != 0.0 {
            acc += w * u[idx];
        }
    }
    acc
}

/// `∂ⱼΛʰu(x)` inside a primal cell.
fn multilinear_partial(g: &GridSpec, u: &[f64], cells: &[(usize, f64)], axis: usize) -> f64 {
    let n = g.dim();
    let mut acc = 0.0;
    for corner in 0..1usize << n {
        let mut w = 1.0;
        let mut idx = 0;
        for (k, &(l, r)) in cells.iter().enumerate() {
            let bit = (corner >> k) & 1;
            w *= match (k == axis, bit) {
                (true, 1) => 1.0,
                (true, _) => -1.0,
                (false, 1) => r,
                (false, _) => 1.0 - r,
            };
            idx += (l + bit) * g.stride(k);
        }
        acc += w * u[idx];
    }
    acc / g.spacing()
}

/// `Pʰu(m)`: the mean of `u` over the clipped dual cell of `m`, by midpoint
/// quadrature on `quad_refine^N` subcells.
pub fn project(u: impl Fn(&[f64]) -> f64, grid: &GridSpec, quad_refine: usize) -> Result<Field> {
    if quad_refine == 0 {
        return Err(Error::InvalidParameter(
            "quad_refine must be positive".into(),
        ));
    }
    let n = grid.dim();
    let h = grid.spacing();
    let q = quad_refine;
    // Midpoints of the subintervals of each clipped dual cell, per node.
    let axis_points: Vec<Vec<f64>> = (0..grid.points_per_axis())
        .map(|i| {
            let lo = ((i as f64 - 0.5) * h).max(0.0);
            let hi = ((i as f64 + 0.5) * h).min(1.0);
            let w = (hi - lo) / q as f64;
            (0..q).map(|j| lo + (j as f64 + 0.5) * w).collect()
        })
        .collect();
    let total_sub = q.pow(n as u32);
    let mut values = Vec::with_capacity(grid.len());
    let mut x = vec![0.0; n];
    for idx in 0..grid.len() {
        let mut acc = 0.0;
        for sub in 0..total_sub {
            let mut rest = sub;
            for k in (0..n).rev() {
                x[k] = axis_points[grid.coordinate(idx, k)][rest % q];
                rest /= q;
            }
            let s = u(&x);
            if !s.is_finite() {
                return Err(Error::NonFinite {
                    what: "projected sample",
                    t: 0.0,
                    node: idx,
                });
            }
            acc += s;
        }
        values.push(acc / total_sub as f64);
    }
    Ok(Field::from_raw(*grid, values))
}

/// One tensor factor of the half-cell Gauss rule.
#[derive(Debug, Clone, Copy)]
struct AxisPoint {
    x: f64,
    weight: f64,
    owner: usize,
    cell: usize,
    r: f64,
}

fn axis_rule(grid: &GridSpec, order: usize) -> Vec<AxisPoint> {
    let h = grid.spacing();
    let (nodes, weights) = gauss_legendre(order);
    let mut out = Vec::with_capacity(2 * (grid.cells_per_axis() + 1) * order);
    for l in 0..=grid.cells_per_axis() {
        for half in 0..2 {
            let lo = l as f64 * h + half as f64 * 0.5 * h;
            for (&t, &w) in nodes.iter().zip(&weights) {
                let r = 0.5 * (half as f64 + t);
                out.push(AxisPoint {
                    x: lo + 0.5 * h * t,
                    weight: 0.5 * h * w,
                    owner: l + half,
                    cell: l,
                    r,
                });
            }
        }
    }
    out
}

/// Visits every tensor point of the half-cell rule.
fn for_each_point(grid: &GridSpec, order: usize, mut visit: impl FnMut(&[AxisPoint], f64)) {
    let rule = axis_rule(grid, order);
    let n = grid.dim();
    let len = rule.len();
    let mut counter = vec![0usize; n];
    let mut pts = vec![rule[0]; n];
    loop {
        let mut w = 1.0;
        for k in 0..n {
            pts[k] = rule[counter[k]];
            w *= pts[k].weight;
        }
        visit(&pts, w);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            counter[k] += 1;
            if counter[k] < len {
                break;
            }
            counter[k] = 0;
        }
    }
}

fn owner_index(grid: &GridSpec, pts: &[AxisPoint]) -> usize {
    pts.iter()
        .enumerate()
        .map(|(k, p)| p.owner * grid.stride(k))
        .sum()
}

fn cells_of(pts: &[AxisPoint]) -> Vec<(usize, f64)> {
    pts.iter().map(|p| (p.cell, p.r)).collect()
}

/// `‖Πʰu − Λʰu‖_{L²(O)}`, exact up to rounding.
pub fn interp_gap(u: &Field) -> f64 {
    let g = *u.grid();
    let mut acc = 0.0;
    for_each_point(&g, 2, |pts, w| {
        let pc = u.get(owner_index(&g, pts));
        let pa = multilinear(&g, u.values(), &cells_of(pts));
        acc += w * (pc - pa) * (pc - pa);
    });
    acc.sqrt()
}

/// `‖Λʰu‖_{L^p(O)}`. Exact for `p = 2` and `p = ∞`; Gauss of the given order
/// per half-cell otherwise.
pub fn polyaffine_lp_norm(u: &Field, p: f64, order: usize) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "L^p norm needs p >= 1, got {p}"
        )));
    }
    if p.is_infinite() {
        // A multilinear function attains its extremes at cell corners.
        return Ok(u.max_abs());
    }
    let g = *u.grid();
    let order = if p == 2.0 { order.max(2) } else { order.max(1) };
    let mut acc = 0.0;
    for_each_point(&g, order, |pts, w| {
        let v = multilinear(&g, u.values(), &cells_of(pts));
        acc += w * v.abs().powf(p);
    });
    Ok(acc.powf(1.0 / p))
}

/// `‖∇Λʰu‖_{L²(O)}`, exact.
pub fn polyaffine_grad_l2(u: &Field) -> f64 {
    let g = *u.grid();
    let mut acc = 0.0;
    for_each_point(&g, 2, |pts, w| {
        let cells = cells_of(pts);
        for axis in 0..g.dim() {
            let d = multilinear_partial(&g, u.values(), &cells, axis);
            acc += w * d * d;
        }
    });
    acc.sqrt()
}

/// `‖Πʰu − v‖_{L²(O)}` for a continuous `v`, Gauss of the given order per
/// half-cell.
pub fn pc_l2_distance_to(u: &Field, v: impl Fn(&[f64]) -> f64, order: usize) -> f64 {
    let g = *u.grid();
    let mut x = vec![0.0; g.dim()];
    let mut acc = 0.0;
    for_each_point(&g, order.max(1), |pts, w| {
        for (xk, p) in x.iter_mut().zip(pts) {
            *xk = p.x;
        }
        let d = u.get(owner_index(&g, pts)) - v(&x);
        acc += w * d * d;
    });
    acc.sqrt()
}

/// `‖v‖_{L^p(O)}` of a continuous function, by the same half-cell Gauss
/// rule on `grid`. For `p = ∞` the maximum over quadrature points and
/// nodes is returned.
pub fn continuous_lp_norm(
    v: impl Fn(&[f64]) -> f64,
    grid: &GridSpec,
    p: f64,
    order: usize,
) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "L^p norm needs p >= 1, got {p}"
        )));
    }
    let mut x = vec![0.0; grid.dim()];
    let mut acc = 0.0;
    let mut max = 0.0_f64;
    for_each_point(grid, order.max(1), |pts, w| {
        for (xk, p) in x.iter_mut().zip(pts) {
            *xk = p.x;
        }
        let s = v(&x).abs();
        max = max.max(s);
        acc += w * s.powf(if p.is_infinite() { 1.0 } else { p });
    });
    if p.is_infinite() {
        for idx in 0..grid.len() {
            max = max.max(v(&grid.position(idx)).abs());
        }
        return Ok(max);
    }
    Ok(acc.powf(1.0 / p))
}

/// Length of the clipped dual cell of node `i` along one axis.
#[inline]
fn dual_length(grid: &GridSpec, i: usize) -> f64 {
    if i == 0 || i == grid.cells_per_axis() + 1 {
        0.5 * grid.spacing()
    } else {
        grid.spacing()
    }
}

/// `(Πʰu, Πʰv)_{L²(O)}`, exact: nodal products weighted by clipped cell
/// volumes.
pub fn pc_inner_product(u: &Field, v: &Field) -> Result<f64> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let g = u.grid();
    Ok((0..g.len())
        .map(|idx| {
            let vol: f64 = (0..g.dim())
                .map(|k| dual_length(g, g.coordinate(idx, k)))
                .product();
            vol * u.get(idx) * v.get(idx)
        })
        .sum())
}

/// Segments of `[0, 1]` on which both dual-cell partitions are constant:
/// `(length, owner on a, owner on b)`.
fn merged_segments(a: &GridSpec, b: &GridSpec) -> Vec<(f64, usize, usize)> {
    let faces = |g: &GridSpec| -> Vec<f64> {
        (0..=g.cells_per_axis())
            .map(|i| (i as f64 + 0.5) * g.spacing())
            .collect()
    };
    let mut cuts: Vec<f64> = faces(a).into_iter().chain(faces(b)).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[1] - w[0], owner(a, mid), owner(b, mid))
        })
        .collect()
}

/// `‖Πʰu − Πʰ′v‖²_{L²(O)}` for fields on two grids of the same dimension,
/// integrated exactly over the common refinement of their dual cells.
pub fn pc_distance_sq(u: &Field, v: &Field) -> Result<f64> {
    let (ga, gb) = (*u.grid(), *v.grid());
    if ga.dim() != gb.dim() {
        return Err(Error::GridMismatch);
    }
    let segs = merged_segments(&ga, &gb);
    let n = ga.dim();
    let mut counter = vec![0usize; n];
    let mut acc = 0.0;
    loop {
        let mut vol = 1.0;
        let mut ia = 0;
        let mut ib = 0;
        for k in 0..n {
            let (len, oa, ob) = segs[counter[k]];
            vol *= len;
            ia += oa * ga.stride(k);
            ib += ob * gb.stride(k);
        }
        let d = u.get(ia) - v.get(ib);
        acc += vol * d * d;
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(acc);
            }
            k -= 1;
            counter[k] += 1;
            if counter[k] < segs.len() {
                break;
            }
            counter[k] = 0;
        }
    }
}

/// `‖Πʰu − Πʰ′v‖_{L²(O)}`.
pub fn pc_distance(u: &Field, v: &Field) -> Result<f64> {
    pc_distance_sq(u, v).map(f64::sqrt)
}

/// `|∇ʰu|_{H¹(Ōʰ;h)}`: the discrete `H¹` seminorm of the forward-difference
/// gradient, components combined in quadrature.
pub fn discrete_gradient_h1(u: &Field) -> f64 {
    (0..u.grid().dim())
        .map(|k| {
            let d = forward_diff(u, k).expect("axis in range");
            h1_seminorm_partial(&d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖ΠʰΔʰ(v|_{Ōʰ}) − Δv‖_{L^∞(O)}` sampled at the half-cell Gauss points of
/// the given order. Meant for `v` supported away from `∂O`; boundary nodes
/// of `Δʰv` are taken as zero.
pub fn laplacian_consistency(
    v: impl Fn(&[f64]) -> f64,
    lap_v: impl Fn(&[f64]) -> f64,
    grid: &GridSpec,
    order: usize,
) -> f64 {
    let nodal = Field::from_fn(*grid, &v);
    let lap_h = laplacian(&nodal).to_field(0.0);
    let mut x = vec![0.0; grid.dim()];
    let mut worst = 0.0_f64;
    for_each_point(grid, order.max(1), |pts, _| {
        for (xk, p) in x.iter_mut().zip(pts) {
            *xk = p.x;
        }
        let d = lap_h.get(owner_index(grid, pts)) - lap_v(&x);
        worst = worst.max(d.abs());
    });
    worst
}

/// Measured constants of the interpolation estimates for one smooth
/// function on one grid. Each entry is the left-hand side divided by the
/// right-hand side without the constant (and without the factor `h` where
/// the estimate carries one).
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationRatios {
    pub spacing: f64,
    /// `‖Pʰu‖_{L^p(Ōʰ;h)} / ‖u‖_{L^p(O)}` for `p = 1, 2, ∞`.
    pub projection_lp: [f64; 3],
    /// `|Pʰu|_{H¹(Ōʰ;h)} / ‖∇u‖_{L²(O)}`.
    pub projection_h1: f64,
    /// `‖ΠʰPʰu − u‖_{L²(O)} / (h ‖∇u‖_{L²(O)})`.
    pub projection_error: f64,
    /// `‖Λʰw‖_{L^p(O)} / ‖w‖_{L^p(Ōʰ;h)}` for `w = u|_{Ōʰ}` and `p = 1, 2, ∞`.
    pub polyaffine_lp: [f64; 3],
    /// `‖∇Λʰw‖_{L²(O)} / |w|_{H¹(Ōʰ;h)}`.
    pub polyaffine_grad: f64,
    /// `‖Πʰw − Λʰw‖_{L²(O)} / (h |∇ʰw|_{H¹(Ōʰ;h)})`.
    pub spline_gap: f64,
}

impl InterpolationRatios {
    pub fn as_vec(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("projection_l1", self.projection_lp[0]),
            ("projection_l2", self.projection_lp[1]),
            ("projection_linf", self.projection_lp[2]),
            ("projection_h1", self.projection_h1),
            ("projection_error", self.projection_error),
            ("polyaffine_l1", self.polyaffine_lp[0]),
            ("polyaffine_l2", self.polyaffine_lp[1]),
            ("polyaffine_linf", self.polyaffine_lp[2]),
            ("polyaffine_grad", self.polyaffine_grad),
            ("spline_gap", self.spline_gap),
        ]
    }
}

/// Measures [`InterpolationRatios`] for `u` with gradient `grad_u`.
pub fn interpolation_ratios(
    u: impl Fn(&[f64]) -> f64,
    grad_u: impl Fn(&[f64]) -> Vec<f64>,
    grid: &GridSpec,
    quad_refine: usize,
) -> Result<InterpolationRatios> {
    const ORDER: usize = 4;
    let h = grid.spacing();
    let ps = [1.0, 2.0, f64::INFINITY];
    let projected = project(&u, grid, quad_refine)?;
    let nodal = Field::from_fn(*grid, &u);
    let grad_l2 = continuous_lp_norm(
        |x| grad_u(x).iter().map(|d| d * d).sum::<f64>().sqrt(),
        grid,
        2.0,
        ORDER,
    )?;
    let mut projection_lp = [0.0; 3];
    let mut polyaffine_lp = [0.0; 3];
    for (j, &p) in ps.iter().enumerate() {
        projection_lp[j] =
            lp_norm(&projected, p, Subset::Full)? / continuous_lp_norm(&u, grid, p, ORDER)?;
        polyaffine_lp[j] =
            polyaffine_lp_norm(&nodal, p, ORDER)? / lp_norm(&nodal, p, Subset::Full)?;
    }
    Ok(InterpolationRatios {
        spacing: h,
        projection_lp,
        projection_h1: h1_seminorm(&projected) / grad_l2,
        projection_error: pc_l2_distance_to(&projected, &u, ORDER) / (h * grad_l2),
        polyaffine_lp,
        polyaffine_grad: polyaffine_grad_l2(&nodal) / h1_seminorm(&nodal),
        spline_gap: interp_gap(&nodal) / (h * discrete_gradient_h1(&nodal)),
    })
}
