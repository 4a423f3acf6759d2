//! Regularising transformations of a degenerate solution.
//!
//! `Φ(k, d)` is the fourfold integral
//! `∫₀ᵏ∫₀ᵈ∫₀^{s₂}∫₀^{z₂} (s₁/2) φ²(s₁/2, z₁) dz₁ ds₁ dz₂ ds₂` of a weight
//! `φ`, and `Ψ(k, d) = ∫₀ᵏ Φ(s, d) β′(s) ds`. Both are tabulated on a
//! `(k, d)` rectangle by nested cumulative trapezoid rules on a refined copy
//! of the user grid. Composed with the boundary weight `γ(t, x)` they turn
//! `c` into a field that is smooth near its zero set and near the parabolic
//! boundary while staying invertible in `c`.

use std::io::Write;

use crate::{Error, Result};

/// The one-variable transform `Φ(k) = k^{2/γ+1} / (γ(1−γ)(2/γ)(2/γ+1))`,
/// which maps `w(x) = |x|^γ` to `|x|^{2+γ}`.
pub fn example52_transform(gamma_exp: f64, k: f64) -> Result<f64> {
    check_gamma(gamma_exp)?;
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::OutOfRange {
            what: "k",
            value: k,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let g = gamma_exp;
    let constant = g * (1.0 - g) * (2.0 / g) * (2.0 / g + 1.0);
    Ok(k.powf(2.0 / g + 1.0) / constant)
}

/// The profile `w(x) = |x|^γ` on `[−1, 1]` that [`example52_transform`]
/// regularises.
pub fn example52_profile(gamma_exp: f64, x: f64) -> Result<f64> {
    check_gamma(gamma_exp)?;
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange {
            what: "x",
            value: x,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(x.abs().powf(gamma_exp))
}

fn check_gamma(g: f64) -> Result<()> {
    if g > 0.0 && g < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "gamma",
            value: g,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// `min(φ̃(k, d), 1/β′(k))`, so that `φ · β′ ≤ 1`.
pub fn cap_phi<'a>(
    phi_raw: impl Fn(f64, f64) -> f64 + 'a,
    beta_prime: impl Fn(f64) -> f64 + 'a,
) -> impl Fn(f64, f64) -> f64 + 'a {
    move |k, d| phi_raw(k, d).min(1.0 / beta_prime(k))
}

/// `Φ`, `Ψ` and the weight `φ` sampled on `k_grid × d_grid`. Tables are
/// row-major with `d` fastest: entry `(i, j)` sits at `i · d_grid.len() + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedTransform {
    pub k_grid: Vec<f64>,
    pub d_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub big_phi: Vec<f64>,
    pub psi: Option<Vec<f64>>,
    /// Integrability exponent the weight was built for; a label only.
    pub p: f64,
    fine: Fine,
}

/// `Φ` on the refined grid, kept for the `Ψ` integration.
#[derive(Debug, Clone, PartialEq)]
struct Fine {
    refine: usize,
    k: Vec<f64>,
    d: Vec<f64>,
    big_phi: Vec<f64>,
}

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.len() < 2 || g[0] != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} grid needs at least two points starting at 0"
        )));
    }
    if g.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} grid is not strictly increasing"
        )));
    }
    Ok(())
}

fn refine_grid(g: &[f64], r: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((g.len() - 1) * r + 1);
    for w in g.windows(2) {
        for s in 0..r {
            out.push(w[0] + (w[1] - w[0]) * s as f64 / r as f64);
        }
    }
    out.push(*g.last().expect("grid is nonempty"));
    out
}

/// In place: `f[i][j] ← ∫₀^{k_i} ∫₀^{d_j} f` by the product trapezoid rule.
fn cumulative_trapezoid_2d(f: &mut [f64], k: &[f64], d: &[f64]) {
    let nd = d.len();
    for row in f.chunks_exact_mut(nd) {
        cumulative_trapezoid(row, d, 1);
    }
    for j in 0..nd {
        cumulative_trapezoid(&mut f[j..], k, nd);
    }
}

/// In place cumulative trapezoid over `x` of the strided sequence
/// `f[0], f[stride], …`.
fn cumulative_trapezoid(f: &mut [f64], x: &[f64], stride: usize) {
    let mut acc = 0.0;
    let mut prev = f[0];
    f[0] = 0.0;
    for i in 1..x.len() {
        let cur = f[i * stride];
        acc += 0.5 * (x[i] - x[i - 1]) * (prev + cur);
        prev = cur;
        f[i * stride] = acc;
    }
}

fn sample_coarse(fine: &[f64], fine_nd: usize, r: usize, nk: usize, nd: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(nk * nd);
    for i in 0..nk {
        for j in 0..nd {
            out.push(fine[i * r * fine_nd + j * r]);
        }
    }
    out
}

/// Tabulates `Φ` for the weight `phi` on `k_grid × d_grid`, integrating on
/// a grid refined `quad_refine` times per cell.
pub fn build_big_phi(
    phi: impl Fn(f64, f64) -> f64,
    k_grid: &[f64],
    d_grid: &[f64],
    quad_refine: usize,
) -> Result<TabulatedTransform> {
    check_grid("k", k_grid)?;
    check_grid("d", d_grid)?;
    if quad_refine == 0 {
        return Err(Error::InvalidParameter(
            "quad_refine must be at least 1".into(),
        ));
    }
    let r = quad_refine;
    let fk = refine_grid(k_grid, r);
    let fd = refine_grid(d_grid, r);
    let mut table = Vec::with_capacity(fk.len() * fd.len());
    for &s in &fk {
        for &z in &fd {
            let w = phi(0.5 * s, z);
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "weight is {w} at ({}, {z})",
                    0.5 * s
                )));
            }
            table.push(0.5 * s * w * w);
        }
    }
    cumulative_trapezoid_2d(&mut table, &fk, &fd);
    cumulative_trapezoid_2d(&mut table, &fk, &fd);
    let (nk, nd) = (k_grid.len(), d_grid.len());
    let big_phi = sample_coarse(&table, fd.len(), r, nk, nd);
    let phi_table = k_grid
        .iter()
        .flat_map(|&k| d_grid.iter().map(move |&d| (k, d)))
        .map(|(k, d)| phi(k, d))
        .collect();
    Ok(TabulatedTransform {
        k_grid: k_grid.to_vec(),
        d_grid: d_grid.to_vec(),
        phi: phi_table,
        big_phi,
        psi: None,
        p: 2.0,
        fine: Fine {
            refine: r,
            k: fk,
            d: fd,
            big_phi: table,
        },
    })
}

/// Fills `psi` with `Ψ(k, d) = ∫₀ᵏ Φ(s, d) β′(s) ds`, integrated column by
/// column on the refined grid. `Φ β′` counts as zero where `Φ` vanishes.
pub fn build_psi(
    mut tt: TabulatedTransform,
    beta_prime: impl Fn(f64) -> f64,
) -> Result<TabulatedTransform> {
    let f = &tt.fine;
    let fnd = f.d.len();
    let mut table = f.big_phi.clone();
    for (i, row) in table.chunks_exact_mut(fnd).enumerate() {
        let bp = beta_prime(f.k[i]);
        for v in row.iter_mut() {
            *v = if *v == 0.0 { 0.0 } else { *v * bp };
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "Φ·β′ is {v} at k = {}",
                    f.k[i]
                )));
            }
        }
    }
    for j in 0..fnd {
        cumulative_trapezoid(&mut table[j..], &f.k, fnd);
    }
    tt.psi = Some(sample_coarse(
        &table,
        fnd,
        f.refine,
        tt.k_grid.len(),
        tt.d_grid.len(),
    ));
    Ok(tt)
}

/// Index `i` with `grid[i] ≤ x ≤ grid[i + 1]` and the fraction along it.
fn locate(grid: &[f64], x: f64, what: &'static str) -> Result<(usize, f64)> {
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(Error::OutOfRange {
            what,
            value: x,
            lo,
            hi,
        });
    }
    let i = grid.partition_point(|&g| g <= x).clamp(1, grid.len() - 1) - 1;
    Ok((i, (x - grid[i]) / (grid[i + 1] - grid[i])))
}

impl TabulatedTransform {
    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn k_max(&self) -> f64 {
        *self.k_grid.last().expect("grid is nonempty")
    }

    pub fn d_max(&self) -> f64 {
        *self.d_grid.last().expect("grid is nonempty")
    }

    fn bilinear(&self, table: &[f64], k: f64, d: f64) -> Result<f64> {
        let (i, a) = locate(&self.k_grid, k, "k")?;
        let (j, b) = locate(&self.d_grid, d, "d")?;
        let nd = self.d_grid.len();
        let at = |i: usize, j: usize| table[i * nd + j];
        Ok((1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1))
            + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1)))
    }

    /// Bilinear interpolant of `Φ`.
    pub fn big_phi_at(&self, k: f64, d: f64) -> Result<f64> {
        self.bilinear(&self.big_phi, k, d)
    }

    /// Bilinear interpolant of `Ψ`.
    pub fn psi_at(&self, k: f64, d: f64) -> Result<f64> {
        self.bilinear(self.psi_table()?, k, d)
    }

    fn psi_table(&self) -> Result<&[f64]> {
        self.psi
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("Ψ has not been tabulated".into()))
    }

    /// Writes `k,d,phi,big_phi,psi` rows; `psi` is empty if not tabulated.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "k,d,phi,big_phi,psi")?;
        let nd = self.d_grid.len();
        for (i, &k) in self.k_grid.iter().enumerate() {
            for (j, &d) in self.d_grid.iter().enumerate() {
                let n = i * nd + j;
                let psi = self
                    .psi
                    .as_ref()
                    .map(|p| p[n].to_string())
                    .unwrap_or_default();
                writeln!(w, "{k},{d},{},{},{psi}", self.phi[n], self.big_phi[n])?;
            }
        }
        Ok(())
    }
}

/// The `k` with `Ψ(k, d) = value`, by bisection on the interpolated column.
pub fn invert_psi(tt: &TabulatedTransform, d: f64, value: f64) -> Result<f64> {
    let k_max = tt.k_max();
    let top = tt.psi_at(k_max, d)?;
    if !(value >= 0.0 && value <= top) {
        return Err(Error::OutOfRange {
            what: "Ψ value",
            value,
            lo: 0.0,
            hi: top,
        });
    }
    let (mut lo, mut hi) = (0.0, k_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tt.psi_at(mid, d)? < value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Ratios and constants of the derivative bounds for a finished table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBounds {
    /// `max ∂^α Φ / ((k/2) φ²(k/2, d))` over multi-indices of order ≤ 2.
    pub c22: f64,
    /// Most negative finite-difference partial of `Φ` seen (0 if none).
    pub min_partial: f64,
    /// `max ∂_k Ψ / k = max Φ β′ / k`; `NaN` without `Ψ`.
    pub psi_slope: f64,
    /// Most negative `∂_k Ψ` seen.
    pub min_psi_slope: f64,
}

/// Measures [`DerivativeBounds`] by central differences at interior table
/// nodes, skipping nodes where the comparison weight vanishes.
pub fn derivative_bounds(
    tt: &TabulatedTransform,
    phi: impl Fn(f64, f64) -> f64,
    beta_prime: impl Fn(f64) -> f64,
) -> DerivativeBounds {
    let (k, d) = (&tt.k_grid, &tt.d_grid);
    let nd = d.len();
    let f = |i: usize, j: usize| tt.big_phi[i * nd + j];
    let mut c22 = 0.0_f64;
    let mut min_partial = 0.0_f64;
    for i in 1..k.len() - 1 {
        let (hm, hp) = (k[i] - k[i - 1], k[i + 1] - k[i]);
        for j in 1..nd - 1 {
            let (gm, gp) = (d[j] - d[j - 1], d[j + 1] - d[j]);
            let w = 0.5 * k[i] * phi(0.5 * k[i], d[j]).powi(2);
            let dk = (f(i + 1, j) - f(i - 1, j)) / (hm + hp);
            let dd = (f(i, j + 1) - f(i, j - 1)) / (gm + gp);
            let dkk = 2.0 * (hm * f(i + 1, j) - (hm + hp) * f(i, j) + hp * f(i - 1, j))
                / (hm * hp * (hm + hp));
            let ddd = 2.0 * (gm * f(i, j + 1) - (gm + gp) * f(i, j) + gp * f(i, j - 1))
                / (gm * gp * (gm + gp));
            let dkd = (f(i + 1, j + 1) - f(i + 1, j - 1) - f(i - 1, j + 1) + f(i - 1, j - 1))
                / ((hm + hp) * (gm + gp));
            for v in [f(i, j), dk, dd, dkk, ddd, dkd] {
                min_partial = min_partial.min(v);
                if w > 0.0 {
                    c22 = c22.max(v / w);
                }
            }
        }
    }
    let (mut psi_slope, mut min_psi_slope) = (f64::NAN, 0.0_f64);
    if tt.psi.is_some() {
        psi_slope = 0.0;
        for (i, &ki) in k.iter().enumerate().skip(1) {
            let bp = beta_prime(ki);
            for j in 0..nd {
                let s = if f(i, j) == 0.0 { 0.0 } else { f(i, j) * bp };
                min_psi_slope = min_psi_slope.min(s);
                psi_slope = psi_slope.max(s / ki);
            }
        }
    }
    DerivativeBounds {
        c22,
        min_partial,
        psi_slope,
        min_psi_slope,
    }
}

/// Parameters of the weight `γ(t, x) = κ tanh(t) ∏ xᵢ(1 − xᵢ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryWeight {
    pub scale: f64,
    pub horizon: f64,
}

impl BoundaryWeight {
    /// `scale ∈ (0, 1]` keeps `γ ≤ min(t, dist(x, ∂O)) ≤ diam(O)/4`.
    pub fn new(scale: f64, horizon: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::OutOfRange {
                what: "scale",
                value: scale,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon {horizon}")));
        }
        Ok(Self { scale, horizon })
    }
}

/// `γ(t, x)`; zero at `t = 0` and on `∂O`, positive elsewhere.
pub fn gamma_weight(t: f64, x: &[f64], weight: &BoundaryWeight) -> f64 {
    weight.scale * t.tanh() * x.iter().map(|&xi| xi * (1.0 - xi)).product::<f64>()
}

/// Distance from `(t, x)` to the parabolic boundary `{0} × Ō ∪ [0, T] × ∂O`.
pub fn parabolic_distance(t: f64, x: &[f64]) -> f64 {
    x.iter().fold(t, |acc, &xi| acc.min(xi).min(1.0 - xi))
}
