//! Explicit time stepping of the semi-discrete system in the conservative
//! variable `v = β(c)`, with Euler–Maruyama for the pointwise SDE and one
//! scalar Brownian increment per step shared by every node.

mod initial;
mod rpme1;
mod wiener;

pub use initial::{barenblatt_profile, barenblatt_support_radius, InitialData};
pub use rpme1::{read_rpme1, write_rpme1, MalliavinRecord, Rpme1, Rpme1Snapshot};
pub use wiener::{coarsen_wiener, gen_wiener, wiener_increment, NoiseSource, WienerPath};

use crate::grid::{laplacian_at, BoundaryKind, Field, GridSpec};
use crate::interp::project;
use crate::model::{r2_bound, source_growth, CoefficientSet};
use crate::{Error, Result};

/// Everything that determines a sample path apart from its noise key.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub grid: GridSpec,
    pub coeffs: CoefficientSet,
    pub bc: BoundaryKind,
    pub t_final: f64,
    /// Fraction of the stability limit used for the time step.
    pub theta: f64,
    pub c0: InitialData,
    pub y0: InitialData,
    /// Midpoint subdivisions per axis used by the projection of initial data.
    pub quad_refine: usize,
    /// Store every `stride`-th state; defaults to `max(1, n_steps / 256)`.
    pub snapshot_stride: Option<usize>,
    /// Upper limit on the time step on top of the stability limit.
    pub max_dt: Option<f64>,
    /// Forces exactly this many steps, bypassing the stability limit.
    pub n_steps: Option<usize>,
    /// Worker threads for multi-path runs; 0 uses every core.
    pub workers: usize,
}

impl SimulationConfig {
    pub fn new(grid: GridSpec, coeffs: CoefficientSet) -> Self {
        Self {
            grid,
            coeffs,
            bc: BoundaryKind::Dirichlet,
            t_final: 1.0,
            theta: 0.5,
            c0: InitialData::Zero,
            y0: InitialData::Zero,
            quad_refine: 4,
            snapshot_stride: None,
            max_dt: None,
            n_steps: None,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon T = {}",
                self.t_final
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::OutOfRange {
                what: "theta",
                value: self.theta,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if self.quad_refine == 0 {
            return Err(Error::InvalidParameter(
                "quad_refine must be positive".into(),
            ));
        }
        if self.snapshot_stride == Some(0) || self.n_steps == Some(0) {
            return Err(Error::InvalidParameter(
                "stride and step count must be positive".into(),
            ));
        }
        if let Some(dt) = self.max_dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidParameter(format!("max_dt = {dt}")));
            }
        }
        Ok(())
    }

    /// Projected initial state with the boundary condition imposed.
    pub fn initial_state(&self) -> Result<SystemState> {
        self.validate()?;
        let mut c = project(|x| self.c0.eval(x), &self.grid, self.quad_refine)?;
        let y = project(|x| self.y0.eval(x), &self.grid, self.quad_refine)?;
        for (what, field) in [("initial c", &c), ("initial y", &y)] {
            if let Some(node) = field.values().iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{what} is negative at node {node}"
                )));
            }
        }
        apply_bc_in_place(&mut c, self.bc);
        let v = c.map(|ci| self.coeffs.beta.value(ci));
        let running_max_c = c.max();
        Ok(SystemState {
            step: 0,
            t: 0.0,
            c,
            v,
            y,
            clamped_c_mass: 0.0,
            clamped_y_mass: 0.0,
            cfl_violations: 0,
            running_max_c,
        })
    }

    /// Time step, step count, snapshot stride and the a priori radii.
    pub fn resolve(&self) -> Result<Resolved> {
        let init = self.initial_state()?;
        self.resolve_from(&init)
    }

    fn resolve_from(&self, init: &SystemState) -> Result<Resolved> {
        let c0_sup = init.c.max_abs();
        let y0_sup = init.y.max_abs();
        let (growth, _) = source_growth(
            &self.coeffs,
            (10.0 * c0_sup).max(1.0),
            (10.0 * y0_sup).max(10.0),
            200,
        );
        let r0 = growth.max(0.0).max(c0_sup);
        let r2 = r2_bound(self.t_final, r0, &self.coeffs.beta);
        let stiffness = self.coeffs.beta.reciprocal_prime(r2);
        let h = self.grid.spacing();
        let dt_cfl = if stiffness > 0.0 {
            self.theta * h * h / (2.0 * self.grid.dim() as f64 * stiffness)
        } else {
            f64::INFINITY
        };
        let n_steps = match self.n_steps {
            Some(n) => n,
            None => {
                let dt = dt_cfl
                    .min(self.max_dt.unwrap_or(f64::INFINITY))
                    .min(self.t_final);
                ((self.t_final / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
            }
        };
        let dt = self.t_final / n_steps as f64;
        let stride = self.snapshot_stride.unwrap_or((n_steps / 256).max(1));
        Ok(Resolved {
            dt,
            n_steps,
            stride,
            r0,
            r2,
            source_growth: growth,
            c0_sup,
        })
    }
}

/// Time grid and a priori radii derived from a [`SimulationConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
    /// `R₀ = max(‖c₀ʰ‖_∞, sampled sup f/(β + 1))`.
    pub r0: f64,
    /// `R₂(T, R₀)`.
    pub r2: f64,
    pub source_growth: f64,
    pub c0_sup: f64,
}

/// Largest stable explicit step `θ h² / (2 N S)`, `S = sup_{(0, c_max]} 1/β′`.
pub fn cfl_dt(grid: &GridSpec, coeffs: &CoefficientSet, c_max: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::OutOfRange {
            what: "theta",
            value: theta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    // 1/β′ is nondecreasing because β′ is nonincreasing.
    let s = coeffs.beta.reciprocal_prime(c_max);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "stiffness sup 1/β′ = {s} on (0, {c_max}]"
        )));
    }
    let h = grid.spacing();
    Ok(theta * h * h / (2.0 * grid.dim() as f64 * s))
}

/// Imposes the boundary condition on `c`: zero, or the value at the
/// reflected node.
pub fn apply_bc(c: &Field, bc: BoundaryKind) -> Field {
    let mut out = c.clone();
    apply_bc_in_place(&mut out, bc);
    out
}

fn apply_bc_in_place(c: &mut Field, bc: BoundaryKind) {
    let g = *c.grid();
    let pairs = boundary_pairs(&g);
    impose(c.values_mut(), &pairs, bc);
}

fn boundary_pairs(g: &GridSpec) -> Vec<(usize, usize)> {
    g.boundary_indices()
        .into_iter()
        .map(|i| (i, g.reflect(i)))
        .collect()
}

#[inline]
fn impose(values: &mut [f64], pairs: &[(usize, usize)], bc: BoundaryKind) {
    match bc {
        BoundaryKind::Dirichlet => pairs.iter().for_each(|&(i, _)| values[i] = 0.0),
        BoundaryKind::Neumann => pairs.iter().for_each(|&(i, r)| values[i] = values[r]),
    }
}

/// One time level of a sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub step: usize,
    pub t: f64,
    pub c: Field,
    /// `β(c)`, carried as the primary unknown on `Oʰ`.
    pub v: Field,
    pub y: Field,
    /// Cumulative `h^N`-weighted negative part removed from `v`.
    pub clamped_c_mass: f64,
    /// Cumulative `h^N`-weighted negative part removed from `y`.
    pub clamped_y_mass: f64,
    /// Steps taken so far with `dt` above the stability limit.
    pub cfl_violations: usize,
    /// Largest value of `c` over every step so far, stored or not.
    pub running_max_c: f64,
}

impl SystemState {
    /// `h^N Σ_{Oʰ} v`.
    pub fn interior_mass(&self) -> f64 {
        let g = self.v.grid();
        let sum: f64 = (0..g.len())
            .filter(|&i| g.is_interior(i))
            .map(|i| self.v.get(i))
            .sum();
        g.cell_volume() * sum
    }
}

/// Grid-dependent tables reused by every step.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    coeffs: &'a CoefficientSet,
    bc: BoundaryKind,
    dt: f64,
    grid: GridSpec,
    interior: Vec<bool>,
    boundary: Vec<(usize, usize)>,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: GridSpec, coeffs: &'a CoefficientSet, bc: BoundaryKind, dt: f64) -> Self {
        Self {
            coeffs,
            bc,
            dt,
            grid,
            interior: (0..grid.len()).map(|i| grid.is_interior(i)).collect(),
            boundary: boundary_pairs(&grid),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        self.coeffs
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub(crate) fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub(crate) fn impose_bc(&self, values: &mut [f64]) {
        impose(values, &self.boundary, self.bc);
    }

    /// Advances `prev` by one step with Brownian increment `dw`, writing the
    /// result into `next` (whose previous contents are ignored).
    pub fn step_into(&self, prev: &SystemState, next: &mut SystemState, dw: f64) -> Result<()> {
        let g = self.grid;
        let dt = self.dt;
        let vol = g.cell_volume();
        let beta = &self.coeffs.beta;
        let (f, a, b) = (&self.coeffs.f, &self.coeffs.a, &self.coeffs.b);

        let mut violations = prev.cfl_violations;
        let h = g.spacing();
        let stiffness = beta.reciprocal_prime(prev.c.max());
        if dt * 2.0 * g.dim() as f64 * stiffness > h * h * (1.0 + 1e-12) {
            violations += 1;
            if violations == 1 {
                log::warn!(
                    "time step {dt} exceeds the stability limit at t = {} (max c = {})",
                    prev.t,
                    prev.c.max()
                );
            }
        }

        let t_next = prev.t + dt;
        let (pc, pv, py) = (prev.c.values(), prev.v.values(), prev.y.values());
        let mut clamped_c = 0.0;
        let mut clamped_y = 0.0;
        {
            let nc = next.c.values_mut();
            let nv = next.v.values_mut();
            let ny = next.y.values_mut();
            for idx in 0..g.len() {
                let (c, y) = (pc[idx], py[idx]);
                let mut y_new = y + a.value(y) * dw + b.value(c, y) * dt;
                if !y_new.is_finite() {
                    return Err(Error::NonFinite {
                        what: "y",
                        t: t_next,
                        node: idx,
                    });
                }
                if y_new < 0.0 {
                    clamped_y -= vol * y_new;
                    y_new = 0.0;
                }
                ny[idx] = y_new;
                if self.interior[idx] {
                    let mut v_new = pv[idx] + dt * (laplacian_at(&g, pc, idx) + f.value(c, y));
                    if !v_new.is_finite() {
                        return Err(Error::NonFinite {
                            what: "v",
                            t: t_next,
                            node: idx,
                        });
                    }
                    if v_new < 0.0 {
                        clamped_c -= vol * v_new;
                        v_new = 0.0;
                    }
                    nv[idx] = v_new;
                    nc[idx] = beta.inverse(v_new);
                }
            }
            impose(nc, &self.boundary, self.bc);
            for &(i, _) in &self.boundary {
                nv[i] = beta.value(nc[i]);
            }
        }
        next.step = prev.step + 1;
        next.t = t_next;
        next.clamped_c_mass = prev.clamped_c_mass + clamped_c;
        next.clamped_y_mass = prev.clamped_y_mass + clamped_y;
        next.cfl_violations = violations;
        next.running_max_c = prev.running_max_c.max(next.c.max());
        Ok(())
    }
}

/// One explicit step; see [`Stepper::step_into`].
pub fn step(
    state: &SystemState,
    coeffs: &CoefficientSet,
    dw: f64,
    dt: f64,
    bc: BoundaryKind,
) -> Result<SystemState> {
    let stepper = Stepper::new(*state.c.grid(), coeffs, bc, dt);
    let mut next = state.clone();
    stepper.step_into(state, &mut next, dw)?;
    Ok(next)
}

/// Stored states of one sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: GridSpec,
    pub bc: BoundaryKind,
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
    pub seed: u64,
    pub path_id: u64,
    pub r2: f64,
    /// States at steps `0, stride, 2·stride, …` and always the final step.
    pub snapshots: Vec<SystemState>,
}

impl Trajectory {
    pub fn initial(&self) -> &SystemState {
        &self.snapshots[0]
    }

    pub fn final_state(&self) -> &SystemState {
        self.snapshots
            .last()
            .expect("a trajectory has at least one state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Largest value of `c` over every node and stored state.
    pub fn max_c(&self) -> f64 {
        self.snapshots.iter().map(|s| s.c.max()).fold(0.0, f64::max)
    }

    pub fn cfl_violations(&self) -> usize {
        self.final_state().cfl_violations
    }
}

/// Runs one path of `config` driven by `noise`, which must provide at least
/// `resolved.n_steps` increments of size `resolved.dt`. `observe` sees every
/// state (not only the stored ones) in order.
pub fn run_with_noise(
    config: &SimulationConfig,
    resolved: &Resolved,
    noise: &dyn NoiseSource,
    seed: u64,
    path_id: u64,
    mut observe: impl FnMut(&SystemState) -> Result<()>,
) -> Result<Trajectory> {
    let stepper = Stepper::new(config.grid, &config.coeffs, config.bc, resolved.dt);
    let mut current = config.initial_state()?;
    let mut next = current.clone();
    let mut snapshots = vec![current.clone()];
    observe(&current)?;
    for n in 0..resolved.n_steps {
        stepper.step_into(&current, &mut next, noise.increment(n))?;
        std::mem::swap(&mut current, &mut next);
        observe(&current)?;
        let stored = current.step % resolved.stride == 0 || current.step == resolved.n_steps;
        if stored {
            snapshots.push(current.clone());
        }
    }
    Ok(Trajectory {
        grid: config.grid,
        bc: config.bc,
        dt: resolved.dt,
        n_steps: resolved.n_steps,
        stride: resolved.stride,
        seed,
        path_id,
        r2: resolved.r2,
        snapshots,
    })
}

/// Path `(seed, path_id)` of `config`.
pub fn simulate_path(config: &SimulationConfig, seed: u64, path_id: u64) -> Result<Trajectory> {
    let resolved = config.resolve()?;
    simulate_resolved(config, &resolved, seed, path_id)
}

/// Same as [`simulate_path`] with the time grid already resolved.
pub fn simulate_resolved(
    config: &SimulationConfig,
    resolved: &Resolved,
    seed: u64,
    path_id: u64,
) -> Result<Trajectory> {
    let noise = gen_wiener(seed, path_id, resolved.n_steps, resolved.dt)?;
    run_with_noise(config, resolved, &noise, seed, path_id, |_| Ok(()))
}

/// Evaluates `job` for paths `0..n_paths` on `workers` threads (0 = all
/// cores). Results come back in path order whatever the scheduling, and
/// the first error in path order wins.
pub fn map_paths<T, F>(workers: usize, n_paths: u64, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let run = || {
        (0..n_paths)
            .into_par_iter()
            .map(&job)
            .collect::<Vec<Result<T>>>()
    };
    let results = if workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run)
    };
    results.into_iter().collect()
}

/// Paths `0..n_paths` of `config`, in path order.
pub fn simulate_paths(
    config: &SimulationConfig,
    seed: u64,
    n_paths: u64,
) -> Result<Vec<Trajectory>> {
    let resolved = config.resolve()?;
    map_paths(config.workers, n_paths, |id| {
        simulate_resolved(config, &resolved, seed, id)
    })
}
