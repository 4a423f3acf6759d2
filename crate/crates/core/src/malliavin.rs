//! Pathwise Malliavin derivatives `D_r c`, `D_r y` of the discrete scheme.
//!
//! The variational system is stepped alongside the forward path with the
//! same explicit scheme: `z = D_r β(c)` follows the differentiated PDE
//! update, `D_r c = z / β′(c)` is recovered through the bounded reciprocal,
//! and `D_r y` follows the differentiated Euler–Maruyama update. A
//! Cameron–Martin perturbation of the Brownian path gives an independent
//! finite-difference estimate of the same quantities.

use crate::grid::{laplacian_at, lp_norm, BoundaryKind, Field, HMinus2, Subset};
use crate::model::CoefficientSet;
use crate::simulate::{
    gen_wiener, run_with_noise, NoiseSource, Resolved, SimulationConfig, Stepper, SystemState,
    Trajectory,
};
use crate::{Error, Result};

/// `D_r c`, `D_r y` and `z = D_r β(c)` at one time level `t ≥ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinState {
    pub r_index: usize,
    pub t: f64,
    pub drc: Field,
    pub dry: Field,
    pub z: Field,
}

impl MalliavinState {
    /// All three fields multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            r_index: self.r_index,
            t: self.t,
            drc: self.drc.scaled(lambda),
            dry: self.dry.scaled(lambda),
            z: self.z.scaled(lambda),
        }
    }
}

/// Variational state at `t = r`: `D_r y = a(y(r))`, `D_r c = z = 0`.
pub fn init_malliavin(state: &SystemState, coeffs: &CoefficientSet) -> MalliavinState {
    let g = *state.c.grid();
    MalliavinState {
        r_index: state.step,
        t: state.t,
        drc: Field::zeros(g),
        dry: state.y.map(|y| coeffs.a.value(y)),
        z: Field::zeros(g),
    }
}

/// `D_r c = z · (1/β′(c))`, zero wherever `1/β′(c)` vanishes.
pub fn recover_drc(z: &Field, c: &Field, coeffs: &CoefficientSet) -> Result<Field> {
    z.zip_with(c, |zi, ci| recover_at(zi, ci, coeffs))
}

#[inline]
fn recover_at(z: f64, c: f64, coeffs: &CoefficientSet) -> f64 {
    let recip = coeffs.beta.reciprocal_prime(c);
    if recip == 0.0 {
        0.0
    } else {
        z * recip
    }
}

/// Advances the variational state across the forward step `prev → next`
/// driven by `dw`.
pub fn step_malliavin(
    m: &MalliavinState,
    prev: &SystemState,
    next: &SystemState,
    coeffs: &CoefficientSet,
    dw: f64,
    dt: f64,
    bc: BoundaryKind,
) -> Result<MalliavinState> {
    let stepper = Stepper::new(*prev.c.grid(), coeffs, bc, dt);
    let mut out = m.clone();
    variational_step_into(&stepper, m, &mut out, prev, next, dw)?;
    Ok(out)
}

fn variational_step_into(
    stepper: &Stepper<'_>,
    m: &MalliavinState,
    out: &mut MalliavinState,
    prev: &SystemState,
    next: &SystemState,
    dw: f64,
) -> Result<()> {
    let g = *stepper.grid();
    let dt = stepper.dt();
    let coeffs = stepper.coeffs();
    let interior = stepper.interior_mask();
    let (pc, py) = (prev.c.values(), prev.y.values());
    let nc = next.c.values();
    let (drc, dry, z) = (m.drc.values(), m.dry.values(), m.z.values());
    {
        let out_z = out.z.values_mut();
        let out_drc = out.drc.values_mut();
        let out_dry = out.dry.values_mut();
        for idx in 0..g.len() {
            let (c, y) = (pc[idx], py[idx]);
            let dy_new = dry[idx]
                + coeffs.a.derivative(y) * dry[idx] * dw
                + (coeffs.b.d_c(c, y) * drc[idx] + coeffs.b.d_y(c, y) * dry[idx]) * dt;
            if !dy_new.is_finite() {
                return Err(Error::NonFinite {
                    what: "D_r y",
                    t: next.t,
                    node: idx,
                });
            }
            out_dry[idx] = dy_new;
            if interior[idx] {
                let z_new = z[idx]
                    + dt * (laplacian_at(&g, drc, idx)
                        + coeffs.f.d_c(c, y) * drc[idx]
                        + coeffs.f.d_y(c, y) * dry[idx]);
                if !z_new.is_finite() {
                    return Err(Error::NonFinite {
                        what: "D_r beta(c)",
                        t: next.t,
                        node: idx,
                    });
                }
                out_z[idx] = z_new;
                out_drc[idx] = recover_at(z_new, nc[idx], coeffs);
            }
        }
        stepper.impose_bc(out_drc);
        stepper.impose_bc(out_z);
    }
    out.r_index = m.r_index;
    out.t = next.t;
    Ok(())
}

/// Stored derivatives of one `r` at one stored time.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinSnapshot {
    pub step: usize,
    pub t: f64,
    pub drc: Field,
    pub dry: Field,
}

/// Derivatives with respect to the noise at one `r` along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinSeries {
    pub r_index: usize,
    pub r: f64,
    /// At step `r_index` and at every stored step of the trajectory after it.
    pub snapshots: Vec<MalliavinSnapshot>,
    /// `Σ dt ‖D_r c‖²_{L²(Ōʰ;h)}` over the steps in `(r, T]`.
    pub drc_l2_sq: f64,
    /// `Σ dt ‖D_r y‖²_{L²(Ōʰ;h)}` over the steps in `(r, T]`.
    pub dry_l2_sq: f64,
    /// `Σ dt ‖∂_t D_r β(c)‖²_{H⁻²}` with the difference quotient of `z`;
    /// zero unless an `H⁻²` operator was supplied.
    pub dtz_hminus2_sq: f64,
}

impl MalliavinSeries {
    pub fn final_snapshot(&self) -> &MalliavinSnapshot {
        self.snapshots
            .last()
            .expect("series starts with the state at r")
    }

    pub fn at_step(&self, step: usize) -> Option<&MalliavinSnapshot> {
        self.snapshots
            .binary_search_by_key(&step, |s| s.step)
            .ok()
            .map(|i| &self.snapshots[i])
    }
}

/// A forward path together with its Malliavin series.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinRun {
    pub trajectory: Trajectory,
    pub series: Vec<MalliavinSeries>,
}

/// Runs the forward path with increments from `forward` and, for every
/// `r` in `r_indices`, the variational system from step `r` on with
/// increments from `variational`. The variational system only ever reads
/// `variational.increment(n)` for `n ≥ r`.
#[allow(clippy::too_many_arguments)]
pub fn propagate_malliavin(
    config: &SimulationConfig,
    resolved: &Resolved,
    forward: &dyn NoiseSource,
    variational: &dyn NoiseSource,
    r_indices: &[usize],
    hminus2: Option<&HMinus2>,
    seed: u64,
    path_id: u64,
) -> Result<MalliavinRun> {
    if let Some(&bad) = r_indices.iter().find(|&&r| r >= resolved.n_steps) {
        return Err(Error::InvalidParameter(format!(
            "r index {bad} not before the final step {}",
            resolved.n_steps
        )));
    }
    let stepper = Stepper::new(config.grid, &config.coeffs, config.bc, resolved.dt);
    let dt = resolved.dt;
    let stride = resolved.stride;
    let n_steps = resolved.n_steps;
    let mut states: Vec<Option<(MalliavinState, MalliavinState)>> = vec![None; r_indices.len()];
    let mut series: Vec<MalliavinSeries> = r_indices
        .iter()
        .map(|&r| MalliavinSeries {
            r_index: r,
            r: r as f64 * dt,
            snapshots: Vec::new(),
            drc_l2_sq: 0.0,
            dry_l2_sq: 0.0,
            dtz_hminus2_sq: 0.0,
        })
        .collect();
    let mut prev: Option<SystemState> = None;

    let trajectory = run_with_noise(config, resolved, forward, seed, path_id, |current| {
        if let Some(prev) = &prev {
            let active = states.iter().any(Option::is_some);
            let dw = if active {
                variational.increment(prev.step)
            } else {
                f64::NAN
            };
            for (slot, ser) in states.iter_mut().zip(series.iter_mut()) {
                let Some((m, scratch)) = slot else { continue };
                variational_step_into(&stepper, m, scratch, prev, current, dw)?;
                std::mem::swap(m, scratch);
                ser.drc_l2_sq += dt * sq_norm(&m.drc);
                ser.dry_l2_sq += dt * sq_norm(&m.dry);
                if let Some(op) = hminus2 {
                    let rate = m.z.zip_with(&scratch.z, |a, b| (a - b) / dt)?;
                    ser.dtz_hminus2_sq += dt * op.norm(&rate)?.powi(2);
                }
                if current.step % stride == 0 || current.step == n_steps {
                    ser.snapshots.push(MalliavinSnapshot {
                        step: current.step,
                        t: current.t,
                        drc: m.drc.clone(),
                        dry: m.dry.clone(),
                    });
                }
            }
        }
        for ((slot, ser), &r) in states.iter_mut().zip(series.iter_mut()).zip(r_indices) {
            if r == current.step {
                let m = init_malliavin(current, &config.coeffs);
                ser.snapshots.push(MalliavinSnapshot {
                    step: current.step,
                    t: current.t,
                    drc: m.drc.clone(),
                    dry: m.dry.clone(),
                });
                *slot = Some((m.clone(), m));
            }
        }
        prev = Some(current.clone());
        Ok(())
    })?;
    Ok(MalliavinRun { trajectory, series })
}

fn sq_norm(u: &Field) -> f64 {
    lp_norm(u, 2.0, Subset::Full)
        .expect("p = 2 is valid")
        .powi(2)
}

/// Forward path `(seed, path_id)` with Malliavin series for `r_indices`,
/// both driven by the same Brownian increments.
pub fn malliavin_path(
    config: &SimulationConfig,
    resolved: &Resolved,
    r_indices: &[usize],
    hminus2: Option<&HMinus2>,
    seed: u64,
    path_id: u64,
) -> Result<MalliavinRun> {
    let noise = gen_wiener(seed, path_id, resolved.n_steps, resolved.dt)?;
    propagate_malliavin(
        config, resolved, &noise, &noise, r_indices, hminus2, seed, path_id,
    )
}

/// Finite-difference estimate of `(D_r c(T), D_r y(T))`: the path is rerun
/// with increments `r_index .. r_index + delta_steps` raised by `eps · dt`
/// and the change at the final time divided by `eps · δ`.
pub fn perturbation_oracle(
    config: &SimulationConfig,
    seed: u64,
    path_id: u64,
    r_index: usize,
    delta_steps: usize,
    eps: f64,
) -> Result<(Field, Field)> {
    let resolved = config.resolve()?;
    perturbation_oracle_resolved(config, &resolved, seed, path_id, r_index, delta_steps, eps)
}

/// [`perturbation_oracle`] with the time grid already resolved.
pub fn perturbation_oracle_resolved(
    config: &SimulationConfig,
    resolved: &Resolved,
    seed: u64,
    path_id: u64,
    r_index: usize,
    delta_steps: usize,
    eps: f64,
) -> Result<(Field, Field)> {
    if !(eps > 0.0) || delta_steps == 0 || r_index + delta_steps > resolved.n_steps {
        return Err(Error::InvalidParameter(format!(
            "oracle window r = {r_index}, delta = {delta_steps}, eps = {eps} on {} steps",
            resolved.n_steps
        )));
    }
    let base = gen_wiener(seed, path_id, resolved.n_steps, resolved.dt)?;
    let shifted = base.shifted(r_index, delta_steps, eps);
    let run = |noise: &dyn NoiseSource| {
        run_with_noise(config, resolved, noise, seed, path_id, |_| Ok(()))
    };
    let a = run(&base)?;
    let b = run(&shifted)?;
    let scale = 1.0 / (eps * delta_steps as f64 * resolved.dt);
    let (fa, fb) = (a.final_state(), b.final_state());
    let dc = fb.c.zip_with(&fa.c, |x, y| (x - y) * scale)?;
    let dy = fb.y.zip_with(&fa.y, |x, y| (x - y) * scale)?;
    Ok((dc, dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::model::{pme_beta, regularize_beta, Diffusion, Drift, Source};
    use crate::simulate::InitialData;

    #[test]
    fn init_examples() {
        let g = build_grid(1, 3).unwrap();
        let mut coeffs = CoefficientSet::default();
        coeffs.a = Diffusion::Linear { sigma: 0.3 };
        let mut config = SimulationConfig::new(g, coeffs.clone());
        config.y0 = InitialData::Constant(2.0);
        let s = config.initial_state().unwrap();
        let m = init_malliavin(&s, &coeffs);
        assert!(m.dry.values().iter().all(|&d| (d - 0.6).abs() < 1e-15));
        assert!(m.drc.values().iter().all(|&d| d == 0.0));
        let m0 = init_malliavin(&s, &CoefficientSet::default());
        assert!(m0.dry.values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn recover_examples() {
        let g = build_grid(1, 2).unwrap();
        let coeffs = CoefficientSet::default();
        let z = Field::from_values(g, vec![5.0, 3.0, 3.0, 1.0]).unwrap();
        let c = Field::from_values(g, vec![0.0, 1.0, 0.25, 0.0]).unwrap();
        let d = recover_drc(&z, &c, &coeffs).unwrap();
        assert_eq!(d.values(), &[0.0, 6.0, 3.0, 0.0]);
        let reg = coeffs.with_beta(regularize_beta(2.0, 0.01).unwrap());
        let d = recover_drc(&z, &c, &reg).unwrap();
        assert!((d.get(0) - 5.0 / reg.beta.prime(0.0)).abs() < 1e-12);
        assert!(d.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn decoupled_drift_only() {
        let g = build_grid(1, 4).unwrap();
        let coeffs = CoefficientSet::new(
            pme_beta(2.0).unwrap(),
            Source::Logistic {
                lambda: 1.0,
                capacity: 2.0,
                mu_y: 0.0,
            },
            Diffusion::Zero,
            Drift::Coupling {
                kappa: 0.0,
                rho: 0.5,
            },
        );
        let mut config = SimulationConfig::new(g, coeffs.clone());
        config.c0 = InitialData::Sine { amplitude: 1.0 };
        config.y0 = InitialData::Constant(1.0);
        config.t_final = 0.1;
        let resolved = config.resolve().unwrap();
        let run = malliavin_path(&config, &resolved, &[3], None, 1, 0).unwrap();
        let fin = run.series[0].final_snapshot();
        assert!(fin.drc.values().iter().all(|&d| d == 0.0));
        assert!(fin.dry.values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn geometric_noise_is_reproduced_exactly() {
        let g = build_grid(1, 2).unwrap();
        let mut coeffs = CoefficientSet::default();
        coeffs.a = Diffusion::Linear { sigma: 0.3 };
        let mut config = SimulationConfig::new(g, coeffs);
        config.y0 = InitialData::Constant(1.0);
        config.n_steps = Some(200);
        config.t_final = 0.2;
        let resolved = config.resolve().unwrap();
        let run = malliavin_path(&config, &resolved, &[50], None, 3, 1).unwrap();
        let y = &run.trajectory.final_state().y;
        let dry = &run.series[0].final_snapshot().dry;
        for i in 0..g.len() {
            assert!((dry.get(i) - 0.3 * y.get(i)).abs() < 1e-12 * y.get(i));
        }
    }
}
