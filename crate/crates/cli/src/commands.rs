//! The six subcommands. Each one computes its reports and output files in
//! memory and only then writes them, manifest last.

use std::time::Instant;

use rpme::analysis::{
    barenblatt_error, cauchy_refinement, check_nested, energy_report, epsilon_sweep, holder_report,
    linf_check, malliavin_report, moment_report, transform_report, weak_residual, EstimateReport,
};
use rpme::grid::HMinus2;
use rpme::malliavin::{malliavin_path, MalliavinRun};
use rpme::simulate::{
    map_paths, simulate_path, simulate_paths, write_rpme1, MalliavinRecord, Resolved,
};
use rpme::transform::{
    build_big_phi, build_psi, cap_phi, gamma_weight, BoundaryWeight, TabulatedTransform,
};
use rpme::{SimulationConfig, Trajectory};

use crate::config::RunConfig;
use crate::output::{commit, reports_csv, Outputs, RunSummary};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Simulate,
    Verify,
    Malliavin,
    Converge,
    SweepEps,
    TransformDemo,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Verify => "verify",
            Subcommand::Malliavin => "malliavin",
            Subcommand::Converge => "converge",
            Subcommand::SweepEps => "sweep-eps",
            Subcommand::TransformDemo => "transform-demo",
        }
    }
}

/// What a finished run reports back to the caller.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<EstimateReport>,
}

impl RunOutcome {
    /// False when some report with a hard bound exceeded it.
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

struct Computed {
    reports: Vec<EstimateReport>,
    outputs: Outputs,
    resolved: Resolved,
}

/// Runs `cmd` and writes its outputs under `cfg.out`.
pub fn run_command(cmd: Subcommand, cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let sim = cfg.simulation()?;
    let mut computed = match cmd {
        Subcommand::Simulate => simulate(cfg, &sim)?,
        Subcommand::Verify => verify(cfg, &sim)?,
        Subcommand::Malliavin => malliavin(cfg, &sim)?,
        Subcommand::Converge => converge(cfg, &sim)?,
        Subcommand::SweepEps => sweep_eps(cfg, &sim)?,
        Subcommand::TransformDemo => transform_demo(cfg, &sim)?,
    };
    for r in &computed.reports {
        log::info!(
            "{}: {:.6e}{}",
            r.name,
            r.measured,
            r.bound
                .map_or(String::new(), |b| format!(" (bound {b:.6e})"))
        );
    }
    computed.outputs.add(
        format!("reports/{}.csv", cmd.name()),
        reports_csv(&computed.reports)?,
    );
    let summary = RunSummary {
        subcommand: cmd.name(),
        config: cfg.to_pairs(),
        dt: computed.resolved.dt,
        n_steps: computed.resolved.n_steps,
        r2: computed.resolved.r2,
        reports: computed.reports.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    commit(&cfg.out, &computed.outputs, &summary)?;
    Ok(RunOutcome {
        reports: computed.reports,
    })
}

fn path_file(id: u64) -> String {
    format!("paths/path_{id:05}.rpme1")
}

fn encode(traj: &Trajectory, records: Option<&[MalliavinRecord]>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_rpme1(&mut buf, traj, records)?;
    Ok(buf)
}

fn simulate(cfg: &RunConfig, sim: &SimulationConfig) -> Result<Computed, CliError> {
    let resolved = sim.resolve()?;
    let trajs = simulate_paths(sim, cfg.seed, cfg.n_paths)?;
    let mut reports = vec![linf_check(&trajs, resolved.r2)?];
    reports.extend(energy_report(&trajs[0])?);
    let mut outputs = Outputs::default();
    for t in &trajs {
        outputs.add(path_file(t.path_id), encode(t, None)?);
    }
    Ok(Computed {
        reports,
        outputs,
        resolved,
    })
}

fn verify(cfg: &RunConfig, sim: &SimulationConfig) -> Result<Computed, CliError> {
    let resolved = sim.resolve()?;
    let trajs = simulate_paths(sim, cfg.seed, cfg.n_paths)?;
    let mut reports = vec![linf_check(&trajs, resolved.r2)?];
    reports.extend(energy_report(&trajs[0])?);
    reports.extend(moment_report(&trajs, cfg.q)?);
    if !sim.coeffs.a.is_zero() {
        reports.extend(holder_report(&trajs, cfg.q, &cfg.lags)?);
    }
    if cfg.weak_tests > 0 && !sim.grid.free_indices().is_empty() {
        let mut dense = sim.clone();
        dense.snapshot_stride = Some(1);
        let traj = simulate_path(&dense, cfg.seed, 0)?;
        reports.push(weak_residual(&dense, &traj, cfg.weak_tests, cfg.seed)?);
    }
    if cfg.c0.name == "barenblatt" {
        reports.push(barenblatt_error(sim)?);
    }
    Ok(Computed {
        reports,
        outputs: Outputs::default(),
        resolved,
    })
}

fn records(run: &MalliavinRun) -> Vec<MalliavinRecord> {
    run.series
        .iter()
        .flat_map(|s| {
            s.snapshots.iter().map(move |snap| MalliavinRecord {
                r: s.r,
                t: snap.t,
                drc: snap.drc.values().to_vec(),
                dry: snap.dry.values().to_vec(),
            })
        })
        .collect()
}

fn malliavin(cfg: &RunConfig, sim: &SimulationConfig) -> Result<Computed, CliError> {
    let resolved = sim.resolve()?;
    let r_indices = if cfg.r_indices.is_empty() {
        vec![resolved.n_steps / 4, resolved.n_steps / 2]
    } else {
        cfg.r_indices.clone()
    };
    let op = HMinus2::new(sim.grid);
    let hminus2 = (!op.is_empty()).then_some(&op);
    let runs = map_paths(sim.workers, cfg.n_paths, |id| {
        malliavin_path(sim, &resolved, &r_indices, hminus2, cfg.seed, id)
    })?;
    let mut outputs = Outputs::default();
    for run in &runs {
        let recs = records(run);
        outputs.add(
            path_file(run.trajectory.path_id),
            encode(&run.trajectory, Some(&recs))?,
        );
    }
    Ok(Computed {
        reports: malliavin_report(&runs, &cfg.lags)?,
        outputs,
        resolved,
    })
}

fn converge(cfg: &RunConfig, sim: &SimulationConfig) -> Result<Computed, CliError> {
    check_nested(&cfg.levels)?;
    let table = cauchy_refinement(sim, &cfg.levels, cfg.n_paths, cfg.seed)?;
    Ok(Computed {
        reports: table.reports(),
        outputs: Outputs::default(),
        resolved: sim.resolve()?,
    })
}

fn sweep_eps(cfg: &RunConfig, sim: &SimulationConfig) -> Result<Computed, CliError> {
    let table = epsilon_sweep(sim, &cfg.eps, cfg.n_paths, cfg.seed)?;
    Ok(Computed {
        reports: table.reports(),
        outputs: Outputs::default(),
        resolved: sim.resolve()?,
    })
}

fn linear_grid(max: f64, points: usize) -> Vec<f64> {
    let n = points.max(2) - 1;
    let mut g: Vec<f64> = (0..n).map(|i| max * i as f64 / n as f64).collect();
    g.push(max);
    g
}

/// `Φ` and `Ψ` tabulated on `[0, k_max] × [0, d_max]`.
pub fn demo_transform(
    cfg: &RunConfig,
    sim: &SimulationConfig,
    k_max: f64,
    d_max: f64,
) -> Result<TabulatedTransform, CliError> {
    let ts = &cfg.transform;
    let k_grid = linear_grid(k_max, ts.k_points);
    let d_grid = linear_grid(d_max, ts.d_points);
    let beta = sim.coeffs.beta;
    let tt = if ts.phi == "one" {
        build_big_phi(|_, _| 1.0, &k_grid, &d_grid, ts.refine)?
    } else {
        let phi = cap_phi(|_, _| 1.0, move |k| beta.prime(k));
        build_big_phi(phi, &k_grid, &d_grid, ts.refine)?
    };
    Ok(build_psi(tt, |k| beta.prime(k))?.with_p(ts.p))
}

fn transform_demo(cfg: &RunConfig, sim: &SimulationConfig) -> Result<Computed, CliError> {
    let resolved = sim.resolve()?;
    let traj = simulate_path(sim, cfg.seed, 0)?;
    let k_max = traj.max_c().max(traj.final_state().running_max_c).max(1.0);
    let weight = BoundaryWeight::new(cfg.transform.scale, cfg.t_final)?;
    // γ peaks at the centre of the cube; evaluating it there keeps the
    // table edge bitwise at or above every value the report looks up.
    let t_top = traj.times().into_iter().fold(cfg.t_final, f64::max);
    let d_max = gamma_weight(t_top, &vec![0.5; cfg.dim], &weight);
    let tt = demo_transform(cfg, sim, k_max, d_max)?;
    let reports = transform_report(&traj, &tt, &weight)?;
    let mut table = Vec::new();
    tt.write_csv(&mut table)?;
    let mut outputs = Outputs::default();
    outputs.add("transforms/table.csv", table);
    Ok(Computed {
        reports,
        outputs,
        resolved,
    })
}
