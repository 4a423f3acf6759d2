//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p rpme-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rpme::analysis::{
    barenblatt_comparison, cauchy_refinement, epsilon_sweep, fit_slope, holder_report, linf_check,
    mean_and_se, weak_residual, EstimateReport,
};
use rpme::grid::{forward_diff, inner_product, laplacian, Subset};
use rpme::interp::{interpolation_ratios, pa_eval, pc_eval, pc_inner_product};
use rpme::malliavin::{
    init_malliavin, malliavin_path, perturbation_oracle_resolved, propagate_malliavin,
    step_malliavin,
};
use rpme::model::{pme_beta, r2_bound};
use rpme::simulate::{gen_wiener, run_with_noise, simulate_paths, NoiseSource, WienerPath};
use rpme::transform::{
    build_big_phi, build_psi, example52_profile, example52_transform, invert_psi,
};
use rpme::{Field, GridSpec, SimulationConfig, SystemState};
use rpme_cli::config::{parse_key_values, RunConfig};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn config(text: &str) -> SimulationConfig {
    let pairs = parse_key_values(text).expect("well-formed config");
    RunConfig::from_pairs(&pairs)
        .and_then(|c| c.simulation())
        .expect("valid config")
}

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Mixed smooth source, Itô noise on `y` and a `c`–`y` coupling.
const COUPLED: &str = "\
T=0.5
coeff.f=logistic_f
coeff.f.lambda=1
coeff.f.K=1
coeff.f.mu_y=0.5
coeff.a=linear_a
coeff.a.sigma=0.3
coeff.b=coupling_b
coeff.b.kappa=0.5
coeff.b.rho=1
init.c=sine
init.c.amplitude=0.5
init.y=cosine
init.y.offset=1
init.y.amplitude=0.5
";

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// 1. Difference operators.

fn operators() -> Check {
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst_lap = 0.0_f64;
    let mut worst_fd = 0.0_f64;
    for dim in 1..=3 {
        for cells in [2, 5, 9] {
            let g = GridSpec::new(dim, cells).map_err(err)?;
            let sq = Field::from_fn(g, |x| x.iter().map(|v| v * v).sum());
            for (_, v) in laplacian(&sq).iter_defined() {
                worst_lap = worst_lap.max(rel(v, 2.0 * dim as f64));
            }
            let slope: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let affine = Field::from_fn(g, |x| {
                0.7 + x.iter().zip(&slope).map(|(a, b)| a * b).sum::<f64>()
            });
            for (k, &s) in slope.iter().enumerate() {
                for (_, v) in forward_diff(&affine, k).map_err(err)?.iter_defined() {
                    worst_fd = worst_fd.max((v - s).abs() / s.abs().max(1.0));
                }
            }
        }
    }
    let mut worst_sbp = 0.0_f64;
    for trial in 0..100 {
        let dim = 1 + trial % 3;
        let cells = rng.random_range(2..=16);
        let g = GridSpec::new(dim, cells).map_err(err)?;
        let a = Field::from_fn(g, |_| rng.random_range(-1.0..1.0));
        let b = Field::from_fn(g, |_| rng.random_range(-1.0..1.0));
        let (lhs, rhs, scale) = sbp_sides(&a, &b)?;
        worst_sbp = worst_sbp.max((lhs - rhs).abs() / scale);
    }
    let msg = format!(
        "laplacian(Σx²) rel err {worst_lap:.1e}, affine forward diff err {worst_fd:.1e}, \
         summation by parts rel err {worst_sbp:.1e} (100 trials)"
    );
    ensure(
        worst_lap <= 1e-10 && worst_fd <= 1e-10 && worst_sbp <= 1e-12,
        msg,
    )
}

/// Both sides of the summation-by-parts identity
///
/// ```text
/// Σ_{i=1}^M (a_{i+1} − 2a_i + a_{i−1}) b_i
///     = −Σ_{i=0}^M (a_{i+1} − a_i)(b_{i+1} − b_i) + (a_{M+1} − a_M) b_{M+1} − (a_1 − a_0) b_0
/// ```
///
/// summed over every grid line through interior nodes. The left side goes
/// through the library Laplacian.
fn sbp_sides(a: &Field, b: &Field) -> Result<(f64, f64, f64), String> {
    let g = *a.grid();
    let h2 = g.spacing() * g.spacing();
    let lap = laplacian(a);
    let mut lhs = 0.0;
    let mut scale = 0.0;
    for (i, v) in lap.iter_defined() {
        lhs += h2 * v * b.get(i);
        scale += (h2 * v * b.get(i)).abs();
    }
    let m1 = g.cells_per_axis() + 1;
    let mut rhs = 0.0;
    for axis in 0..g.dim() {
        let s = g.stride(axis);
        for start in 0..g.len() {
            let ok = (0..g.dim()).all(|k| {
                let c = g.coordinate(start, k);
                if k == axis {
                    c == 0
                } else {
                    c >= 1 && c < m1
                }
            });
            if !ok {
                continue;
            }
            let at = |i: usize| start + i * s;
            for i in 0..m1 {
                let t = (a.get(at(i + 1)) - a.get(at(i))) * (b.get(at(i + 1)) - b.get(at(i)));
                rhs -= t;
                scale += t.abs();
            }
            rhs += (a.get(at(m1)) - a.get(at(m1 - 1))) * b.get(at(m1));
            rhs -= (a.get(at(1)) - a.get(at(0))) * b.get(at(0));
        }
    }
    Ok((lhs, rhs, scale))
}

// 2. Interpolation.

fn interpolation() -> Check {
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst_ip = 0.0_f64;
    let mut commute_ok = true;
    let mut negatives = 0usize;
    let maps: [fn(f64) -> f64; 5] = [
        |s| s * s * s,
        f64::exp,
        |s| s.abs().sqrt(),
        |s| (3.0 * s).sin(),
        |s| s.max(0.0).powf(1.5),
    ];
    for trial in 0..100 {
        let dim = 1 + trial % 3;
        let g = GridSpec::new(dim, rng.random_range(4..=9)).map_err(err)?;
        let u = Field::from_fn(g, |_| rng.random_range(-1.0..1.0));
        let mut vals = vec![0.0; g.len()];
        for i in g.free_indices() {
            vals[i] = rng.random_range(-1.0..1.0);
        }
        let v = Field::from_values(g, vals).map_err(err)?;
        let exact = inner_product(&u, &v, Subset::Full).map_err(err)?;
        let pc = pc_inner_product(&u, &v).map_err(err)?;
        worst_ip = worst_ip.max((pc - exact).abs() / exact.abs().max(1e-3));

        let w = Field::from_fn(g, |_| rng.random_range(0.0..2.0));
        for _ in 0..20 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..=1.0)).collect();
            for phi in maps {
                let lhs = phi(pc_eval(&u, &x).map_err(err)?);
                let rhs = pc_eval(&u.map(phi), &x).map_err(err)?;
                commute_ok &= lhs.to_bits() == rhs.to_bits();
            }
            if pc_eval(&w, &x).map_err(err)? < 0.0 || pa_eval(&w, &x).map_err(err)? < 0.0 {
                negatives += 1;
            }
        }
    }

    let mut growth: Vec<(String, f64)> = Vec::new();
    for dim in [1, 2] {
        let u = |x: &[f64]| {
            x.iter()
                .map(|&v| (std::f64::consts::PI * v).sin())
                .product::<f64>()
                + 0.5 * x.iter().sum::<f64>()
        };
        let grad = |x: &[f64]| -> Vec<f64> {
            (0..x.len())
                .map(|k| {
                    let pi = std::f64::consts::PI;
                    let others: f64 = x
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, &v)| (pi * v).sin())
                        .product();
                    pi * (pi * x[k]).cos() * others + 0.5
                })
                .collect()
        };
        let mut base: Option<Vec<(&'static str, f64)>> = None;
        for cells in [7, 15, 31, 63] {
            let g = GridSpec::new(dim, cells).map_err(err)?;
            let r = interpolation_ratios(u, grad, &g, 4).map_err(err)?.as_vec();
            match &base {
                None => base = Some(r),
                Some(b0) => {
                    for ((name, v), (_, v0)) in r.iter().zip(b0) {
                        let key = format!("{name}[dim={dim}]");
                        let ratio = v / v0;
                        match growth.iter_mut().find(|(k, _)| *k == key) {
                            Some(e) => e.1 = e.1.max(ratio),
                            None => growth.push((key, ratio)),
                        }
                    }
                }
            }
        }
    }
    let (worst_name, worst_growth) =
        growth.iter().cloned().fold(
            (String::new(), 0.0),
            |acc, e| if e.1 > acc.1 { e } else { acc },
        );
    let msg = format!(
        "(Πu, Πv) vs discrete rel err {worst_ip:.1e}, scalar maps commute bitwise: {commute_ok}, \
         negative spline values {negatives}/4000, worst ratio growth over h=1/8 {worst_growth:.3} \
         ({worst_name}, {} suites)",
        growth.len()
    );
    ensure(
        worst_ip <= 1e-13 && commute_ok && negatives == 0 && worst_growth <= 2.0,
        msg,
    )
}

// 3. Barenblatt.

fn barenblatt() -> Check {
    let run = |cells: usize| -> Result<f64, String> {
        let cfg = config(&format!(
            "cells={cells}\nT=1\nbeta=pme:2\ninit.c=barenblatt\ninit.c.m=2\ninit.c.C=0.01\ninit.c.t0=1\n"
        ));
        Ok(barenblatt_comparison(&cfg).map_err(err)?.relative)
    };
    let e64 = run(64)?;
    let e128 = run(128)?;
    let ratio = e64 / e128;
    ensure(
        e128 <= 2e-2 && ratio >= 1.5,
        format!("relative L² error {e128:.3e} at M=128 (≤ 2e-2), ratio 64→128 {ratio:.3} (≥ 1.5)"),
    )
}

// 4. Mass conservation.

fn mass() -> Check {
    let mut worst = 0.0_f64;
    let mut steps = 0usize;
    for (dim, cells) in [(1, 31), (2, 15)] {
        let cfg = config(&format!(
            "dim={dim}\ncells={cells}\nT=0.2\nbc=neumann\nbeta=pme:2\ncoeff.a=linear_a\ncoeff.b=coupling_b\n\
             init.c=sine\ninit.c.amplitude=0.8\ninit.y=cosine\n"
        ));
        let resolved = cfg.resolve().map_err(err)?;
        let noise = gen_wiener(3, 0, resolved.n_steps, resolved.dt).map_err(err)?;
        let mut m0 = None;
        run_with_noise(&cfg, &resolved, &noise, 3, 0, |s| {
            let m = s.interior_mass();
            let m0 = *m0.get_or_insert(m);
            worst = worst.max(rel(m, m0));
            Ok(())
        })
        .map_err(err)?;
        steps += resolved.n_steps;
    }
    ensure(
        worst <= 1e-12,
        format!("relative mass drift {worst:.2e} over {steps} Neumann steps (≤ 1e-12)"),
    )
}

// 5. L∞ bound.

fn linf() -> Check {
    let mut violations = 0usize;
    let mut worst_ratio = 0.0_f64;
    let mut path_steps = 0usize;
    let mut runs = 0usize;
    for beta in ["pme:2", "pme:3", "regularized:2:0.1"] {
        for a in [
            "linear_a\ncoeff.a.sigma=0.3",
            "saturating_a\ncoeff.a.sigma=0.5",
        ] {
            for bc in ["dirichlet", "neumann"] {
                let cfg = config(&format!(
                    "cells=15\nT=1\nmax_dt=1e-3\nbeta={beta}\nbc={bc}\ncoeff.a={a}\n\
                     coeff.f=logistic_f\ncoeff.f.mu_y=0.5\ncoeff.b=coupling_b\n\
                     init.c=sine\ninit.c.amplitude=0.8\ninit.y=cosine\n"
                ));
                let resolved = cfg.resolve().map_err(err)?;
                let trajs = simulate_paths(&cfg, 5, 100).map_err(err)?;
                let report = linf_check(&trajs, resolved.r2).map_err(err)?;
                if !report.passed {
                    violations += 1;
                }
                worst_ratio = worst_ratio.max(report.measured / resolved.r2);
                path_steps = path_steps.max(resolved.n_steps);
                runs += 1;
            }
        }
    }
    // R₂ − R₀ = O(T), so the resolver is probed at T far below the tolerance.
    let flat = config("cells=15\nT=1e-15\ninit.c=sine\ninit.c.amplitude=0.7\n");
    let res = flat.resolve().map_err(err)?;
    let beta2 = pme_beta(2.0).map_err(err)?;
    let limit_err = rel(res.r2, res.c0_sup).max(rel(r2_bound(0.0, res.c0_sup, &beta2), res.c0_sup));
    let exact = r2_bound(1.0, 1.0, &beta2);
    let msg = format!(
        "{violations} violating configs of {runs} (100 paths, ≥{path_steps} steps each), \
         max sup c/R₂ {worst_ratio:.3}; R₂(T→0)/‖c₀‖∞ − 1 = {limit_err:.1e}; R₂(1, 1, m=2) = {exact:.5}"
    );
    ensure(
        violations == 0 && limit_err <= 1e-12 && (exact - 19.6831).abs() <= 1e-3,
        msg,
    )
}

// 6. SDE moments.

fn sde_moments() -> Check {
    let cfg = config(
        "cells=2\nT=1\nn_steps=1000\nsnapshot_stride=8\ncoeff.a=linear_a\ncoeff.a.sigma=0.3\n\
         init.y=constant\ninit.y.value=1\n",
    );
    let trajs = simulate_paths(&cfg, 6, 10_000).map_err(err)?;
    let node = 1;
    let y2: Vec<f64> = trajs
        .iter()
        .map(|t| t.final_state().y.get(node).powi(2))
        .collect();
    let (mean, se) = mean_and_se(&y2);
    let expected = 0.09_f64.exp();
    let z = (mean - expected).abs() / se;
    let lags = [0.008, 0.016, 0.032, 0.064, 0.128];
    let holder = holder_report(&trajs, 2.0, &lags).map_err(err)?;
    let exponent = holder[0].measured;
    ensure(
        z <= 3.0 && (exponent - 0.5).abs() <= 0.15,
        format!(
            "E[y(1)²] = {mean:.5} ± {se:.5} vs e^0.09 = {expected:.5} ({z:.2} SE, ≤ 3); \
             Hölder exponent {exponent:.3} (0.5 ± 0.15)"
        ),
    )
}

// 7. Malliavin derivatives.

struct Poisoned<'a> {
    inner: &'a WienerPath,
    before: usize,
}

impl NoiseSource for Poisoned<'_> {
    fn increment(&self, step: usize) -> f64 {
        if step < self.before {
            f64::NAN
        } else {
            self.inner.increment(step)
        }
    }
}

fn rel_l2(a: &Field, b: &Field) -> f64 {
    let num: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let den: f64 = b.values().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn malliavin() -> Check {
    // Geometric noise: D_r y(T) = σ y(T).
    let geo =
        config("cells=7\nT=1\nn_steps=1000\ncoeff.a=linear_a\ncoeff.a.sigma=0.3\ninit.y=cosine\n");
    let res = geo.resolve().map_err(err)?;
    let run = malliavin_path(&geo, &res, &[250], None, 7, 0).map_err(err)?;
    let sigma_y = run.trajectory.final_state().y.scaled(0.3);
    let closed = rel_l2(&run.series[0].final_snapshot().dry, &sigma_y);

    // Cameron–Martin shift of four increments vs the mean of the four
    // variational solutions it averages.
    let cfg = config(COUPLED);
    let res = cfg.resolve().map_err(err)?;
    let r = res.n_steps / 4;
    let delta = 4;
    let rs: Vec<usize> = (r..r + delta).collect();
    let run = malliavin_path(&cfg, &res, &rs, None, 7, 1).map_err(err)?;
    let g = cfg.grid;
    let mut drc = vec![0.0; g.len()];
    let mut dry = vec![0.0; g.len()];
    for s in &run.series {
        let last = s.final_snapshot();
        for i in 0..g.len() {
            drc[i] += last.drc.get(i) / delta as f64;
            dry[i] += last.dry.get(i) / delta as f64;
        }
    }
    let (oc, oy) = perturbation_oracle_resolved(&cfg, &res, 7, 1, r, delta, 1e-3).map_err(err)?;
    let diff_c = rel_l2(&Field::from_values(g, drc).map_err(err)?, &oc);
    let diff_y = rel_l2(&Field::from_values(g, dry).map_err(err)?, &oy);

    // Locality: increments before r are never read.
    let noise = gen_wiener(7, 2, res.n_steps, res.dt).map_err(err)?;
    let rs = [r, 2 * r];
    let clean = propagate_malliavin(&cfg, &res, &noise, &noise, &rs, None, 7, 2).map_err(err)?;
    let poisoned = Poisoned {
        inner: &noise,
        before: r,
    };
    let dirty = propagate_malliavin(&cfg, &res, &noise, &poisoned, &rs, None, 7, 2).map_err(err)?;
    let local = clean.series == dirty.series;

    // Linearity of one variational step under exact binary scalings.
    let mut states: Vec<SystemState> = Vec::new();
    run_with_noise(&cfg, &res, &noise, 7, 2, |s| {
        if s.step <= 40 {
            states.push(s.clone());
        }
        Ok(())
    })
    .map_err(err)?;
    let mut m = init_malliavin(&states[20], &cfg.coeffs);
    let step = |m: &rpme::malliavin::MalliavinState, n: usize| {
        step_malliavin(
            m,
            &states[n],
            &states[n + 1],
            &cfg.coeffs,
            noise.increment(n),
            res.dt,
            cfg.bc,
        )
    };
    for n in 20..39 {
        m = step(&m, n).map_err(err)?;
    }
    let base = step(&m, 39).map_err(err)?;
    let mut linear = true;
    for lambda in [2.0, 0.5] {
        linear &= step(&m.scaled(lambda), 39).map_err(err)? == base.scaled(lambda);
    }
    let nonzero = base.drc.max_abs() > 0.0 && base.dry.max_abs() > 0.0;

    ensure(
        closed <= 5e-2 && diff_c <= 5e-2 && diff_y <= 5e-2 && local && linear && nonzero,
        format!(
            "D_r y vs σy rel err {closed:.1e}; variational vs shifted-path oracle rel diff \
             c {diff_c:.2e}, y {diff_y:.2e} (≤ 5e-2); locality bitwise: {local}; \
             linearity bitwise: {linear}"
        ),
    )
}

// 8. Transforms.

fn transforms() -> Check {
    let n = 200;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let tt = build_big_phi(|_, _| 1.0, &grid, &grid, 4).map_err(err)?;
    let tt = build_psi(tt, |_| 1.0).map_err(err)?;
    let psi = tt.psi.as_ref().expect("psi filled");
    let mut phi_err = 0.0_f64;
    let mut psi_err = 0.0_f64;
    for (i, &k) in grid.iter().enumerate() {
        for (j, &d) in grid.iter().enumerate() {
            let idx = i * n + j;
            phi_err = phi_err.max((tt.big_phi[idx] - k.powi(3) * d * d / 24.0).abs());
            psi_err = psi_err.max((psi[idx] - k.powi(4) * d * d / 96.0).abs());
        }
    }

    let gamma = 0.5;
    let second = |f: &dyn Fn(f64) -> f64, s: f64| (f(s) - 2.0 * f(0.0) + f(-s)) / (s * s);
    let w = |x: f64| example52_profile(gamma, x).expect("x in [-1, 1]");
    let composed = |x: f64| example52_transform(gamma, w(x)).expect("w in [0, 1]");
    let steps = [1e-2, 1e-3, 1e-4];
    let raw: Vec<f64> = steps.iter().map(|&s| second(&w, s)).collect();
    let comp: Vec<f64> = steps.iter().map(|&s| second(&composed, s)).collect();
    let raw_growth = raw
        .windows(2)
        .map(|p| p[1] / p[0])
        .fold(f64::INFINITY, f64::min);
    let comp_max = comp.iter().cloned().fold(0.0, f64::max);

    let mut rng = StdRng::seed_from_u64(8);
    let mut round_trip = 0.0_f64;
    for _ in 0..100 {
        let k: f64 = rng.random_range(0.0..1.0);
        let d: f64 = rng.random_range(0.05..1.0);
        let v = tt.psi_at(k, d).map_err(err)?;
        round_trip = round_trip.max((invert_psi(&tt, d, v).map_err(err)? - k).abs());
    }
    ensure(
        phi_err <= 1e-6
            && psi_err <= 1e-6
            && comp_max <= 1.0
            && raw_growth >= 10.0
            && round_trip <= 1e-8,
        format!(
            "Φ vs k³d²/24 {phi_err:.1e}, Ψ vs k⁴d²/96 {psi_err:.1e} (≤ 1e-6); composed second \
             differences ≤ {comp_max:.2e}, raw ones grow ≥ {raw_growth:.1}× per decade; \
             Ψ round trip {round_trip:.1e} (≤ 1e-8)"
        ),
    )
}

// 9. Weak-form residual.

fn weak_order() -> Check {
    let base = COUPLED
        .replace("T=0.5", "T=0.25")
        .replace("coeff.a=linear_a\ncoeff.a.sigma=0.3\n", "");
    let mut log_dt = Vec::new();
    let mut log_r = Vec::new();
    let mut values = Vec::new();
    for k in 0..4 {
        let n = 496 << k;
        let cfg = config(&format!(
            "{base}cells=15\nbeta=regularized:2:0.1\nn_steps={n}\nsnapshot_stride=1\n"
        ));
        let traj = rpme::simulate::simulate_path(&cfg, 9, 0).map_err(err)?;
        let r = weak_residual(&cfg, &traj, 8, 9).map_err(err)?.measured;
        log_dt.push(traj.dt.ln());
        log_r.push(r.ln());
        values.push(r);
    }
    let order = fit_slope(&log_dt, &log_r);
    ensure(
        order >= 0.9,
        format!(
            "residuals {} for dt halving from T/496; fitted order {order:.3} (≥ 0.9)",
            values
                .iter()
                .map(|v| format!("{v:.2e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

// 10. Refinement and ε convergence.

fn decreasing(reports: &[EstimateReport], prefix: &str) -> (bool, Vec<f64>) {
    let xs: Vec<f64> = reports
        .iter()
        .filter(|r| r.name.starts_with(prefix))
        .map(|r| r.measured)
        .collect();
    (xs.len() >= 2 && xs.windows(2).all(|w| w[1] < w[0]), xs)
}

fn fmt_seq(xs: &[f64]) -> String {
    xs.iter()
        .map(|v| format!("{v:.2e}"))
        .collect::<Vec<_>>()
        .join(" > ")
}

fn convergence() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in ["pme:2", "regularized:2:0.1"] {
        let cfg = config(&format!("{COUPLED}beta={beta}\n"));
        let table = cauchy_refinement(&cfg, &[15, 31, 63], 100, 10).map_err(err)?;
        let reports = table.reports();
        for field in ["cauchy_c", "cauchy_y"] {
            let (dec, xs) = decreasing(&reports, field);
            ok &= dec;
            parts.push(format!("{beta} {field} {}", fmt_seq(&xs)));
        }
    }
    let cfg = config(&format!("{COUPLED}cells=31\n"));
    let sweep = epsilon_sweep(&cfg, &[0.1, 0.025, 0.00625], 100, 10).map_err(err)?;
    let reports = sweep.reports();
    for prefix in ["eps_distance_next", "eps_distance_degenerate"] {
        let (dec, xs) = decreasing(&reports, prefix);
        ok &= dec;
        parts.push(format!("{prefix} {}", fmt_seq(&xs)));
    }
    ensure(ok, parts.join("; "))
}

// 11. Determinism through the binary.

fn run_cli(cmd: &str, cfg: &Path, out: &Path, workers: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_rpme"))
        .args([cmd, "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .status()
        .map_err(err)?;
    ensure(status.success(), format!("rpme {cmd} exited with {status}")).map(|_| ())
}

fn collect_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable output dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                let rel = p
                    .strip_prefix(dir)
                    .expect("inside dir")
                    .display()
                    .to_string();
                out.push((rel, std::fs::read(&p).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let cfg_path = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        format!("{COUPLED}cells=15\nn_paths=8\nseed=42\n"),
    )
    .map_err(err)?;
    let mut compared = 0usize;
    for cmd in ["simulate", "malliavin", "verify"] {
        let runs: Vec<Vec<(String, Vec<u8>)>> = [(1, "a"), (4, "b"), (1, "c")]
            .iter()
            .map(|&(w, tag)| {
                let out = tmp.path().join(format!("{cmd}-{tag}"));
                run_cli(cmd, &cfg_path, &out, w).map(|_| collect_files(&out))
            })
            .collect::<Result<_, _>>()?;
        if runs[0].is_empty() || runs.iter().any(|r| *r != runs[0]) {
            return Err(format!(
                "{cmd}: outputs differ between runs or worker counts"
            ));
        }
        compared += runs[0].len();
    }
    Ok(format!(
        "{compared} RPME1/CSV files byte-identical across repeated runs and 1 vs 4 workers"
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("discrete operators", operators),
        ("interpolation identities and ratios", interpolation),
        ("Barenblatt profile", barenblatt),
        ("mass conservation", mass),
        ("L-infinity bound", linf),
        ("SDE moments", sde_moments),
        ("Malliavin derivatives", malliavin),
        ("transforms", transforms),
        ("weak-form residual order", weak_order),
        ("refinement and epsilon convergence", convergence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS [{:>2}] {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
