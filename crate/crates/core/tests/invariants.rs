use proptest::prelude::*;
use rpme::grid::{inner_product, laplacian, lp_norm, HMinus2, Subset};
use rpme::interp::{pa_eval, pc_distance_sq, pc_eval, pc_inner_product};
use rpme::model::{pme_beta, regularize_beta};
use rpme::simulate::{
    coarsen_wiener, gen_wiener, read_rpme1, simulate_path, step, wiener_increment, write_rpme1,
};
use rpme::transform::{build_big_phi, build_psi, invert_psi};
use rpme::{
    BoundaryKind, CoefficientSet, Diffusion, Drift, Field, GridSpec, InitialData, SimulationConfig,
    Source,
};

fn field(g: GridSpec, vals: &[f64]) -> Field {
    Field::from_values(g, vals.iter().cycle().take(g.len()).copied().collect()).unwrap()
}

fn unit_grid(n: usize, top: f64) -> Vec<f64> {
    (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summation_by_parts_1d(
        cells in 2usize..=16,
        a in prop::collection::vec(-1.0f64..1.0, 18),
        b in prop::collection::vec(-1.0f64..1.0, 18),
    ) {
        let g = GridSpec::new(1, cells).unwrap();
        let (fa, fb) = (field(g, &a), field(g, &b));
        let h2 = g.spacing() * g.spacing();
        let lhs: f64 = laplacian(&fa).iter_defined().map(|(i, v)| h2 * v * fb.get(i)).sum();
        let m1 = cells + 1;
        let (a, b) = (fa.values(), fb.values());
        let mut rhs = (a[m1] - a[m1 - 1]) * b[m1] - (a[1] - a[0]) * b[0];
        for i in 0..m1 {
            rhs -= (a[i + 1] - a[i]) * (b[i + 1] - b[i]);
        }
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn splines_preserve_nonnegativity(
        dim in 1usize..=3,
        cells in 2usize..=6,
        vals in prop::collection::vec(0.0f64..5.0, 8..40),
        x in prop::collection::vec(0.0f64..=1.0, 3),
    ) {
        let g = GridSpec::new(dim, cells).unwrap();
        let u = field(g, &vals);
        prop_assert!(pc_eval(&u, &x[..dim]).unwrap() >= 0.0);
        prop_assert!(pa_eval(&u, &x[..dim]).unwrap() >= 0.0);
    }

    #[test]
    fn polyaffine_interpolates_nodes(
        dim in 1usize..=2,
        cells in 2usize..=5,
        vals in prop::collection::vec(-2.0f64..2.0, 8..40),
    ) {
        let g = GridSpec::new(dim, cells).unwrap();
        let u = field(g, &vals);
        for idx in 0..g.len() {
            prop_assert!((pa_eval(&u, &g.position(idx)).unwrap() - u.get(idx)).abs() < 1e-13);
        }
    }

    #[test]
    fn pc_distance_is_a_squared_metric(
        cells in 2usize..=8,
        a in prop::collection::vec(-1.0f64..1.0, 10),
        b in prop::collection::vec(-1.0f64..1.0, 10),
    ) {
        let g = GridSpec::new(2, cells).unwrap();
        let (u, v) = (field(g, &a), field(g, &b));
        let d = pc_distance_sq(&u, &v).unwrap();
        prop_assert!(pc_distance_sq(&u, &u).unwrap().abs() < 1e-15);
        prop_assert!((d - pc_distance_sq(&v, &u).unwrap()).abs() < 1e-13);
        let w = u.sub(&v).unwrap();
        prop_assert!((d - pc_inner_product(&w, &w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hminus2_is_a_seminorm(
        cells in 4usize..=9,
        a in prop::collection::vec(-1.0f64..1.0, 10),
        b in prop::collection::vec(-1.0f64..1.0, 10),
        lambda in -3.0f64..3.0,
    ) {
        let g = GridSpec::new(1, cells).unwrap();
        let op = HMinus2::new(g);
        let (u, v) = (field(g, &a), field(g, &b));
        let nu = op.norm(&u).unwrap();
        let nv = op.norm(&v).unwrap();
        prop_assert!(nu >= 0.0);
        prop_assert!((op.norm(&u.scaled(lambda)).unwrap() - lambda.abs() * nu).abs() <= 1e-10 * (1.0 + nu));
        let sum = u.zip_with(&v, |x, y| x + y).unwrap();
        prop_assert!(op.norm(&sum).unwrap() <= nu + nv + 1e-10);
    }

    #[test]
    fn beta_inverse_and_reciprocal(m in 1.1f64..4.0, eps in 0.01f64..0.9, c in 1e-6f64..10.0) {
        for beta in [pme_beta(m).unwrap(), regularize_beta(m, eps).unwrap()] {
            let back = beta.inverse(beta.value(c));
            prop_assert!((back - c).abs() <= 1e-9 * c.max(1.0));
            prop_assert!((beta.prime(c) * beta.reciprocal_prime(c) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn wiener_increments_are_keyed_and_coarsen_by_sums(
        seed in any::<u64>(),
        path in 0u64..1000,
        factor in 1usize..=4,
    ) {
        let dt = 1e-2;
        let n = 8 * factor;
        let w = gen_wiener(seed, path, n, dt).unwrap();
        for (k, &inc) in w.increments().iter().enumerate() {
            prop_assert_eq!(inc.to_bits(), wiener_increment(seed, path, k, dt).to_bits());
        }
        let c = coarsen_wiener(&w, factor).unwrap();
        prop_assert_eq!(c.len(), 8);
        for (j, &s) in c.increments().iter().enumerate() {
            let direct: f64 = w.increments()[j * factor..(j + 1) * factor].iter().sum();
            prop_assert_eq!(s.to_bits(), direct.to_bits());
        }
    }

    #[test]
    fn explicit_step_keeps_c_and_y_nonnegative(
        vals in prop::collection::vec(0.0f64..2.0, 9),
        ys in prop::collection::vec(0.0f64..2.0, 9),
        dw in -0.5f64..0.5,
        neumann in any::<bool>(),
    ) {
        let g = GridSpec::new(1, 7).unwrap();
        let coeffs = CoefficientSet::new(
            pme_beta(2.0).unwrap(),
            Source::Logistic { lambda: 1.0, capacity: 1.0, mu_y: 0.5 },
            Diffusion::Linear { sigma: 0.3 },
            Drift::Coupling { kappa: 0.5, rho: 1.0 },
        );
        let bc = if neumann { BoundaryKind::Neumann } else { BoundaryKind::Dirichlet };
        let mut cfg = SimulationConfig::new(g, coeffs.clone());
        cfg.bc = bc;
        let mut state = cfg.initial_state().unwrap();
        state.c = field(g, &vals);
        state.v = state.c.map(|c| coeffs.beta.value(c));
        state.y = field(g, &ys);
        let dt = rpme::simulate::cfl_dt(&g, &coeffs, 2.0, 0.5).unwrap();
        let next = step(&state, &coeffs, dw, dt, bc).unwrap();
        prop_assert!(next.c.min() >= 0.0);
        prop_assert!(next.y.min() >= 0.0);
    }

    #[test]
    fn big_phi_is_monotone_and_homogeneous(a in 0.0f64..2.0, b in 0.0f64..2.0, s in 0.5f64..3.0) {
        let k = unit_grid(9, 1.0);
        let d = unit_grid(7, 0.5);
        let phi = move |x: f64, y: f64| a + b * x * y;
        let tt = build_big_phi(phi, &k, &d, 2).unwrap();
        let scaled = build_big_phi(move |x, y| s * phi(x, y), &k, &d, 2).unwrap();
        let nd = d.len();
        for i in 0..k.len() {
            for j in 0..nd {
                let v = tt.big_phi[i * nd + j];
                prop_assert!(v >= 0.0);
                if i + 1 < k.len() {
                    prop_assert!(tt.big_phi[(i + 1) * nd + j] >= v);
                }
                if j + 1 < nd {
                    prop_assert!(tt.big_phi[i * nd + j + 1] >= v);
                }
                prop_assert!((scaled.big_phi[i * nd + j] - s * s * v).abs() <= 1e-12 * (1.0 + v));
            }
        }
    }

    #[test]
    fn invert_psi_round_trips(k in 0.0f64..1.0, d in 0.05f64..1.0) {
        let g = unit_grid(33, 1.0);
        let tt = build_psi(build_big_phi(|_, _| 1.0, &g, &g, 2).unwrap(), |_| 1.0).unwrap();
        let v = tt.psi_at(k, d).unwrap();
        prop_assert!((invert_psi(&tt, d, v).unwrap() - k).abs() <= 1e-8);
    }
}

#[test]
fn rpme1_round_trip() {
    let g = GridSpec::new(2, 3).unwrap();
    let mut cfg = SimulationConfig::new(
        g,
        CoefficientSet::new(
            pme_beta(2.0).unwrap(),
            Source::Zero,
            Diffusion::Linear { sigma: 0.2 },
            Drift::Zero,
        ),
    );
    cfg.t_final = 0.05;
    cfg.c0 = InitialData::Sine { amplitude: 0.5 };
    cfg.y0 = InitialData::Constant(1.0);
    let traj = simulate_path(&cfg, 4, 2).unwrap();
    let mut buf = Vec::new();
    write_rpme1(&mut buf, &traj, None).unwrap();
    let back = read_rpme1(&mut buf.as_slice()).unwrap();
    assert_eq!(back.grid, g);
    assert_eq!((back.seed, back.path_id, back.dt), (4, 2, traj.dt));
    assert_eq!(back.snapshots.len(), traj.snapshots.len());
    for (a, b) in back.snapshots.iter().zip(&traj.snapshots) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.c, b.c.values());
        assert_eq!(a.y, b.y.values());
    }
    assert!(back.malliavin.is_none());
    assert!(read_rpme1(&mut &buf[..buf.len() - 3]).is_err());
}

#[test]
fn discrete_inner_product_matches_pc_on_free_support() {
    let g = GridSpec::new(2, 6).unwrap();
    let u = Field::from_fn(g, |x| x[0] - 2.0 * x[1] * x[1]);
    let mut vals = vec![0.0; g.len()];
    for (n, i) in g.free_indices().into_iter().enumerate() {
        vals[i] = (n as f64).sin();
    }
    let v = Field::from_values(g, vals).unwrap();
    let a = inner_product(&u, &v, Subset::Full).unwrap();
    let b = pc_inner_product(&u, &v).unwrap();
    assert!((a - b).abs() < 1e-14);
    assert!(lp_norm(&v, 2.0, Subset::Interior).unwrap() > 0.0);
}
