use std::sync::OnceLock;

use proptest::prelude::*;

use nonlocal_fronts::cli::{parse_config, RunManifest};
use nonlocal_fronts::dynamics::{
    integrate, stationary_solution, IntegratorConfig, PeriodicRhs, Rhs,
};
use nonlocal_fronts::habitat::{
    FourierSeries, Kernel, KernelShape, Medium, PeriodCell, PeriodicField,
};
use nonlocal_fronts::spectral::{assemble, principal_eigenpair, principal_eigenvalue_of, shift_check, EigenSolver};
use nonlocal_fronts::speed::{
    build_wave_params, decay_rate_for_speed, spreading_speed, SpeedResult, WaveChoices, WaveParams,
};

fn cell() -> PeriodCell {
    PeriodCell::new(1.0, 32).unwrap()
}

fn medium(a0: &FourierSeries) -> Medium {
    Medium::from_series(
        cell(),
        a0,
        &FourierSeries::constant(1.0),
        Kernel::new(KernelShape::Quartic, 0.5, 16).unwrap(),
    )
    .unwrap()
}

/// `c0 + a1 cos + b1 sin + a2 cos 2 + b2 sin 2` with oscillation below 1.
fn series() -> impl Strategy<Value = FourierSeries> {
    (0.3f64..1.5, prop::collection::vec((-0.12f64..0.12, -0.12f64..0.12), 0..3)).prop_map(
        |(constant, harmonics)| FourierSeries {
            constant,
            harmonics,
        },
    )
}

fn shared() -> &'static (Medium, SpeedResult, WaveParams) {
    static CELL: OnceLock<(Medium, SpeedResult, WaveParams)> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = medium(&FourierSeries::cosine(1.0, 0.4));
        let solver = EigenSolver::default();
        let s = spreading_speed(&m, 1.0, (0.05, 50.0), &solver).unwrap();
        let p = build_wave_params(1.2 * s.c_star, &s, &m, WaveChoices::default(), &solver).unwrap();
        (m, s, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_quadrature_has_unit_mass(
        radius in 0.05f64..3.0,
        q in 16usize..300,
        bump in any::<bool>(),
        mu in 0.0f64..6.0,
    ) {
        let shape = if bump { KernelShape::SmoothBump } else { KernelShape::Quartic };
        let k = Kernel::new(shape, radius, q).unwrap();
        prop_assert!((k.total_mass() - 1.0).abs() < 1e-13);
        prop_assert!((k.tilted_mass(0.0, 1.0) - 1.0).abs() < 1e-13);
        let (fwd, back) = (k.tilted_mass(mu, 1.0), k.tilted_mass(mu, -1.0));
        prop_assert!((fwd - back).abs() <= 1e-12 * fwd);
        // Zero-mean kernel: Jensen.
        prop_assert!(fwd >= 1.0 - 1e-13);
    }

    #[test]
    fn stencil_preserves_constants(a0 in series(), level in -2.0f64..2.0, i in -200i64..200) {
        let m = medium(&a0);
        let v = m.stencil().apply_at(i, |_| level);
        prop_assert!((v - level).abs() <= 1e-13 * level.abs().max(1.0));
    }

    #[test]
    fn fourier_coefficients_round_trip(a0 in series()) {
        prop_assert_eq!(FourierSeries::from_flat(&a0.to_flat()).unwrap(), a0);
    }

    #[test]
    fn eigenvalue_shifts_with_the_field(a0 in series(), mu in 0.0f64..4.0, c in -2.0f64..2.0) {
        let m = medium(&a0);
        let a = assemble(1.0, mu, m.a0(), m.stencil(), m.cell()).unwrap();
        let r = shift_check(&a, m.cell(), c, &EigenSolver::default()).unwrap();
        prop_assert!(r.eigenvalue_error <= 1e-10, "{:?}", r);
    }

    #[test]
    fn eigenvalue_is_monotone_in_the_field(a0 in series(), mu in 0.0f64..4.0, bump in 0.0f64..0.5) {
        let m = medium(&a0);
        let solver = EigenSolver::default();
        let base = principal_eigenvalue_of(&m, 1.0, mu, m.a0(), &solver, None).unwrap();
        let raised = PeriodicField::from_values(
            *m.cell(),
            m.a0().values().iter().enumerate().map(|(i, v)| v + bump * (i % 3) as f64 / 2.0).collect(),
        ).unwrap();
        let up = principal_eigenvalue_of(&m, 1.0, mu, &raised, &solver, None).unwrap();
        prop_assert!(up.lambda0 >= base.lambda0 - 1e-11);
        prop_assert!(up.lambda0 <= base.lambda0 + bump + 1e-11);
    }

    #[test]
    fn symmetric_kernels_give_direction_free_eigenvalues(a0 in series(), mu in 0.0f64..4.0) {
        let m = medium(&a0);
        let solver = EigenSolver::default();
        let fwd = principal_eigenvalue_of(&m, 1.0, mu, m.a0(), &solver, None).unwrap();
        let back = principal_eigenvalue_of(&m, -1.0, mu, m.a0(), &solver, None).unwrap();
        prop_assert!((fwd.lambda0 - back.lambda0).abs() <= 1e-10);
        prop_assert!(fwd.min_phi() > 0.0 && back.min_phi() > 0.0);
    }

    #[test]
    fn reflection_swaps_directions(a0 in series(), mu in 0.0f64..4.0) {
        let m = medium(&a0);
        let r = m.reflected();
        let solver = EigenSolver::default();
        let a = assemble(-1.0, mu, m.a0(), m.stencil(), m.cell()).unwrap();
        let b = assemble(1.0, mu, r.a0(), r.stencil(), r.cell()).unwrap();
        let la = principal_eigenpair(&a, m.cell(), &solver, None).unwrap().lambda0;
        let lb = principal_eigenpair(&b, r.cell(), &solver, None).unwrap().lambda0;
        prop_assert!((la - lb).abs() <= 1e-10);
    }

    #[test]
    fn decay_rate_solves_the_speed_relation(factor in 1.02f64..2.5) {
        let (m, s, _) = shared();
        let solver = EigenSolver::default();
        let c = factor * s.c_star;
        let mu = decay_rate_for_speed(c, s, m, &solver).unwrap();
        prop_assert!(mu > 0.0 && mu < s.mu_star);
        let lambda = principal_eigenvalue_of(m, 1.0, mu, m.a0(), &solver, None).unwrap().lambda0;
        prop_assert!((lambda / mu - c).abs() <= 1e-9 * c);
    }

    #[test]
    fn explicit_profiles_are_ordered(t in 0.0f64..20.0, g in -400i64..400) {
        let (_, _, p) = shared();
        let (lo, hi) = (p.lower(t, g), p.upper(t, g));
        prop_assert!(lo >= 0.0);
        prop_assert!(lo <= hi + 1e-15, "{lo} > {hi}");
        prop_assert!(hi <= p.u_plus.at(g));
        if p.r(t, g) < p.band_threshold {
            prop_assert!(lo >= p.floor(g));
        }
    }

    #[test]
    fn logistic_constants(u0 in 0.01f64..2.0) {
        let m = medium(&FourierSeries::constant(1.0));
        let rhs = PeriodicRhs::new(&m);
        let config = IntegratorConfig::fitted(0.01, 1.0, 100);
        let traj = integrate(&vec![u0; 32], &config, &rhs).unwrap();
        let e = std::f64::consts::E;
        let exact = u0 * e / (1.0 - u0 + u0 * e);
        for v in traj.last() {
            prop_assert!((v - exact).abs() <= 1e-8);
        }
    }

    #[test]
    fn invariant_region(a0 in series(), seed in prop::collection::vec(0.0f64..1.0, 32)) {
        let m = medium(&a0);
        let u_plus = stationary_solution(&m, &vec![3.0; 32], 1e-12, 1e4).unwrap();
        let top = u_plus.max();
        let u0: Vec<f64> = seed.iter().map(|s| s * top).collect();
        let rhs = PeriodicRhs::new(&m);
        let config = IntegratorConfig::fitted(0.02, 5.0, 25);
        config.check_stable(&m, top).unwrap();
        let traj = integrate(&u0, &config, &rhs).unwrap();
        for state in &traj.states {
            for &v in state {
                prop_assert!((-1e-10..=top + 1e-6).contains(&v));
            }
        }
        let mut du = vec![0.0; 32];
        rhs.eval(u_plus.values(), &mut du);
        prop_assert!(du.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn manifests_round_trip(
        values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..8),
        checks in prop::collection::btree_map("[a-z_]{1,12}", any::<bool>(), 0..6),
        code in 0i32..5,
        started in 0.0f64..4e9,
    ) {
        let mut m = RunManifest::new("wave");
        m.started = started;
        m.wall_clock_s = started / 7.0;
        for (i, v) in values.iter().enumerate() {
            m.results.insert(format!("value_{i}"), serde_json::json!(v));
        }
        m.results.insert("all".into(), serde_json::json!(values));
        m.checks = checks;
        m.exit_code = code;
        let back = RunManifest::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn configs_parse_what_they_state(
        radius_halves in 1u32..4,
        a0 in series(),
        c_multiplier in 1.01f64..3.0,
        tol_wave in 1e-9f64..1e-3,
    ) {
        let radius = radius_halves as f64 * 0.5;
        // Offsets stay odd multiples of the spacing.
        let q = 32 * radius_halves;
        let text = format!(
            "[medium]\na0 = {:?}\nb = \"1\"\n[kernel]\nradius = {radius}\nq = {q}\n[grid]\nn = 64\n\
             [experiment]\nc_multiplier = {c_multiplier}\ntol_wave = {tol_wave}\n",
            a0.to_flat(),
        );
        let config = parse_config(&text).unwrap();
        prop_assert_eq!(&config.medium.a0, &a0.to_flat());
        prop_assert_eq!(config.kernel.radius, radius);
        prop_assert_eq!(config.experiment.c_multiplier, c_multiplier);
        prop_assert_eq!(config.experiment.tol_wave, tol_wave);
        let json = serde_json::to_string(&config).unwrap();
        prop_assert_eq!(serde_json::from_str::<nonlocal_fronts::cli::RunConfig>(&json).unwrap(), config);
    }
}
