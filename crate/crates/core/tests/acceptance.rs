//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any fails.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use nonlocal_fronts::dynamics::{
    comparison_harness, front_like_data, integrate, front_speed_measurement, stationary_solution,
    IntegratorConfig, LeftClosure, LineDomain, LineRhs, PeriodicRhs, RightClosure,
};
use nonlocal_fronts::habitat::{FourierSeries, Kernel, KernelShape, Medium, PeriodCell};
use nonlocal_fronts::spectral::{
    assemble, oracle_max_real_part, principal_eigenpair, shift_check, EigenSolver,
};
use nonlocal_fronts::speed::{build_wave_params, spreading_speed, WaveChoices, WaveParams};
use nonlocal_fronts::waves::analysis::squeeze_times;
use nonlocal_fronts::waves::residual::explicit_tolerance;
use nonlocal_fronts::waves::{
    extract_pulsating_wave, residual_sign_check, squeeze_constants, stability_experiment,
    tail_decay_fit, time_derivative_checks, uniqueness_experiment, verify_squeeze, Explicit, Kind,
    Profile, PulsatingWave, SqueezeChoices, StabilityConfig, WaveRunConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn medium(a0: &FourierSeries, radius: f64, q: usize, n: usize) -> Medium {
    Medium::from_series(
        PeriodCell::new(1.0, n).unwrap(),
        a0,
        &FourierSeries::constant(1.0),
        Kernel::new(KernelShape::Quartic, radius, q).unwrap(),
    )
    .unwrap()
}

fn media() -> [(&'static str, FourierSeries); 2] {
    [
        ("homogeneous", FourierSeries::constant(1.0)),
        ("periodic", FourierSeries::cosine(1.0, 0.4)),
    ]
}

fn wave_params(m: &Medium) -> WaveParams {
    let solver = EigenSolver::default();
    let s = spreading_speed(m, 1.0, (0.05, 50.0), &solver).unwrap();
    build_wave_params(1.2 * s.c_star, &s, m, WaveChoices::default(), &solver).unwrap()
}

/// Midpoint quartic quadrature written out independently of the library.
fn oracle_speed(radius: f64, q: usize) -> f64 {
    let nodes: Vec<f64> = (0..q)
        .map(|j| radius * (-1.0 + (2 * j + 1) as f64 / q as f64))
        .collect();
    let raw: Vec<f64> = nodes
        .iter()
        .map(|s| {
            let r = s / radius;
            15.0 / 16.0 * (1.0 - r * r).powi(2)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let (lo, hi, points) = (0.05f64, 50.0f64, 10_000);
    (0..points)
        .map(|i| {
            let mu = lo * (hi / lo).powf(i as f64 / (points - 1) as f64);
            let tilted: f64 = nodes
                .iter()
                .zip(&raw)
                .map(|(s, w)| w / total * (-mu * s).exp())
                .sum();
            tilted / mu
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_1() -> Outcome {
    let clock = Instant::now();
    let m = medium(&FourierSeries::constant(1.0), 1.0, 64, 64);
    let s = spreading_speed(&m, 1.0, (0.05, 50.0), &EigenSolver::default()).unwrap();
    let oracle = oracle_speed(1.0, 64);
    let rel = (s.c_star - oracle).abs() / oracle;
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        rel <= 1e-6 && secs <= 5.0,
        format!("c* = {:.10}, oracle {oracle:.10}, rel {rel:.2e}, {secs:.2} s", s.c_star),
    )
}

fn criterion_2() -> Outcome {
    let clock = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let solver = EigenSolver::default();
    let cell = PeriodCell::new(1.0, 64).unwrap();
    let mut worst: f64 = 0.0;
    let mut min_phi = f64::INFINITY;
    for _ in 0..10 {
        let harmonics: Vec<(f64, f64)> =
            (0..3).map(|_| (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1))).collect();
        let a0 = FourierSeries {
            constant: rng.gen_range(0.2..1.5),
            harmonics,
        };
        assert!(a0.oscillation_bound() < 1.0);
        let m = medium(&a0, 0.5, 32, 64);
        let xi = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mu = rng.gen_range(0.0..4.0);
        let a = assemble(xi, mu, m.a0(), m.stencil(), &cell).unwrap();
        let pair = principal_eigenpair(&a, &cell, &solver, None).unwrap();
        let oracle = oracle_max_real_part(&a).unwrap();
        worst = worst.max((pair.lambda0 - oracle).abs());
        min_phi = min_phi.min(pair.min_phi());
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && min_phi > 0.0 && secs <= 10.0,
        format!("max |lambda0 - oracle| {worst:.2e}, min phi {min_phi:.3e}, {secs:.2} s"),
    )
}

fn criterion_3() -> Outcome {
    let m = medium(&FourierSeries::cosine(1.0, 0.4), 0.5, 16, 32);
    let solver = EigenSolver::default();
    let mut worst: f64 = 0.0;
    for mu in [0.0, 1.5, 3.0] {
        let a = assemble(1.0, mu, m.a0(), m.stencil(), m.cell()).unwrap();
        for c in [-0.7, 0.3, 2.0] {
            worst = worst.max(shift_check(&a, m.cell(), c, &solver).unwrap().eigenvalue_error);
        }
    }
    outcome(worst <= 1e-10, format!("max shift error {worst:.2e} over 3x3 (mu, c)"))
}

fn criterion_4() -> Outcome {
    let clock = Instant::now();
    let mut rng = StdRng::seed_from_u64(4);
    let m = medium(&FourierSeries::cosine(1.0, 0.4), 0.5, 16, 32);
    let n = m.cell().len();
    let u_plus = stationary_solution(&m, &vec![2.0; n], 1e-12, 1e4).unwrap();
    let cap = 1.5 * u_plus.max();
    let line = LineDomain::new(
        m.cell(),
        -10.0,
        10.0,
        LeftClosure::Stationary(u_plus.clone()),
        RightClosure::Zero,
    )
    .unwrap();
    let line_rhs = LineRhs::new(&m, line).unwrap();
    let cell_rhs = PeriodicRhs::new(&m);
    let config = IntegratorConfig::fitted(0.01, 1.0, 10);
    config.check_stable(&m, cap).unwrap();
    let reach = m.stencil().reach();
    let (mut min_gap, mut min_final, mut all_hold) = (f64::INFINITY, f64::INFINITY, true);
    for trial in 0..20 {
        let on_line = trial % 2 == 1;
        let len = if on_line { line_rhs.domain().len() } else { n };
        let lower: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..u_plus.max())).collect();
        let centre = rng.gen_range(len / 4..3 * len / 4);
        let width = rng.gen_range(2..len / 8);
        let upper: Vec<f64> = lower
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let gap = match trial % 4 {
                    0 | 1 => rng.gen_range(0.0..0.5 * u_plus.max()),
                    _ if i.abs_diff(centre) <= width => rng.gen_range(0.01..0.3),
                    _ => 0.0,
                };
                (v + gap).min(cap)
            })
            .collect();
        let report = if on_line {
            comparison_harness(&lower, &upper, &config, &line_rhs)
        } else {
            comparison_harness(&lower, &upper, &config, &cell_rhs)
        }
        .unwrap();
        min_gap = min_gap.min(report.min_gap);
        all_hold &= report.min_gap >= -1e-10;
        let final_gap = if on_line && trial % 4 == 3 {
            // Far from a compact bump the gap sits below the rounding level of u.
            let cone = width + reach;
            let lo = integrate(&lower, &config, &line_rhs).unwrap();
            let hi = integrate(&upper, &config, &line_rhs).unwrap();
            (0..len)
                .filter(|i| i.abs_diff(centre) <= cone)
                .map(|i| hi.last()[i] - lo.last()[i])
                .fold(f64::INFINITY, f64::min)
        } else {
            report.final_min_gap
        };
        min_final = min_final.min(final_gap);
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        all_hold && min_gap >= -1e-10 && min_final > 0.0 && secs <= 30.0,
        format!(
            "20 pairs: min gap {min_gap:.2e}, min gap at t = 1 {min_final:.2e} (bump data: light cone), {secs:.2} s"
        ),
    )
}

fn criterion_5() -> Outcome {
    let clock = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, a0) in media() {
        let m = medium(&a0, 0.5, 256, 512);
        let p = wave_params(&m);
        let tol = explicit_tolerance(&p).unwrap();
        let h = m.cell().spacing();
        let lo = ((p.band_threshold - 30.0) / h).floor() as i64;
        let hi = ((p.band_threshold + 45.0) / h).ceil() as i64;
        let times = [0.0, 0.37 / p.c, 1.0 / p.c];
        let mut worst = f64::NEG_INFINITY;
        for (profile, kind) in [
            (Profile::Lower, Kind::Sub),
            (Profile::Upper, Kind::Super),
            (Profile::Floor, Kind::Sub),
        ] {
            let candidate = Explicit { params: &p, profile };
            let r = residual_sign_check(&candidate, kind, &m, &times, lo..hi, tol);
            pass &= r.holds();
            worst = worst.max(r.max_violation);
        }
        pass &= tol <= 1e-6;
        detail.push(format!("{name}: worst violation {worst:.2e}, tol_q {tol:.2e}"));
    }
    let secs = clock.elapsed().as_secs_f64();
    pass &= secs <= 20.0;
    outcome(pass, format!("{}, {secs:.2} s", detail.join("; ")))
}

struct WaveRun {
    name: &'static str,
    params: WaveParams,
    wave: PulsatingWave,
    seconds: f64,
}

fn criterion_6(runs: &[WaveRun]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in runs {
        let w = &run.wave;
        let r = &w.report;
        let tol = w.config.tol_wave;
        let line = w.line().domain();
        let needed = 60.0 * run.params.medium().kernel().radius() + w.c * w.config.t_end;
        let eta_ok = if run.name == "homogeneous" {
            r.eta_increase <= 1e-8
        } else {
            r.monotone_at_fixed_habitat()
        };
        let ok = w.converged
            && w.gap <= tol
            && r.sandwich_holds()
            && r.monotone_in_period()
            && eta_ok
            && r.periodicity <= tol
            && line.x_hi() - line.x_lo() >= needed
            && run.seconds <= 180.0;
        pass &= ok;
        detail.push(format!(
            "{}: gap {:.2e} at period {}, periodicity {:.2e}, eta increase {:.2e}, fixed-habitat decrease {:.2e}, {:.1} s",
            run.name, w.gap, r.converged_period, r.periodicity, r.eta_increase, r.habitat_decrease, run.seconds
        ));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_7(runs: &[WaveRun]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in runs {
        match tail_decay_fit(&run.wave) {
            Ok(fit) => {
                let rate = fit.relative_rate_error(run.wave.mu);
                pass &= rate <= 0.02 && fit.ratio_deviation() <= 0.05;
                detail.push(format!(
                    "{}: mu_hat {:.6} vs mu {:.6}, ratio deviation {:.2e}",
                    run.name,
                    fit.mu_hat,
                    run.wave.mu,
                    fit.ratio_deviation()
                ));
            }
            Err(err) => {
                pass = false;
                detail.push(format!("{}: {err}", run.name));
            }
        }
    }
    outcome(pass, detail.join("; "))
}

fn criterion_8(runs: &[WaveRun]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in runs {
        let d = time_derivative_checks(&run.wave);
        pass &= d.positive() && d.left_flat(1e-6) && d.right_law();
        detail.push(format!(
            "{}: min U_t {:.2e}, left sup {:.2e}, right ratio deviation {:.2e}",
            run.name, d.min_rate, d.left_sup, d.right_ratio_deviation
        ));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_9(runs: &[WaveRun]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in runs {
        let c = squeeze_constants(&run.wave, SqueezeChoices::default()).unwrap();
        pass &= c.within_hypothesis();
        let times = squeeze_times(&run.wave, 24);
        for eps in [c.epsilon0 / 4.0, c.epsilon0 / 2.0] {
            let check = verify_squeeze(&run.wave, &c, eps, &times).unwrap();
            pass &= check.holds() && check.samples >= 10_000;
            detail.push(format!(
                "{} eps {eps}: violations {:.1e}/{:.1e} <= {:.1e} on {} samples",
                run.name, check.super_violation, check.sub_violation, check.tol_s, check.samples
            ));
        }
    }
    outcome(pass, detail.join("; "))
}

fn criterion_10(runs: &[WaveRun]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    let variant = WaveChoices {
        d1_factor: 4.0,
        d2: 1.0,
        b_factor: 0.25,
    };
    for run in runs {
        let p = &run.params;
        let solver = EigenSolver::default();
        let s = spreading_speed(p.medium(), 1.0, (0.05, 50.0), &solver).unwrap();
        let q = build_wave_params(p.c, &s, p.medium(), variant, &solver).unwrap();
        let report = uniqueness_experiment(p, &q, &WaveRunConfig::default()).unwrap();
        pass &= report.distance <= 2e-6;
        detail.push(format!("{}: distance {:.2e}", run.name, report.distance));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_11(runs: &[WaveRun]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in runs {
        let series = stability_experiment(&run.wave, &StabilityConfig::default()).unwrap();
        let start = series.initial_error();
        let last = series.times.iter().rposition(|&t| t <= 100.0 + 1e-9).unwrap();
        let (t_end, end) = (series.times[last], series.errors[last]);
        pass &= start >= 0.3 && end <= 1e-3;
        detail.push(format!("{}: s(0) {start:.3} -> s({t_end:.1}) {end:.2e}", run.name));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_12() -> Outcome {
    let m = medium(&FourierSeries::constant(1.0), 0.5, 16, 32);
    let solver = EigenSolver::default();
    let c_star = spreading_speed(&m, 1.0, (0.05, 50.0), &solver).unwrap().c_star;
    let u_plus = stationary_solution(&m, &vec![2.0; 32], 1e-12, 1e4).unwrap();
    let (rhs, u0) = front_like_data(&m, &u_plus, 400.0 * 0.5, 10.0).unwrap();
    let config = IntegratorConfig::fitted(0.02, 200.0, 50);
    let observer = 1.1 * c_star;
    let tracks: Vec<_> = [0.1, 0.5]
        .iter()
        .map(|&level| front_speed_measurement(&u0, level, &config, &rhs, Some(observer)).unwrap())
        .collect();
    let (slow, fast) = (tracks[0].speed, tracks[1].speed);
    let rel = |v: f64| (v - c_star).abs() / c_star;
    let spread = (slow - fast).abs() / c_star;
    let ahead = tracks
        .iter()
        .map(|t| *t.ahead.last().unwrap())
        .fold(0.0, f64::max);
    outcome(
        rel(slow) <= 0.02 && rel(fast) <= 0.02 && spread <= 0.01 && ahead <= 1e-4,
        format!(
            "c* {c_star:.6}: level 0.1 speed {slow:.6} ({:.2e}), level 0.5 speed {fast:.6} ({:.2e}), level gap {spread:.2e}, sup ahead of 1.1c* {ahead:.1e}",
            rel(slow),
            rel(fast)
        ),
    )
}

fn criterion_13() -> Outcome {
    let m = medium(&FourierSeries::cosine(1.0, 0.4), 0.5, 16, 32);
    let cell = *m.cell();
    let small: Vec<f64> = (0..32)
        .map(|i| 0.01 * (1.5 + (2.0 * std::f64::consts::PI * cell.node(i)).sin()))
        .collect();
    let large = vec![3.0; 32];
    let a = stationary_solution(&m, &small, 1e-12, 1e4).unwrap();
    let b = stationary_solution(&m, &large, 1e-12, 1e4).unwrap();
    let diff = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    outcome(diff <= 1e-8, format!("sup |u1 - u2| = {diff:.2e}, min u+ {:.6}", a.min()))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, title: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {title}: {}", o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    report(1, "homogeneous spreading speed", criterion_1());
    report(2, "eigen-oracle equivalence", criterion_2());
    report(3, "shift covariance", criterion_3());
    report(4, "comparison principle", criterion_4());
    report(5, "sub/super residual signs", criterion_5());

    let runs: Vec<WaveRun> = media()
        .into_iter()
        .map(|(name, a0)| {
            let clock = Instant::now();
            let params = wave_params(&medium(&a0, 0.5, 16, 32));
            let wave = extract_pulsating_wave(&params, &WaveRunConfig::default()).unwrap();
            WaveRun {
                name,
                params,
                wave,
                seconds: clock.elapsed().as_secs_f64(),
            }
        })
        .collect();
    report(6, "wave extraction", criterion_6(&runs));
    report(7, "tail law", criterion_7(&runs));
    report(8, "derivative laws", criterion_8(&runs));
    report(9, "squeezing", criterion_9(&runs));
    report(10, "uniqueness of the wave", criterion_10(&runs));
    report(11, "stability", criterion_11(&runs));
    report(12, "spreading property", criterion_12());
    report(13, "uniqueness of the stationary state", criterion_13());

    println!("acceptance: {} of 13 criteria passed", 13 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
