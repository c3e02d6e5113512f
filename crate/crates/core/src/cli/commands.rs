use std::collections::BTreeMap;
use std::path::Path;

use clap::ValueEnum;
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::RunConfig;
use crate::dynamics::{
    front_like_data, front_speed_measurement, stationary_solution, IntegratorConfig,
};
use crate::error::{Error, Result};
use crate::habitat::{check_hypotheses, Medium};
use crate::spectral::lambda0_curve;
use crate::speed::{build_wave_params, spreading_speed, SpeedResult, WaveParams};
use crate::waves::analysis::squeeze_times;
use crate::waves::{
    extract_pulsating_wave, squeeze_constants, stability_experiment, tail_decay_fit,
    time_derivative_checks, uniqueness_experiment, verify_squeeze, Perturbation, PulsatingWave,
    StabilityConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Hypotheses,
    Eig,
    Speed,
    Spread,
    Wave,
    Stability,
    Uniqueness,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Hypotheses => "hypotheses",
            Command::Eig => "eig",
            Command::Speed => "speed",
            Command::Spread => "spread",
            Command::Wave => "wave",
            Command::Stability => "stability",
            Command::Uniqueness => "uniqueness",
        }
    }
}

/// Results, checks and artifacts gathered while a command runs; kept on failure.
pub struct Session<'a> {
    pub config: &'a RunConfig,
    pub out_dir: &'a Path,
    pub results: Map<String, Value>,
    pub checks: BTreeMap<String, bool>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
}

impl<'a> Session<'a> {
    pub fn new(config: &'a RunConfig, out_dir: &'a Path) -> Self {
        Session {
            config,
            out_dir,
            results: Map::new(),
            checks: BTreeMap::new(),
            warnings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn record(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.results.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    fn check(&mut self, name: &str, ok: bool) {
        if !ok {
            warn!("check failed: {name}");
        }
        self.checks.insert(name.into(), ok);
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.out_dir.join(name)).map_err(csv_error)?;
        w.write_record(header).map_err(csv_error)?;
        for row in rows {
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        std::fs::write(self.out_dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.artifacts.push(name.into());
        Ok(())
    }

    /// Turns failed checks into an error of the given kind.
    fn require(&self, fail: impl FnOnce(String) -> Error) -> Result<()> {
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|(_, ok)| !**ok)
            .map(|(k, _)| k.as_str())
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(fail(format!("failed checks: {}", failed.join(", "))))
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Fixed 17-significant-digit formatting.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn run(command: Command, session: &mut Session) -> Result<()> {
    match command {
        Command::Hypotheses => hypotheses(session),
        Command::Eig => eig(session),
        Command::Speed => speed(session),
        Command::Spread => spread(session),
        Command::Wave => wave(session),
        Command::Stability => stability(session),
        Command::Uniqueness => uniqueness(session),
    }
}

fn hypotheses(s: &mut Session) -> Result<()> {
    let medium = s.config.medium()?;
    let report = check_hypotheses(&medium, &s.config.solver)?;
    s.record("hypotheses", &report)?;
    s.check("h1", report.h1);
    s.check("h2", report.h2);
    s.check("h4", report.h4);
    if !report.h3_sufficient {
        s.warn(format!(
            "H3 sufficient condition not met (a0 oscillation {:.6} >= 1); not a failure",
            report.a0_oscillation
        ));
    }
    for note in &report.notes {
        info!("{note}");
    }
    s.require(Error::Hypothesis)
}

fn eig(s: &mut Session) -> Result<()> {
    let x = &s.config.experiment;
    let medium = s.config.medium()?;
    let step = (x.eig_mu_max - x.eig_mu_min) / (x.eig_points - 1) as f64;
    let grid: Vec<f64> = (0..x.eig_points).map(|i| x.eig_mu_min + i as f64 * step).collect();
    let curve = lambda0_curve(&medium, x.xi, medium.a0(), &grid, &s.config.solver)?;
    s.csv(
        "eig.csv",
        &["mu", "lambda0", "residual", "iters", "min_phi", "max_phi"],
        curve.points.iter().map(|p| {
            vec![
                fmt(p.mu),
                fmt(p.lambda0),
                fmt(p.residual),
                p.iterations.to_string(),
                fmt(p.min_phi),
                fmt(p.max_phi),
            ]
        }),
    )?;
    s.record("xi", curve.xi)?;
    s.record("points", curve.points.len())?;
    s.check("positive_eigenvectors", curve.points.iter().all(|p| p.min_phi > 0.0));
    s.require(Error::Invariant)
}

fn speed(s: &mut Session) -> Result<()> {
    let x = &s.config.experiment;
    let medium = s.config.medium()?;
    let result = spreading_speed(&medium, x.xi, (x.mu_lo, x.mu_hi), &s.config.solver)?;
    let summary = json!({
        "c_star": result.c_star,
        "mu_star": result.mu_star,
        "curve": result.curve.points,
    });
    s.json("speed.json", &summary)?;
    s.record("xi", result.xi)?;
    s.record("c_star", result.c_star)?;
    s.record("mu_star", result.mu_star)?;
    s.record("bracket", result.bracket)?;
    Ok(())
}

/// The medium seen by a front moving in direction `+1`.
fn directed_medium(config: &RunConfig) -> Result<Medium> {
    let medium = config.medium()?;
    Ok(if config.experiment.xi < 0.0 {
        medium.reflected()
    } else {
        medium
    })
}

fn speed_for_waves(s: &mut Session, medium: &Medium) -> Result<(SpeedResult, f64)> {
    let x = &s.config.experiment;
    let result = spreading_speed(medium, 1.0, (x.mu_lo, x.mu_hi), &s.config.solver)?;
    let c = x.c.unwrap_or(x.c_multiplier * result.c_star);
    s.record("xi", x.xi)?;
    s.record("c_star", result.c_star)?;
    s.record("mu_star", result.mu_star)?;
    s.record("c", c)?;
    Ok((result, c))
}

fn wave_params(s: &mut Session) -> Result<(WaveParams, SpeedResult)> {
    let medium = directed_medium(s.config)?;
    let (speed, c) = speed_for_waves(s, &medium)?;
    let params =
        build_wave_params(c, &speed, &medium, s.config.experiment.choices(), &s.config.solver)?;
    s.record("constants", params.constants())?;
    Ok((params, speed))
}

fn extracted_wave(s: &mut Session) -> Result<PulsatingWave> {
    let (params, _) = wave_params(s)?;
    let wave = extract_pulsating_wave(&params, &s.config.experiment.wave_run())?;
    let r = &wave.report;
    s.record("gap", wave.gap)?;
    s.record("converged_period", r.converged_period)?;
    s.record("periodicity", r.periodicity)?;
    s.record("sandwich_violation", r.sandwich_violation)?;
    s.record("habitat_decrease", r.habitat_decrease)?;
    s.record("eta_increase", r.eta_increase)?;
    s.record("left_limit_error", r.left_limit_error)?;
    s.record("right_tail", r.right_tail)?;
    let tol = wave.config.tol_wave;
    s.check("converged", wave.converged && wave.gap <= tol);
    s.check("sandwich", r.sandwich_holds());
    s.check("monotone_in_period", r.monotone_in_period());
    s.check("monotone_at_fixed_habitat", r.monotone_at_fixed_habitat());
    s.check("periodicity", r.periodicity <= tol);
    s.check("limits", r.limits_hold(tol, params.u_plus.max()));
    Ok(wave)
}

fn spread(s: &mut Session) -> Result<()> {
    let x = s.config.experiment.clone();
    let medium = directed_medium(s.config)?;
    let (speed, _) = speed_for_waves(s, &medium)?;
    let cell = medium.cell();
    let radius = medium.kernel().radius();
    let sat = medium.nonlinearity().saturation_level();
    let u_plus = stationary_solution(&medium, &vec![sat; cell.len()], 1e-12, 1e4)?;
    if !(x.level < u_plus.min()) {
        return Err(Error::InvalidInput(format!(
            "level {} must lie below min u+ = {}",
            x.level,
            u_plus.min()
        )));
    }
    let (rhs, u0) = front_like_data(&medium, &u_plus, x.spread_length * radius, 20.0 * radius)?;
    rhs.domain().check_extent(radius, speed.c_star, x.spread_t_end)?;
    let every = (1.0 / x.dt).round().max(1.0) as usize;
    let integ = IntegratorConfig::fitted(x.dt, x.spread_t_end, every);
    integ.check_stable(&medium, u_plus.max())?;
    let observer = x.observer_multiplier * speed.c_star;
    let track = front_speed_measurement(&u0, x.level, &integ, &rhs, Some(observer))?;
    s.csv(
        "spread.csv",
        &["t", "x_level", "u_max", "u_min", "rhs_sup"],
        (0..track.times.len()).map(|k| {
            vec![
                fmt(track.times[k]),
                fmt(track.positions[k]),
                fmt(track.u_max[k]),
                fmt(track.u_min[k]),
                fmt(track.rhs_sup[k]),
            ]
        }),
    )?;
    let rel = (track.speed - speed.c_star).abs() / speed.c_star;
    let ahead = track.ahead.last().copied().unwrap_or(f64::NAN);
    s.record("level", x.level)?;
    s.record("fitted_speed", track.speed)?;
    s.record("relative_speed_error", rel)?;
    s.record("observer_speed", observer)?;
    s.record("sup_ahead_of_observer", ahead)?;
    s.check("speed_within_2pct", rel <= 0.02);
    s.check("decay_ahead_of_observer", ahead <= 1e-4);
    s.require(Error::Invariant)
}

fn wave(s: &mut Session) -> Result<()> {
    let wave = extracted_wave(s)?;
    let m = wave.phases();
    let etas = wave.etas();
    s.csv(
        "profiles.csv",
        &["eta", "phase", "psi"],
        (0..m).flat_map(|k| {
            let eta = &etas;
            wave.profiles[k]
                .iter()
                .enumerate()
                .map(move |(i, &v)| vec![fmt(eta[i]), k.to_string(), fmt(v)])
        }),
    )?;

    match tail_decay_fit(&wave) {
        Ok(fit) => {
            s.record("mu_hat", fit.mu_hat)?;
            s.record("tail_ratio_deviation", fit.ratio_deviation())?;
            s.check("tail_rate", fit.relative_rate_error(wave.mu) <= 0.02);
            s.check("tail_ratio", fit.ratio_deviation() <= 0.05);
        }
        Err(err) => {
            s.warn(format!("tail fit unavailable: {err}"));
            s.check("tail_rate", false);
        }
    }

    let d = time_derivative_checks(&wave);
    s.record("derivatives", &d)?;
    s.check("rate_nonnegative", d.positive());
    s.check("rate_left_flat", d.left_flat(1e-6));
    s.check("rate_right_law", d.right_law());

    let constants = squeeze_constants(&wave, s.config.experiment.squeeze())?;
    s.record("squeeze_constants", constants)?;
    s.check("squeeze_constants_admissible", constants.within_hypothesis());
    let times = squeeze_times(&wave, 24);
    let mut checks = Vec::new();
    for (label, eps) in [("quarter", constants.epsilon0 / 4.0), ("half", constants.epsilon0 / 2.0)] {
        let check = verify_squeeze(&wave, &constants, eps, &times)?;
        s.check(&format!("squeeze_{label}"), check.holds());
        checks.push(check);
    }
    s.record("squeeze", checks)?;
    s.require(Error::Invariant)
}

fn stability(s: &mut Session) -> Result<()> {
    let wave = extracted_wave(s)?;
    let x = &s.config.experiment;
    let config = StabilityConfig {
        perturbation: Perturbation::Spliced {
            factor: x.stability_factor,
            splice: 0.0,
        },
        t_end: x.stability_t_end,
        target: x.stability_target,
    };
    let series = stability_experiment(&wave, &config)?;
    s.csv(
        "series.csv",
        &["t", "sup_ratio_error"],
        series.times.iter().zip(&series.errors).map(|(t, e)| vec![fmt(*t), fmt(*e)]),
    )?;
    s.record("perturbation", config.perturbation)?;
    s.record("label", &series.label)?;
    s.record("initial_error", series.initial_error())?;
    s.record("final_error", series.final_error())?;
    s.check("stability_target", series.holds());
    s.require(Error::Invariant)
}

fn uniqueness(s: &mut Session) -> Result<()> {
    let (a, speed) = wave_params(s)?;
    let x = &s.config.experiment;
    let b = build_wave_params(a.c, &speed, a.medium(), x.variant_choices(), &s.config.solver)?;
    s.record("variant_constants", b.constants())?;
    let report = uniqueness_experiment(&a, &b, &x.wave_run())?;
    s.record("uniqueness", &report)?;
    s.check("profiles_agree", report.holds());
    s.require(Error::Invariant)
}
