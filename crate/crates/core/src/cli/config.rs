//! Run configuration: a TOML document with the sections `[medium]`, `[kernel]`,
//! `[grid]`, `[solver]` and `[experiment]`.
//!
//! ```toml
//! [medium]
//! period = 1.0
//! a0 = "1 0.4 0"      # c0 a1 b1 a2 b2 ...: c0 + sum a_m cos(2 pi m x / p) + b_m sin(...)
//! b = 1.0
//!
//! [kernel]
//! shape = "quartic"   # or "smooth-bump"
//! radius = 0.5
//! q = 64
//!
//! [grid]
//! n = 128
//! ```
//!
//! Coefficient lists may be a number, an array of numbers, or a string of numbers
//! separated by spaces or commas. Every key is optional except those shown above;
//! unknown keys are rejected.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::habitat::{FourierSeries, Kernel, KernelShape, Medium, PeriodCell};
use crate::spectral::EigenSolver;
use crate::speed::WaveChoices;
use crate::waves::{SqueezeChoices, WaveRunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    pub period: f64,
    /// Flat Fourier coefficients `[c0, a1, b1, ...]`.
    pub a0: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub shape: KernelShape,
    pub radius: f64,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub xi: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub eig_mu_min: f64,
    pub eig_mu_max: f64,
    pub eig_points: usize,
    /// Absolute wave speed; overrides `c_multiplier`.
    pub c: Option<f64>,
    pub c_multiplier: f64,
    pub d1_factor: f64,
    pub d2: f64,
    pub b_factor: f64,
    pub t_end: f64,
    pub dt: f64,
    pub phases: usize,
    pub tol_wave: f64,
    pub epsilon0: f64,
    pub rate_fraction: f64,
    pub spread_t_end: f64,
    /// Line length in kernel radii.
    pub spread_length: f64,
    pub level: f64,
    pub observer_multiplier: f64,
    pub stability_factor: f64,
    pub stability_t_end: f64,
    pub stability_target: f64,
    pub variant_d1_factor: f64,
    pub variant_d2: f64,
    pub variant_b_factor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let wave = WaveRunConfig::default();
        let choices = WaveChoices::default();
        let squeeze = SqueezeChoices::default();
        ExperimentConfig {
            xi: 1.0,
            mu_lo: 0.05,
            mu_hi: 50.0,
            eig_mu_min: 0.0,
            eig_mu_max: 10.0,
            eig_points: 41,
            c: None,
            c_multiplier: 1.2,
            d1_factor: choices.d1_factor,
            d2: choices.d2,
            b_factor: choices.b_factor,
            t_end: wave.t_end,
            dt: wave.dt_target,
            phases: wave.phases,
            tol_wave: wave.tol_wave,
            epsilon0: squeeze.epsilon0,
            rate_fraction: squeeze.rate_fraction,
            spread_t_end: 200.0,
            spread_length: 400.0,
            level: 0.5,
            observer_multiplier: 1.1,
            stability_factor: 1.3,
            stability_t_end: 100.0,
            stability_target: 1e-3,
            variant_d1_factor: 4.0,
            variant_d2: 1.0,
            variant_b_factor: 0.25,
        }
    }
}

impl ExperimentConfig {
    pub fn choices(&self) -> WaveChoices {
        WaveChoices {
            d1_factor: self.d1_factor,
            d2: self.d2,
            b_factor: self.b_factor,
        }
    }

    pub fn variant_choices(&self) -> WaveChoices {
        WaveChoices {
            d1_factor: self.variant_d1_factor,
            d2: self.variant_d2,
            b_factor: self.variant_b_factor,
        }
    }

    pub fn wave_run(&self) -> WaveRunConfig {
        WaveRunConfig {
            dt_target: self.dt,
            phases: self.phases,
            tol_wave: self.tol_wave,
            t_end: self.t_end,
        }
    }

    pub fn squeeze(&self) -> SqueezeChoices {
        SqueezeChoices {
            epsilon0: self.epsilon0,
            rate_fraction: self.rate_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub medium: MediumConfig,
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub solver: EigenSolver,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn cell(&self) -> Result<PeriodCell> {
        PeriodCell::new(self.medium.period, self.grid.n)
    }

    pub fn medium(&self) -> Result<Medium> {
        let cell = self.cell()?;
        let kernel = Kernel::new(self.kernel.shape, self.kernel.radius, self.kernel.q)?;
        Medium::from_series(
            cell,
            &FourierSeries::from_flat(&self.medium.a0)?,
            &FourierSeries::from_flat(&self.medium.b)?,
            kernel,
        )
    }
}

/// Collects every problem before giving up.
struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn section<'a>(&mut self, root: &'a Table, name: &str, keys: &[&str]) -> Option<&'a Table> {
        let table = match root.get(name) {
            None => return None,
            Some(Value::Table(t)) => t,
            Some(_) => {
                self.errors.push(format!("{name}: expected a section"));
                return None;
            }
        };
        for key in table.keys() {
            if !keys.contains(&key.as_str()) {
                self.errors.push(format!("{name}.{key}: unknown key"));
            }
        }
        Some(table)
    }

    fn f64(&mut self, t: Option<&Table>, sec: &str, key: &str, default: Option<f64>) -> f64 {
        match t.and_then(|t| t.get(key)) {
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(Value::String(s)) => s.trim().parse().unwrap_or_else(|_| {
                self.errors.push(format!("{sec}.{key}: expected a number, got {s:?}"));
                f64::NAN
            }),
            Some(v) => {
                self.errors.push(format!("{sec}.{key}: expected a number, got {v}"));
                f64::NAN
            }
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("{sec}.{key}: missing"));
                f64::NAN
            }),
        }
    }

    fn opt_f64(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<f64> {
        t.and_then(|t| t.get(key))
            .is_some()
            .then(|| self.f64(t, sec, key, None))
    }

    fn uint(&mut self, t: Option<&Table>, sec: &str, key: &str, default: Option<u64>) -> u64 {
        match t.and_then(|t| t.get(key)) {
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(v) => {
                self.errors.push(format!("{sec}.{key}: expected a non-negative integer, got {v}"));
                0
            }
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("{sec}.{key}: missing"));
                0
            }),
        }
    }

    fn string(&mut self, t: Option<&Table>, sec: &str, key: &str, default: Option<&str>) -> String {
        match t.and_then(|t| t.get(key)) {
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                self.errors.push(format!("{sec}.{key}: expected a string, got {v}"));
                String::new()
            }
            None => default.map(str::to_owned).unwrap_or_else(|| {
                self.errors.push(format!("{sec}.{key}: missing"));
                String::new()
            }),
        }
    }

    fn coefficients(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Vec<f64> {
        let bad = |this: &mut Self, what: String| {
            this.errors.push(format!("{sec}.{key}: {what}"));
            Vec::new()
        };
        match t.and_then(|t| t.get(key)) {
            Some(Value::Float(x)) => vec![*x],
            Some(Value::Integer(i)) => vec![*i as f64],
            Some(Value::String(s)) => {
                let parsed: std::result::Result<Vec<f64>, _> = s
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|w| !w.is_empty())
                    .map(str::parse::<f64>)
                    .collect();
                match parsed {
                    Ok(v) if !v.is_empty() => v,
                    _ => bad(self, format!("expected numbers, got {s:?}")),
                }
            }
            Some(Value::Array(items)) => {
                let v: Option<Vec<f64>> = items
                    .iter()
                    .map(|x| match x {
                        Value::Float(f) => Some(*f),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect();
                match v {
                    Some(v) if !v.is_empty() => v,
                    _ => bad(self, "expected a non-empty array of numbers".into()),
                }
            }
            Some(v) => bad(self, format!("expected coefficients, got {v}")),
            None => bad(self, "missing".into()),
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }
}

const MEDIUM_KEYS: &[&str] = &["period", "a0", "b"];
const KERNEL_KEYS: &[&str] = &["shape", "radius", "q"];
const GRID_KEYS: &[&str] = &["n"];
const SOLVER_KEYS: &[&str] = &["tol", "max_iter"];
const EXPERIMENT_KEYS: &[&str] = &[
    "xi",
    "mu_lo",
    "mu_hi",
    "eig_mu_min",
    "eig_mu_max",
    "eig_points",
    "c",
    "c_multiplier",
    "d1_factor",
    "d2",
    "b_factor",
    "t_end",
    "dt",
    "phases",
    "tol_wave",
    "epsilon0",
    "rate_fraction",
    "spread_t_end",
    "spread_length",
    "level",
    "observer_multiplier",
    "stability_factor",
    "stability_t_end",
    "stability_target",
    "variant_d1_factor",
    "variant_d2",
    "variant_b_factor",
];

/// Parses and validates a configuration, reporting all violations at once.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![format!("syntax error: {e}")]))?;
    let mut rd = Reader { errors: Vec::new() };
    for key in root.keys() {
        if !["medium", "kernel", "grid", "solver", "experiment"].contains(&key.as_str()) {
            rd.errors.push(format!("{key}: unknown section"));
        }
    }

    let med = rd.section(&root, "medium", MEDIUM_KEYS);
    if med.is_none() {
        rd.errors.push("medium: missing section".into());
    }
    let medium = MediumConfig {
        period: rd.f64(med, "medium", "period", Some(1.0)),
        a0: rd.coefficients(med, "medium", "a0"),
        b: rd.coefficients(med, "medium", "b"),
    };

    let ker = rd.section(&root, "kernel", KERNEL_KEYS);
    let shape_name = rd.string(ker, "kernel", "shape", Some("quartic"));
    let shape = shape_name.parse::<KernelShape>().unwrap_or_else(|e| {
        rd.errors.push(format!("kernel.shape: {e}"));
        KernelShape::Quartic
    });
    let kernel = KernelConfig {
        shape,
        radius: rd.f64(ker, "kernel", "radius", None),
        q: rd.uint(ker, "kernel", "q", None) as usize,
    };

    let grd = rd.section(&root, "grid", GRID_KEYS);
    let grid = GridConfig {
        n: rd.uint(grd, "grid", "n", None) as usize,
    };

    let sol = rd.section(&root, "solver", SOLVER_KEYS);
    let defaults = EigenSolver::default();
    let solver = EigenSolver {
        tol: rd.f64(sol, "solver", "tol", Some(defaults.tol)),
        max_iter: rd.uint(sol, "solver", "max_iter", Some(defaults.max_iter as u64)) as usize,
    };

    let exp = rd.section(&root, "experiment", EXPERIMENT_KEYS);
    let d = ExperimentConfig::default();
    let e = "experiment";
    let experiment = ExperimentConfig {
        xi: rd.f64(exp, e, "xi", Some(d.xi)),
        mu_lo: rd.f64(exp, e, "mu_lo", Some(d.mu_lo)),
        mu_hi: rd.f64(exp, e, "mu_hi", Some(d.mu_hi)),
        eig_mu_min: rd.f64(exp, e, "eig_mu_min", Some(d.eig_mu_min)),
        eig_mu_max: rd.f64(exp, e, "eig_mu_max", Some(d.eig_mu_max)),
        eig_points: rd.uint(exp, e, "eig_points", Some(d.eig_points as u64)) as usize,
        c: rd.opt_f64(exp, e, "c"),
        c_multiplier: rd.f64(exp, e, "c_multiplier", Some(d.c_multiplier)),
        d1_factor: rd.f64(exp, e, "d1_factor", Some(d.d1_factor)),
        d2: rd.f64(exp, e, "d2", Some(d.d2)),
        b_factor: rd.f64(exp, e, "b_factor", Some(d.b_factor)),
        t_end: rd.f64(exp, e, "t_end", Some(d.t_end)),
        dt: rd.f64(exp, e, "dt", Some(d.dt)),
        phases: rd.uint(exp, e, "phases", Some(d.phases as u64)) as usize,
        tol_wave: rd.f64(exp, e, "tol_wave", Some(d.tol_wave)),
        epsilon0: rd.f64(exp, e, "epsilon0", Some(d.epsilon0)),
        rate_fraction: rd.f64(exp, e, "rate_fraction", Some(d.rate_fraction)),
        spread_t_end: rd.f64(exp, e, "spread_t_end", Some(d.spread_t_end)),
        spread_length: rd.f64(exp, e, "spread_length", Some(d.spread_length)),
        level: rd.f64(exp, e, "level", Some(d.level)),
        observer_multiplier: rd.f64(exp, e, "observer_multiplier", Some(d.observer_multiplier)),
        stability_factor: rd.f64(exp, e, "stability_factor", Some(d.stability_factor)),
        stability_t_end: rd.f64(exp, e, "stability_t_end", Some(d.stability_t_end)),
        stability_target: rd.f64(exp, e, "stability_target", Some(d.stability_target)),
        variant_d1_factor: rd.f64(exp, e, "variant_d1_factor", Some(d.variant_d1_factor)),
        variant_d2: rd.f64(exp, e, "variant_d2", Some(d.variant_d2)),
        variant_b_factor: rd.f64(exp, e, "variant_b_factor", Some(d.variant_b_factor)),
    };

    validate(&mut rd, &medium, &kernel, &grid, &solver, &experiment);
    if !rd.errors.is_empty() {
        return Err(Error::Config(rd.errors));
    }
    let config = RunConfig {
        medium,
        kernel,
        grid,
        solver,
        experiment,
    };
    // Alignment and irreducibility of the stencil.
    config
        .medium()
        .map_err(|err| Error::Config(vec![format!("kernel.q / grid.n: {err}")]))?;
    Ok(config)
}

fn validate(
    rd: &mut Reader,
    medium: &MediumConfig,
    kernel: &KernelConfig,
    grid: &GridConfig,
    solver: &EigenSolver,
    x: &ExperimentConfig,
) {
    let pos = |v: f64| v > 0.0 && v.is_finite();
    rd.check(pos(medium.period), || {
        format!("medium.period: must be positive, got {}", medium.period)
    });
    for (key, coeffs) in [("a0", &medium.a0), ("b", &medium.b)] {
        rd.check(coeffs.is_empty() || coeffs.len() % 2 == 1, || {
            format!("medium.{key}: expected c0 followed by (a_m, b_m) pairs")
        });
        rd.check(coeffs.iter().all(|c| c.is_finite()), || {
            format!("medium.{key}: coefficients must be finite")
        });
    }
    if let (Ok(b), true) = (FourierSeries::from_flat(&medium.b), medium.period > 0.0) {
        rd.check(min_sampled(&b, medium.period) > 0.0, || {
            "medium.b: must be positive everywhere".to_string()
        });
    }
    rd.check(grid.n >= 8, || format!("grid.n: n too small: got {}, need at least 8", grid.n));
    rd.check(pos(kernel.radius), || {
        format!("kernel.radius: must be positive, got {}", kernel.radius)
    });
    rd.check(kernel.q >= 16, || format!("kernel.q: must be at least 16, got {}", kernel.q));
    if grid.n > 0 && pos(medium.period) && pos(kernel.radius) {
        let h = medium.period / grid.n as f64;
        rd.check(kernel.radius > h, || {
            format!(
                "kernel.radius: kernel support below grid spacing ({} <= {h})",
                kernel.radius
            )
        });
    }
    rd.check(pos(solver.tol), || format!("solver.tol: must be positive, got {}", solver.tol));
    rd.check(solver.max_iter > 0, || "solver.max_iter: must be positive".into());

    rd.check(x.xi == 1.0 || x.xi == -1.0, || {
        format!("experiment.xi: must be 1 or -1, got {}", x.xi)
    });
    rd.check(pos(x.mu_lo) && x.mu_hi > x.mu_lo && x.mu_hi.is_finite(), || {
        format!(
            "experiment.mu_lo / mu_hi: need 0 < mu_lo < mu_hi, got ({}, {})",
            x.mu_lo, x.mu_hi
        )
    });
    rd.check(
        x.eig_mu_min >= 0.0 && x.eig_mu_max > x.eig_mu_min && x.eig_points >= 2,
        || "experiment.eig_mu_min / eig_mu_max / eig_points: need 0 <= min < max, points >= 2".into(),
    );
    if let Some(c) = x.c {
        rd.check(pos(c), || format!("experiment.c: must be positive, got {c}"));
    }
    rd.check(pos(x.c_multiplier), || {
        format!("experiment.c_multiplier: must be positive, got {}", x.c_multiplier)
    });
    for (key, choices) in [("", x.choices()), ("variant_", x.variant_choices())] {
        if let Err(err) = choices.validate() {
            rd.errors.push(format!("experiment.{key}d1_factor / {key}d2 / {key}b_factor: {err}"));
        }
    }
    for (key, v) in [
        ("t_end", x.t_end),
        ("dt", x.dt),
        ("tol_wave", x.tol_wave),
        ("spread_t_end", x.spread_t_end),
        ("spread_length", x.spread_length),
        ("level", x.level),
        ("observer_multiplier", x.observer_multiplier),
        ("stability_factor", x.stability_factor),
        ("stability_t_end", x.stability_t_end),
        ("stability_target", x.stability_target),
    ] {
        rd.check(pos(v), || format!("experiment.{key}: must be positive, got {v}"));
    }
    rd.check(x.phases >= 1, || "experiment.phases: must be at least 1".into());
    for (key, v) in [("epsilon0", x.epsilon0), ("rate_fraction", x.rate_fraction)] {
        rd.check(v > 0.0 && v < 1.0, || format!("experiment.{key}: must lie in (0, 1), got {v}"));
    }
}

fn min_sampled(series: &FourierSeries, period: f64) -> f64 {
    (0..1024)
        .map(|i| series.eval(period * i as f64 / 1024.0, period))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[medium]
period = 1.0
a0 = "1"
b = "1"

[kernel]
shape = "quartic"
radius = 0.5
q = 64

[grid]
n = 128
"#;

    #[test]
    fn minimal_config_is_valid() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.medium.a0, vec![1.0]);
        assert_eq!(c.kernel.q, 64);
        assert_eq!(c.grid.n, 128);
        assert_eq!(c.solver, EigenSolver::default());
        assert_eq!(c.experiment, ExperimentConfig::default());
        c.medium().unwrap();
    }

    #[test]
    fn coefficient_forms() {
        let text = MINIMAL.replace("a0 = \"1\"", "a0 = [1, 0.4, 0.0]");
        assert_eq!(parse_config(&text).unwrap().medium.a0, vec![1.0, 0.4, 0.0]);
        let text = MINIMAL.replace("a0 = \"1\"", "a0 = \"1, 0.4 0\"");
        assert_eq!(parse_config(&text).unwrap().medium.a0, vec![1.0, 0.4, 0.0]);
        let text = MINIMAL.replace("a0 = \"1\"", "a0 = 2");
        assert_eq!(parse_config(&text).unwrap().medium.a0, vec![2.0]);
    }

    #[test]
    fn narrow_kernel_is_rejected() {
        let text = MINIMAL.replace("radius = 0.5", "radius = 0.005");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("kernel support below grid spacing"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = format!("{MINIMAL}\n[experiment]\ndiffusivity = 1.0\n");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("diffusivity"), "{msg}");
    }

    #[test]
    fn all_violations_are_reported() {
        let text = MINIMAL
            .replace("n = 128", "n = 4")
            .replace("q = 64", "q = 8")
            .replace("shape = \"quartic\"", "shape = \"gaussian\"");
        let Error::Config(errs) = parse_config(&text).unwrap_err() else {
            panic!("expected a config error");
        };
        assert!(errs.len() >= 3, "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("grid.n")));
        assert!(errs.iter().any(|e| e.starts_with("kernel.q")));
        assert!(errs.iter().any(|e| e.starts_with("kernel.shape")));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let msg = parse_config("[medium]\nperiod = = 1\n").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn misaligned_stencil_is_rejected() {
        let text = MINIMAL.replace("n = 128", "n = 100");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("kernel.q / grid.n"), "{msg}");
    }

    #[test]
    fn nonpositive_b_is_rejected() {
        let text = MINIMAL.replace("b = \"1\"", "b = \"0.5 1\"");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("medium.b"), "{msg}");
    }
}
