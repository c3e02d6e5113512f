//! Stability of the wave under perturbations, and independence of the extracted
//! wave from the sub/super constants.

use serde::{Deserialize, Serialize};

use crate::dynamics::{LineDomain, LineRhs, Rk4};
use crate::error::{Error, Result};
use crate::speed::WaveParams;
use crate::waves::extract::{extract_pulsating_wave, PulsatingWave, WaveRunConfig};

/// Initial data built from `U(0, .)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    /// `u0 = U(0, .)`.
    Exact,
    /// `u0 = factor U` for `eta < splice`, `U` beyond.
    Spliced { factor: f64, splice: f64 },
    /// As `Spliced`, but `u0 = 0` from `cutoff` on.
    CompactTail { factor: f64, splice: f64, cutoff: f64 },
}

impl Perturbation {
    fn apply(&self, eta: f64, u: f64) -> f64 {
        match *self {
            Perturbation::Exact => u,
            Perturbation::Spliced { factor, splice } => {
                if eta < splice {
                    factor * u
                } else {
                    u
                }
            }
            Perturbation::CompactTail {
                factor,
                splice,
                cutoff,
            } => {
                if eta >= cutoff {
                    0.0
                } else if eta < splice {
                    factor * u
                } else {
                    u
                }
            }
        }
    }

    /// Positive on the left and matched to the wave tail on the right.
    pub fn within_hypotheses(&self) -> bool {
        match *self {
            Perturbation::Exact => true,
            Perturbation::Spliced { factor, .. } => factor > 0.0,
            Perturbation::CompactTail { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub perturbation: Perturbation,
    pub t_end: f64,
    pub target: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            perturbation: Perturbation::Spliced {
                factor: 1.3,
                splice: 0.0,
            },
            t_end: 100.0,
            target: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySeries {
    pub times: Vec<f64>,
    /// `sup |u / U - 1|` over the trust region.
    pub errors: Vec<f64>,
    pub within_hypotheses: bool,
    pub label: String,
    pub target: f64,
}

impl StabilitySeries {
    pub fn initial_error(&self) -> f64 {
        self.errors.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }

    /// Endpoint assertion; only meaningful inside the hypotheses.
    pub fn holds(&self) -> bool {
        !self.within_hypotheses || self.final_error() <= self.target
    }
}

/// Below this the ratio `u / U` is not evaluated.
pub const RATIO_FLOOR: f64 = 1e-10;

/// Evolves perturbed wave data next to the wave itself and records `sup |u/U - 1|`.
pub fn stability_experiment(wave: &PulsatingWave, config: &StabilityConfig) -> Result<StabilitySeries> {
    let params = wave.params();
    let medium = params.medium();
    let cell = medium.cell();
    let n = cell.len();
    let m = wave.phases();
    let base = wave.line().domain().clone();
    let stored = base.len();
    let periods = (config.t_end / wave.temporal_period()).ceil() as usize;
    let long = LineDomain::from_indices(
        cell,
        base.first_index(),
        stored + (periods + 1) * n,
        base.left.clone(),
        base.right.clone(),
    )?;
    let rhs = LineRhs::new(medium, long.clone())?;

    let start = wave.phase_state(0);
    let amp = wave.line().fit_exponential_tail(&start.values).unwrap_or_else(|| {
        let last = stored - 1;
        start.values[last] / params.phi.at(base.global(last))
    });
    let x_last = base.x(stored - 1);
    let mut u: Vec<f64> = (0..long.len())
        .map(|i| {
            let g = long.global(i);
            let x = long.x(i);
            let w = if i < stored {
                start.values[i]
            } else {
                amp * (-params.mu * (x - x_last)).exp() * params.phi.at(g)
            };
            config.perturbation.apply(x, w)
        })
        .collect();

    let band = (2.0 * medium.kernel().radius() / cell.spacing()).ceil() as usize
        + medium.stencil().reach();
    let error_at = |u: &[f64], periods_done: usize, k: usize| -> f64 {
        let reference = wave.phase_state(k).values;
        let shift = periods_done * n;
        let mut sup: f64 = 0.0;
        for (j, &r) in reference.iter().enumerate().take(stored - band).skip(band) {
            let i = j + shift;
            if i < band || i + band >= u.len() || r < RATIO_FLOOR {
                continue;
            }
            sup = sup.max((u[i] / r - 1.0).abs());
        }
        sup
    };

    let steps = (wave.temporal_period() / m as f64 / wave.phase_dt()).round() as usize;
    let dt = wave.temporal_period() / (m * steps) as f64;
    let mut rk = Rk4::new(u.len());
    let mut times = vec![0.0];
    let mut errors = vec![error_at(&u, 0, 0)];
    'outer: for j in 0..periods {
        for k in 0..m {
            for _ in 0..steps {
                rk.step(&rhs, &mut u, dt);
            }
            let t = (j as f64 + (k + 1) as f64 / m as f64) * wave.temporal_period();
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { t });
            }
            let (pj, pk) = if k + 1 == m { (j + 1, 0) } else { (j, k + 1) };
            times.push(t);
            errors.push(error_at(&u, pj, pk));
            if t >= config.t_end - 1e-9 {
                break 'outer;
            }
        }
    }
    let within = config.perturbation.within_hypotheses();
    Ok(StabilitySeries {
        times,
        errors,
        within_hypotheses: within,
        label: if within {
            "inside the stability hypotheses".into()
        } else {
            "outside the stability hypotheses: tail not matched to the wave".into()
        },
        target: config.target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// `sup` frame-profile distance at matched phases.
    pub distance: f64,
    pub gaps: (f64, f64),
    pub tolerance: f64,
}

impl UniquenessReport {
    pub fn holds(&self) -> bool {
        self.distance <= self.tolerance
    }
}

/// Distance between two extracted waves of the same speed.
pub fn compare_waves(a: &PulsatingWave, b: &PulsatingWave, tol_wave: f64) -> Result<UniquenessReport> {
    if (a.c - b.c).abs() > 1e-12 * a.c.abs().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "waves travel at different speeds ({} vs {}); they are different waves",
            a.c, b.c
        )));
    }
    if a.phases() != b.phases() || a.frame_first != b.frame_first || a.frame_len() != b.frame_len()
    {
        return Err(Error::InvalidInput("waves are sampled on different frames".into()));
    }
    let distance = a
        .profiles
        .iter()
        .zip(&b.profiles)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok(UniquenessReport {
        distance,
        gaps: (a.gap, b.gap),
        tolerance: 2.0 * tol_wave,
    })
}

/// Extracts waves from two constant sets and compares them.
pub fn uniqueness_experiment(
    a: &WaveParams,
    b: &WaveParams,
    config: &WaveRunConfig,
) -> Result<UniquenessReport> {
    if (a.c - b.c).abs() > 1e-12 * a.c.abs().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "variants travel at different speeds ({} vs {}); they are different waves",
            a.c, b.c
        )));
    }
    let (wa, wb) = rayon::join(
        || extract_pulsating_wave(a, config),
        || extract_pulsating_wave(b, config),
    );
    compare_waves(&wa?, &wb?, config.tol_wave)
}
