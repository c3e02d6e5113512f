//! Decay, derivative and squeezing checks on an extracted wave.

use serde::{Deserialize, Serialize};

use crate::dynamics::least_squares_slope;
use crate::error::{Error, Result};
use crate::waves::extract::PulsatingWave;
use crate::waves::residual::{quadrature_tolerance, TOL_FLOOR};

/// Tail window: frame points with `floor <= Psi <= ceiling`.
pub const TAIL_CEILING: f64 = 1e-4;
pub const TAIL_FLOOR: f64 = 1e-12;
/// Minimum number of e-folds spanned by the tail window.
pub const MIN_EFOLDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub mu_hat: f64,
    pub eta: Vec<f64>,
    /// `Psi / (e^{-mu eta} phi)` on the window, with the exact `mu`.
    pub ratio: Vec<f64>,
    pub efolds: f64,
}

impl TailFit {
    pub fn relative_rate_error(&self, mu: f64) -> f64 {
        (self.mu_hat - mu).abs() / mu
    }

    /// `max |ratio - 1|` on the window.
    pub fn ratio_deviation(&self) -> f64 {
        self.ratio.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Fits `log(psi / phi) = const - mu_hat eta` over the points with
/// `TAIL_FLOOR <= psi <= TAIL_CEILING`.
pub fn fit_tail(eta: &[f64], psi: &[f64], phi: &[f64], mu: f64) -> Result<TailFit> {
    let idx: Vec<usize> = (0..psi.len())
        .filter(|&i| psi[i] >= TAIL_FLOOR && psi[i] <= TAIL_CEILING)
        .collect();
    if idx.len() < 3 {
        return Err(Error::WindowTooShort(format!("{} tail points", idx.len())));
    }
    let hi = idx.iter().map(|&i| psi[i]).fold(0.0, f64::max);
    let lo = idx.iter().map(|&i| psi[i]).fold(f64::INFINITY, f64::min);
    let efolds = (hi / lo).ln();
    if efolds < MIN_EFOLDS {
        return Err(Error::WindowTooShort(format!(
            "tail spans {efolds:.2} e-folds, need {MIN_EFOLDS}"
        )));
    }
    let xs: Vec<f64> = idx.iter().map(|&i| eta[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| (psi[i] / phi[i]).ln()).collect();
    let mu_hat = -least_squares_slope(&xs, &ys);
    let ratio = idx
        .iter()
        .map(|&i| psi[i] / ((-mu * eta[i]).exp() * phi[i]))
        .collect();
    Ok(TailFit {
        mu_hat,
        eta: xs,
        ratio,
        efolds,
    })
}

/// Tail fit at every phase; returns the fit with the largest rate error.
pub fn tail_decay_fit(wave: &PulsatingWave) -> Result<TailFit> {
    let phi = &wave.params().phi;
    let eta = wave.etas();
    let mut worst: Option<TailFit> = None;
    for k in 0..wave.phases() {
        let phis: Vec<f64> = (0..wave.frame_len())
            .map(|i| phi.at(wave.habitat_node(k, i)))
            .collect();
        let fit = fit_tail(&eta, &wave.profiles[k], &phis, wave.mu)?;
        let worse = worst.as_ref().is_none_or(|w| {
            fit.relative_rate_error(wave.mu) > w.relative_rate_error(wave.mu)
        });
        if worse {
            worst = Some(fit);
        }
    }
    worst.ok_or_else(|| Error::WindowTooShort("no phases".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    /// `min U_t` over the frame and phases.
    pub min_rate: f64,
    pub min_rate_eta: f64,
    /// Left window `eta <= left_edge`.
    pub left_edge: f64,
    pub left_sup: f64,
    /// `max |U_t / (mu c e^{-mu eta} phi) - 1|` over the tail window.
    pub right_ratio_deviation: f64,
    pub right_points: usize,
}

impl DerivativeReport {
    pub fn positive(&self) -> bool {
        self.min_rate >= -1e-8
    }

    pub fn left_flat(&self, tol: f64) -> bool {
        self.left_sup <= tol
    }

    pub fn right_law(&self) -> bool {
        self.right_points > 0 && self.right_ratio_deviation <= 0.05
    }
}

/// Left window used for the flatness of `U_t`, in units of the kernel radius.
pub const LEFT_WINDOW_RADII: f64 = 15.0;

pub fn time_derivative_checks(wave: &PulsatingWave) -> DerivativeReport {
    let params = wave.params();
    let radius = params.medium().kernel().radius();
    let left_edge = -LEFT_WINDOW_RADII * radius;
    let mut min_rate = (f64::INFINITY, f64::NAN);
    let mut left_sup: f64 = 0.0;
    let mut dev: f64 = 0.0;
    let mut right_points = 0;
    let mc = wave.mu * wave.c;
    for k in 0..wave.phases() {
        for i in 0..wave.frame_len() {
            let eta = wave.eta(i);
            let r = wave.rates[k][i];
            let psi = wave.profiles[k][i];
            if r < min_rate.0 {
                min_rate = (r, eta);
            }
            if eta <= left_edge {
                left_sup = left_sup.max(r.abs());
            }
            if (TAIL_FLOOR..=TAIL_CEILING).contains(&psi) {
                let phi = params.phi.at(wave.habitat_node(k, i));
                let ratio = r / (mc * (-wave.mu * eta).exp() * phi);
                dev = dev.max((ratio - 1.0).abs());
                right_points += 1;
            }
        }
    }
    DerivativeReport {
        min_rate: min_rate.0,
        min_rate_eta: min_rate.1,
        left_edge,
        left_sup,
        right_ratio_deviation: dev,
        right_points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeChoices {
    pub epsilon0: f64,
    /// `eta = fraction (1 - epsilon0) eta0`.
    pub rate_fraction: f64,
}

impl Default for SqueezeChoices {
    fn default() -> Self {
        SqueezeChoices {
            epsilon0: 0.5,
            rate_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeConstants {
    #[serde(rename = "M0")]
    pub m0: f64,
    pub sigma0: f64,
    pub eta0: f64,
    /// Time-shift factor.
    pub l: f64,
    /// `sup { U / U_t : eta >= M0 }` on the stored wave.
    pub ratio_sup: f64,
    pub epsilon0: f64,
    /// Exponential rate `eta` of the modulation.
    pub rate: f64,
}

impl SqueezeConstants {
    pub fn within_hypothesis(&self) -> bool {
        self.rate > 0.0 && self.rate < (1.0 - self.epsilon0) * self.eta0
    }
}

/// Safety margin on `U / U_t` bounds.
const RATIO_MARGIN: f64 = 1.1;

pub fn squeeze_constants(wave: &PulsatingWave, choices: SqueezeChoices) -> Result<SqueezeConstants> {
    let e0 = choices.epsilon0;
    if !(e0 > 0.0 && e0 < 1.0) || !(choices.rate_fraction > 0.0 && choices.rate_fraction < 1.0) {
        return Err(Error::InvalidInput(
            "epsilon0 and the rate fraction must lie in (0, 1)".into(),
        ));
    }
    let len = wave.frame_len();
    let m = wave.phases();
    // Largest U / U_t over phases at each frame node; infinite where U_t <= 0.
    let ratio: Vec<f64> = (0..len)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let r = wave.rates[k][i];
                    if r > 0.0 {
                        wave.profiles[k][i] / r
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let tail: Vec<usize> = (0..len)
        .filter(|&i| (0..m).all(|k| wave.profiles[k][i] <= TAIL_CEILING))
        .collect();
    if tail.is_empty() {
        return Err(Error::WindowTooShort("no tail on the frame".into()));
    }
    let tail_sup = tail.iter().map(|&i| ratio[i]).fold(0.0, f64::max);
    if !tail_sup.is_finite() {
        return Err(Error::NoConvergence(
            "U_t is not positive on the wave tail".into(),
        ));
    }
    let bound = RATIO_MARGIN * tail_sup;
    // Smallest frame index from which the ratio stays bounded.
    let mut start = len;
    while start > 0 && ratio[start - 1] <= bound {
        start -= 1;
    }
    if start == len || start == 0 {
        return Err(Error::NoConvergence(
            "could not place M0 inside the frame".into(),
        ));
    }
    let m0 = wave.eta(start);
    let ratio_sup = ratio[start..].iter().copied().fold(0.0, f64::max);

    let u_plus_min = wave.params().u_plus.min();
    let sigma0 = (0..m)
        .flat_map(|k| wave.profiles[k][..=start].iter().copied())
        .fold(u_plus_min, f64::min);
    let eta0 = wave.params().medium().nonlinearity().b().min() * sigma0;
    let l = RATIO_MARGIN * ratio_sup / (1.0 - e0);
    Ok(SqueezeConstants {
        m0,
        sigma0,
        eta0,
        l,
        ratio_sup,
        epsilon0: e0,
        rate: choices.rate_fraction * (1.0 - e0) * eta0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeCheck {
    pub epsilon: f64,
    /// `-min` residual of `H+` (violation of the super-solution sign).
    pub super_violation: f64,
    /// `max` residual of `H-`.
    pub sub_violation: f64,
    pub tol_s: f64,
    pub samples: usize,
    pub worst: (f64, f64),
    pub within_hypothesis: bool,
}

impl SqueezeCheck {
    pub fn holds(&self) -> bool {
        self.super_violation <= self.tol_s && self.sub_violation <= self.tol_s
    }
}

/// Sample times for [`verify_squeeze`]: `count` points over four temporal periods,
/// offset so that most fall between stored phases.
pub fn squeeze_times(wave: &PulsatingWave, count: usize) -> Vec<f64> {
    let span = 4.0 * wave.temporal_period();
    (0..count)
        .map(|i| (i as f64 + 0.37) * span / count as f64)
        .collect()
}

/// Residual signs of `H+- = (1 +- eps e^{-eta t}) U(t -+ l eps e^{-eta t}, x)`.
pub fn verify_squeeze(
    wave: &PulsatingWave,
    constants: &SqueezeConstants,
    epsilon: f64,
    times: &[f64],
) -> Result<SqueezeCheck> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let params = wave.params();
    let medium = params.medium();
    let nl = medium.nonlinearity();
    let st = medium.stencil();
    let reach = st.reach();
    let band = (2.0 * medium.kernel().radius() / wave.h).ceil() as usize;
    let (l, rate) = (constants.l, constants.rate);
    let u_sup = params.u_plus.max();

    // Integration error of the between-phase evolution, by step halving.
    let probe = 0.5 * wave.temporal_period() / wave.phases() as f64;
    let coarse = wave.snapshot(probe);
    let fine = {
        let mut w = wave.clone();
        w.halve_step();
        w.snapshot(probe)
    };
    let time_err = coarse
        .values
        .iter()
        .zip(&fine.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / 15.0;
    let quad = quadrature_tolerance(medium.kernel(), &[0.0, params.mu], u_sup)? - TOL_FLOOR;
    let tol_s = TOL_FLOOR + quad + time_err * (1.0 + l * rate + nl.b().max() * 2.0 * u_sup);

    let mut worst_super = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    let mut worst_sub = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    let mut samples = 0;
    for &t in times {
        let decay = epsilon * (-rate * t).exp();
        for (sign, worst) in [(1.0, &mut worst_super), (-1.0, &mut worst_sub)] {
            let a = 1.0 + sign * decay;
            let s = t - sign * l * decay;
            let ds = 1.0 + sign * l * rate * decay;
            let snap = wave.snapshot(s);
            let len = snap.values.len();
            let u = &snap.values;
            for i in (reach + band)..(len - reach - band) {
                let g = snap.first + i as i64;
                let h_val = a * u[i];
                let h_t = -sign * rate * decay * u[i] + a * snap.rates[i] * ds;
                let kh: f64 = st
                    .offsets()
                    .iter()
                    .zip(st.masses())
                    .map(|(&o, &w)| w * a * u[(i as i64 + o) as usize])
                    .sum();
                let r = h_t - (kh - h_val + nl.growth(g, h_val));
                let v = if sign > 0.0 { -r } else { r };
                if v > worst.0 {
                    worst.0 = v;
                    worst.1 = (t, g as f64 * wave.h - wave.c * s);
                }
                samples += 1;
            }
        }
    }
    Ok(SqueezeCheck {
        epsilon,
        super_violation: worst_super.0,
        sub_violation: worst_sub.0,
        tol_s,
        samples,
        worst: if worst_super.0 >= worst_sub.0 {
            worst_super.1
        } else {
            worst_sub.1
        },
        within_hypothesis: constants.within_hypothesis(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_fits_exactly() {
        let mu = 2.7;
        let eta: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let phi: Vec<f64> = eta.iter().map(|e| 1.0 + 0.3 * (std::f64::consts::TAU * e).cos()).collect();
        let psi: Vec<f64> = eta
            .iter()
            .zip(&phi)
            .map(|(e, p)| (-mu * e).exp() * p)
            .collect();
        let fit = fit_tail(&eta, &psi, &phi, mu).unwrap();
        assert!((fit.mu_hat - mu).abs() < 1e-10);
        assert!(fit.ratio_deviation() < 1e-12);
        assert!(fit.efolds >= MIN_EFOLDS);
    }

    #[test]
    fn short_tails_are_rejected() {
        let eta: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let psi: Vec<f64> = eta.iter().map(|e| 1e-5 * (-e).exp()).collect();
        let ones = vec![1.0; eta.len()];
        assert!(matches!(
            fit_tail(&eta, &psi, &ones, 1.0),
            Err(Error::WindowTooShort(_))
        ));
    }
}
