//! Evolution of the sub/super pair and extraction of the pulsating wave.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, LeftClosure, LineDomain, LineRhs, Rhs, RightClosure, Rk4};
use crate::error::{Error, Result};
use crate::speed::WaveParams;

/// Initial sub- and super-solution data on a line.
#[derive(Debug, Clone)]
pub struct SubSuperPair {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub domain: LineDomain,
}

/// Samples the explicit profiles at `t = 0` on `domain`.
pub fn build_sub_super_pair(params: &WaveParams, domain: &LineDomain) -> Result<SubSuperPair> {
    let radius = params.medium().kernel().radius();
    let (x_lo, x_hi) = (domain.x_lo(), domain.x_hi());
    let m = params.band_threshold;
    if !(m - 2.0 * radius > x_lo + 2.0 * radius && m < x_hi - 2.0 * radius) {
        return Err(Error::DomainTooShort(format!(
            "band [{:.3}, {m:.3}] is not interior to [{x_lo:.3}, {x_hi:.3}]",
            m - 2.0 * radius
        )));
    }
    let lower: Vec<f64> = (0..domain.len())
        .map(|i| params.lower(0.0, domain.global(i)))
        .collect();
    let upper: Vec<f64> = (0..domain.len())
        .map(|i| params.upper(0.0, domain.global(i)))
        .collect();
    if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
        return Err(Error::Invariant(format!(
            "sub-solution exceeds super-solution at x = {} ({} > {})",
            domain.x(i),
            lower[i],
            upper[i]
        )));
    }
    Ok(SubSuperPair {
        lower,
        upper,
        domain: domain.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveRunConfig {
    /// Largest RK4 step; the actual step divides the phase interval evenly.
    pub dt_target: f64,
    pub phases: usize,
    pub tol_wave: f64,
    /// Longest evolution before giving up.
    pub t_end: f64,
}

impl Default for WaveRunConfig {
    fn default() -> Self {
        WaveRunConfig {
            dt_target: 0.02,
            phases: 8,
            tol_wave: 1e-6,
            t_end: 150.0,
        }
    }
}

/// Line on which the pair is evolved: `[-ceil(30 delta0 / p) p, ...)` of length
/// `60 delta0 + c T` rounded up to whole periods.
pub fn wave_domain(params: &WaveParams, config: &WaveRunConfig) -> Result<LineDomain> {
    let cell = params.medium().cell();
    let p = cell.period();
    let n = cell.len() as i64;
    let radius = params.medium().kernel().radius();
    let left_cells = (30.0 * radius / p).ceil() as i64;
    let length = 60.0 * radius + params.c * config.t_end;
    let cells = (length / p).ceil() as i64;
    LineDomain::from_indices(
        cell,
        -left_cells * n,
        (cells * n) as usize,
        LeftClosure::Stationary(params.u_plus.clone()),
        RightClosure::Exponential {
            rate: params.mu,
            profile: params.phi.clone(),
        },
    )
}

/// Per-period diagnostics of the squeeze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub t: f64,
    /// `sup |Psi_upper - Psi_lower|`.
    pub gap: f64,
    pub lower_change: f64,
    pub upper_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub history: Vec<PeriodRecord>,
    pub converged_period: usize,
    /// `max (Psi_lower - Psi_upper)` over stored periods.
    pub sandwich_violation: f64,
    /// `max (Psi_lower_{j-1} - Psi_lower_j)`.
    pub lower_decrease: f64,
    /// `max (Psi_upper_j - Psi_upper_{j-1})`.
    pub upper_increase: f64,
    /// Excess of the initial sub-solution over the final wave, and of the wave over the
    /// initial super-solution, in frame coordinates.
    pub initial_bracket_violation: f64,
    /// `max_k sup |Psi_k(period J) - Psi_k(period J + 1)|`.
    pub periodicity: f64,
    /// `max (U(t_k, x) - U(t_{k+1}, x))` at fixed habitat points.
    pub habitat_decrease: f64,
    /// `max (Psi_k(eta + h) - Psi_k(eta))`.
    pub eta_increase: f64,
    pub min_profile: f64,
    pub max_profile: f64,
    /// `sup |Psi(eta_min) - u+|` over phases.
    pub left_limit_error: f64,
    /// `Psi(eta_max)` over phases.
    pub right_tail: f64,
}

/// Tolerance for drift-type checks of the evolution.
pub const MONOTONE_TOL: f64 = 1e-8;

impl ExtractionReport {
    pub fn sandwich_holds(&self) -> bool {
        self.sandwich_violation <= 1e-10 && self.initial_bracket_violation <= MONOTONE_TOL
    }

    pub fn monotone_in_period(&self) -> bool {
        self.lower_decrease <= MONOTONE_TOL && self.upper_increase <= MONOTONE_TOL
    }

    pub fn monotone_at_fixed_habitat(&self) -> bool {
        self.habitat_decrease <= MONOTONE_TOL
    }

    pub fn limits_hold(&self, tol: f64, u_plus_max: f64) -> bool {
        self.min_profile > 0.0
            && self.max_profile <= u_plus_max + tol
            && self.left_limit_error <= tol
            && self.right_tail <= tol
    }
}

/// The pulsating wave as an `m`-phase family over one temporal period `p / c`.
///
/// Phase `k` sits at `t_k = k p / (c m)`; its frame profile is
/// `Psi_k[i] = U(t_k, x)` at `x - c t_k = (frame_first + i) h`.
#[derive(Debug, Clone)]
pub struct PulsatingWave {
    pub c: f64,
    pub mu: f64,
    pub xi: f64,
    pub period: f64,
    pub h: f64,
    pub frame_first: i64,
    pub profiles: Vec<Vec<f64>>,
    /// `U_t` on the frame, evaluated as the right-hand side.
    pub rates: Vec<Vec<f64>>,
    pub converged: bool,
    pub gap: f64,
    pub report: ExtractionReport,
    pub config: WaveRunConfig,
    params: WaveParams,
    line: LineRhs,
    /// Line states at `t_0, ..., t_m`.
    phase_states: Vec<Vec<f64>>,
    phase_rates: Vec<Vec<f64>>,
    phase_dt: f64,
}

/// Line state of the wave at one time, indexed by global node.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub first: i64,
    pub values: Vec<f64>,
    pub rates: Vec<f64>,
}

impl Snapshot {
    pub fn get(&self, g: i64) -> Option<f64> {
        let i = g - self.first;
        (i >= 0 && (i as usize) < self.values.len()).then(|| self.values[i as usize])
    }
}

/// Cubic Lagrange interpolation of `values` at fractional index `pos`.
pub fn sample_at(values: &[f64], pos: f64) -> f64 {
    let n = values.len();
    let base = pos.floor();
    if base == pos {
        return values[(pos as usize).min(n - 1)];
    }
    let i = (base as isize).clamp(1, n as isize - 3) as usize;
    let s = pos - i as f64;
    let (y0, y1, y2, y3) = (values[i - 1], values[i], values[i + 1], values[i + 2]);
    let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    y0 * l0 + y1 * l1 + y2 * l2 + y3 * l3
}

impl PulsatingWave {
    pub fn params(&self) -> &WaveParams {
        &self.params
    }

    pub fn line(&self) -> &LineRhs {
        &self.line
    }

    pub fn phases(&self) -> usize {
        self.profiles.len()
    }

    pub fn frame_len(&self) -> usize {
        self.profiles[0].len()
    }

    pub fn temporal_period(&self) -> f64 {
        self.period / self.c
    }

    pub fn phase_time(&self, k: usize) -> f64 {
        k as f64 * self.temporal_period() / self.phases() as f64
    }

    /// Frame coordinate of frame node `i`.
    pub fn eta(&self, i: usize) -> f64 {
        (self.frame_first + i as i64) as f64 * self.h
    }

    pub fn etas(&self) -> Vec<f64> {
        (0..self.frame_len()).map(|i| self.eta(i)).collect()
    }

    /// Fractional global index of frame node `i` at phase `k`.
    pub fn habitat_position(&self, k: usize, i: usize) -> f64 {
        let n = self.params.medium().cell().len() as f64;
        (self.frame_first + i as i64) as f64 + k as f64 * n / self.phases() as f64
    }

    /// Global node nearest to frame node `i` at phase `k`.
    pub fn habitat_node(&self, k: usize, i: usize) -> i64 {
        self.habitat_position(k, i).round() as i64
    }

    /// Halves the step used between stored phases.
    pub(crate) fn halve_step(&mut self) {
        self.phase_dt /= 2.0;
    }

    pub fn phase_dt(&self) -> f64 {
        self.phase_dt
    }

    pub fn phase_state(&self, k: usize) -> Snapshot {
        Snapshot {
            t: self.phase_time(k),
            first: self.line.domain().first_index(),
            values: self.phase_states[k].clone(),
            rates: self.phase_rates[k].clone(),
        }
    }

    /// `U(s, .)` on the stored line shifted by whole periods, with `U_t`.
    pub fn snapshot(&self, s: f64) -> Snapshot {
        let tp = self.temporal_period();
        let m = self.phases();
        let n = self.params.medium().cell().len() as i64;
        let periods = (s / tp).floor();
        let rem = s - periods * tp;
        let delta = tp / m as f64;
        let k = ((rem / delta).floor() as usize).min(m - 1);
        let tau = rem - k as f64 * delta;
        let mut values = self.phase_states[k].clone();
        let rates = if tau > 0.0 {
            Rk4::new(values.len()).advance(&self.line, &mut values, tau, self.phase_dt);
            let mut du = vec![0.0; values.len()];
            self.line.eval(&values, &mut du);
            du
        } else {
            self.phase_rates[k].clone()
        };
        Snapshot {
            t: s,
            first: self.line.domain().first_index() + periods as i64 * n,
            values,
            rates,
        }
    }

    /// Serializable phase table.
    pub fn table(&self) -> WaveTable {
        WaveTable {
            c: self.c,
            mu: self.mu,
            xi: self.xi,
            period: self.period,
            eta: self.etas(),
            profiles: self.profiles.clone(),
        }
    }
}

/// Frame profiles as plain data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveTable {
    pub c: f64,
    pub mu: f64,
    pub xi: f64,
    pub period: f64,
    pub eta: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
}

struct Frame {
    /// First line index of the frame at period 0.
    start: usize,
    len: usize,
    n: usize,
}

impl Frame {
    fn sample(&self, u: &[f64], period: usize) -> Vec<f64> {
        let a = self.start + period * self.n;
        u[a..a + self.len].to_vec()
    }

    fn sample_shifted(&self, u: &[f64], period: usize, shift: f64) -> Vec<f64> {
        let a = (self.start + period * self.n) as f64 + shift;
        (0..self.len).map(|i| sample_at(u, a + i as f64)).collect()
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_excess(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max)
}

/// Evolves the pair period by period until the squeeze closes.
pub fn extract_pulsating_wave(
    params: &WaveParams,
    config: &WaveRunConfig,
) -> Result<PulsatingWave> {
    if config.phases == 0 || !(config.tol_wave > 0.0) || !(config.dt_target > 0.0) {
        return Err(Error::InvalidInput("invalid wave run configuration".into()));
    }
    let medium = params.medium();
    let cell = medium.cell();
    let n = cell.len();
    let m = config.phases;
    let radius = medium.kernel().radius();

    let domain = wave_domain(params, config)?;
    domain.check_extent(radius, params.c, config.t_end)?;
    let pair = build_sub_super_pair(params, &domain)?;
    let rhs = LineRhs::new(medium, domain.clone())?;

    let max_periods = (config.t_end * params.c / cell.period()).ceil() as usize;
    let band = (2.0 * radius / cell.spacing()).ceil() as usize;
    let stop = domain
        .len()
        .checked_sub((max_periods + 2) * n + band)
        .filter(|&s| s > band + 4 * n)
        .ok_or_else(|| Error::DomainTooShort("no room for the moving frame".into()))?;
    let frame = Frame {
        start: band,
        len: stop - band,
        n,
    };

    let tp = cell.period() / params.c;
    let delta = tp / m as f64;
    let steps = (delta / config.dt_target).ceil() as usize;
    let dt = delta / steps as f64;
    let integ = dynamics::IntegratorConfig {
        dt,
        t_end: tp,
        output_every: 1,
    };
    integ.check_stable(medium, params.u_plus.max())?;

    let mut lower = pair.lower.clone();
    let mut upper = pair.upper.clone();
    let mut rk_lo = Rk4::new(lower.len());
    let mut rk_up = Rk4::new(upper.len());
    let advance = |rk: &mut Rk4, u: &mut Vec<f64>| -> Result<()> {
        for _ in 0..m * steps {
            rk.step(&rhs, u, dt);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t: f64::NAN });
        }
        Ok(())
    };

    let mut prev_lo = frame.sample(&lower, 0);
    let mut prev_up = frame.sample(&upper, 0);
    let initial_lo = prev_lo.clone();
    let initial_up = prev_up.clone();
    let mut history = Vec::new();
    let mut sandwich: f64 = max_excess(&prev_lo, &prev_up);
    let (mut lower_decrease, mut upper_increase) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut converged_period = None;

    for j in 1..=max_periods {
        let (a, b) = rayon::join(
            || advance(&mut rk_lo, &mut lower),
            || advance(&mut rk_up, &mut upper),
        );
        a.and(b).map_err(|_| Error::BlowUp { t: j as f64 * tp })?;
        let lo = frame.sample(&lower, j);
        let up = frame.sample(&upper, j);
        sandwich = sandwich.max(max_excess(&lo, &up));
        lower_decrease = lower_decrease.max(max_excess(&prev_lo, &lo));
        upper_increase = upper_increase.max(max_excess(&up, &prev_up));
        let record = PeriodRecord {
            period: j,
            t: j as f64 * tp,
            gap: sup_diff(&up, &lo),
            lower_change: sup_diff(&lo, &prev_lo),
            upper_change: sup_diff(&up, &prev_up),
        };
        log::debug!(
            "period {j}: gap {:.3e}, changes {:.3e} / {:.3e}",
            record.gap,
            record.lower_change,
            record.upper_change
        );
        let done = record.gap <= config.tol_wave
            && record.lower_change <= config.tol_wave
            && record.upper_change <= config.tol_wave;
        history.push(record);
        prev_lo = lo;
        prev_up = up;
        if done {
            converged_period = Some(j);
            break;
        }
    }
    let converged_period = converged_period.ok_or_else(|| {
        Error::NoConvergence(format!(
            "squeeze gap {:.3e} after {max_periods} periods",
            history.last().map_or(f64::NAN, |r| r.gap)
        ))
    })?;
    drop(lower);

    // Two more periods of the upper trajectory: one to compare, one to keep.
    let shift_per_phase = n as f64 / m as f64;
    let mut states_a = Vec::with_capacity(m);
    let mut states_b = Vec::with_capacity(m + 1);
    for rec in [&mut states_a, &mut states_b] {
        for _ in 0..m {
            rec.push(upper.clone());
            for _ in 0..steps {
                rk_up.step(&rhs, &mut upper, dt);
            }
        }
    }
    states_b.push(upper.clone());
    let j_a = converged_period;
    let j_b = converged_period + 1;
    let frames = |states: &[Vec<f64>], j: usize| -> Vec<Vec<f64>> {
        (0..m)
            .map(|k| frame.sample_shifted(&states[k], j, k as f64 * shift_per_phase))
            .collect()
    };
    let profiles_a = frames(&states_a, j_a);
    let profiles = frames(&states_b, j_b);
    let periodicity = profiles_a
        .iter()
        .zip(&profiles)
        .map(|(a, b)| sup_diff(a, b))
        .fold(0.0, f64::max);
    upper_increase = upper_increase.max(max_excess(&profiles[0], &prev_up));

    // Re-index the kept period into wave coordinates (t = 0 at its start).
    let wave_first = domain.first_index() - (j_b * n) as i64;
    let wave_domain = LineDomain::from_indices(
        cell,
        wave_first,
        domain.len(),
        domain.left.clone(),
        domain.right.clone(),
    )?;
    let line = LineRhs::new(medium, wave_domain)?;
    let phase_rates: Vec<Vec<f64>> = states_b
        .iter()
        .map(|u| {
            let mut du = vec![0.0; u.len()];
            line.eval(u, &mut du);
            du
        })
        .collect();
    let rates: Vec<Vec<f64>> = (0..m)
        .map(|k| frame.sample_shifted(&phase_rates[k], j_b, k as f64 * shift_per_phase))
        .collect();

    // Checks on the kept family.
    let frame_lo = frame.start + j_b * n;
    let frame_hi = frame_lo + frame.len;
    let habitat_decrease = (0..m)
        .map(|k| max_excess(&states_b[k][frame_lo..frame_hi], &states_b[k + 1][frame_lo..frame_hi]))
        .fold(f64::NEG_INFINITY, f64::max);
    let eta_increase = profiles
        .iter()
        .map(|p| p.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::NEG_INFINITY, f64::max);
    let initial_bracket_violation =
        max_excess(&initial_lo, &profiles[0]).max(max_excess(&profiles[0], &initial_up));
    let frame_first = domain.first_index() + frame.start as i64;
    let left_limit_error = (0..m)
        .map(|k| {
            let g = (frame_first as f64 + k as f64 * shift_per_phase).round() as i64;
            (profiles[k][0] - params.u_plus.at(g)).abs()
        })
        .fold(0.0, f64::max);
    let right_tail = profiles
        .iter()
        .map(|p| *p.last().unwrap())
        .fold(0.0, f64::max);
    let (min_profile, max_profile) = profiles.iter().flatten().fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), &v| (lo.min(v), hi.max(v)),
    );

    let gap = history.last().map_or(f64::NAN, |r| r.gap);
    let report = ExtractionReport {
        history,
        converged_period,
        sandwich_violation: sandwich,
        lower_decrease,
        upper_increase,
        initial_bracket_violation,
        periodicity,
        habitat_decrease,
        eta_increase,
        min_profile,
        max_profile,
        left_limit_error,
        right_tail,
    };
    Ok(PulsatingWave {
        c: params.c,
        mu: params.mu,
        xi: params.xi,
        period: cell.period(),
        h: cell.spacing(),
        frame_first,
        profiles,
        rates,
        converged: true,
        gap,
        report,
        config: *config,
        params: params.clone(),
        line,
        phase_states: states_b,
        phase_rates,
        phase_dt: dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_sampling_is_exact_on_cubics() {
        let f = |x: f64| 0.5 * x * x * x - 2.0 * x * x + x - 3.0;
        let v: Vec<f64> = (0..10).map(|i| f(i as f64)).collect();
        for pos in [1.25, 3.5, 4.0, 7.75] {
            assert!((sample_at(&v, pos) - f(pos)).abs() < 1e-12);
        }
        assert_eq!(sample_at(&v, 0.0), v[0]);
    }
}
