//! Time integration of `u_t = K u - u + u f(x, u)` on the period cell and on a
//! truncated line, plus comparison and front-tracking harnesses.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::habitat::{Medium, PeriodCell, PeriodicField};

/// Right-hand side of a semi-discrete evolution equation.
pub trait Rhs: Sync {
    fn len(&self) -> usize;

    fn eval(&self, u: &[f64], du: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Below this many nodes the stencil loop runs on the calling thread.
const PARALLEL_MIN_NODES: usize = 4096;
const CHUNK: usize = 512;

/// Periodic states on the cell, convolution through folded kernel weights.
#[derive(Debug, Clone)]
pub struct PeriodicRhs {
    medium: Medium,
    wrapped: Vec<(usize, f64)>,
}

impl PeriodicRhs {
    pub fn new(medium: &Medium) -> Self {
        let wrapped = crate::habitat::periodize_kernel(medium.stencil(), medium.cell())
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
            .collect();
        PeriodicRhs {
            medium: medium.clone(),
            wrapped,
        }
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }
}

impl Rhs for PeriodicRhs {
    fn len(&self) -> usize {
        self.medium.cell().len()
    }

    fn eval(&self, u: &[f64], du: &mut [f64]) {
        let n = u.len();
        let nl = self.medium.nonlinearity();
        for (i, d) in du.iter_mut().enumerate() {
            let ku: f64 = self.wrapped.iter().map(|&(m, w)| w * u[(i + m) % n]).sum();
            *d = ku - u[i] + nl.growth(i as i64, u[i]);
        }
    }
}

/// Values read for stencil points left of the line.
#[derive(Debug, Clone, PartialEq)]
pub enum LeftClosure {
    /// Periodic stationary state `u+`.
    Stationary(PeriodicField),
}

/// Values read for stencil points right of the line.
#[derive(Debug, Clone, PartialEq)]
pub enum RightClosure {
    Zero,
    /// `A e^{-rate x} profile(x)`, with `A` fitted on the rightmost `2 delta0` window.
    Exponential { rate: f64, profile: PeriodicField },
}

/// Truncation of the real line to `[x_lo, x_hi]` on the cell spacing.
///
/// Node `i` sits at `x = (first + i) h`; `first + i` doubles as the global index into
/// periodic coefficient fields.
#[derive(Debug, Clone, PartialEq)]
pub struct LineDomain {
    first: i64,
    len: usize,
    h: f64,
    pub left: LeftClosure,
    pub right: RightClosure,
}

impl LineDomain {
    pub fn new(
        cell: &PeriodCell,
        x_lo: f64,
        x_hi: f64,
        left: LeftClosure,
        right: RightClosure,
    ) -> Result<Self> {
        let h = cell.spacing();
        let first = x_lo / h;
        let last = x_hi / h;
        if (first - first.round()).abs() > 1e-9 * first.abs().max(1.0)
            || (last - last.round()).abs() > 1e-9 * last.abs().max(1.0)
        {
            return Err(Error::InvalidInput(format!(
                "line extent [{x_lo}, {x_hi}] is not aligned to spacing {h}"
            )));
        }
        let (first, last) = (first.round() as i64, last.round() as i64);
        if last <= first {
            return Err(Error::InvalidInput("empty line extent".into()));
        }
        Self::from_indices(cell, first, (last - first) as usize, left, right)
    }

    pub fn from_indices(
        cell: &PeriodCell,
        first: i64,
        len: usize,
        left: LeftClosure,
        right: RightClosure,
    ) -> Result<Self> {
        let LeftClosure::Stationary(u_plus) = &left;
        if u_plus.cell() != cell {
            return Err(Error::InvalidInput("left closure on a different cell".into()));
        }
        if let RightClosure::Exponential { profile, rate } = &right {
            if profile.cell() != cell || !rate.is_finite() {
                return Err(Error::InvalidInput("invalid exponential closure".into()));
            }
        }
        Ok(LineDomain {
            first,
            len,
            h: cell.spacing(),
            left,
            right,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn first_index(&self) -> i64 {
        self.first
    }

    /// Global index of node `i`.
    #[inline]
    pub fn global(&self, i: usize) -> i64 {
        self.first + i as i64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.global(i) as f64 * self.h
    }

    pub fn x_lo(&self) -> f64 {
        self.x(0)
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.len - 1)
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.x(i)).collect()
    }

    /// Extent must leave room for the front: at least `20 delta0 + c t_end`.
    pub fn check_extent(&self, radius: f64, speed: f64, t_end: f64) -> Result<()> {
        let need = 20.0 * radius + speed.abs() * t_end;
        let have = self.x_hi() - self.x_lo();
        if have < need {
            return Err(Error::DomainTooShort(format!(
                "line length {have:.3} below 20 delta0 + c T = {need:.3}"
            )));
        }
        Ok(())
    }

    pub fn with_right(&self, right: RightClosure) -> Self {
        LineDomain {
            right,
            ..self.clone()
        }
    }
}

/// Line states, with closures supplying stencil points outside the extent.
#[derive(Debug)]
pub struct LineRhs {
    medium: Medium,
    domain: LineDomain,
    window: usize,
    fallback_warned: AtomicBool,
}

impl Clone for LineRhs {
    fn clone(&self) -> Self {
        LineRhs {
            medium: self.medium.clone(),
            domain: self.domain.clone(),
            window: self.window,
            fallback_warned: AtomicBool::new(self.fallback_warned.load(Ordering::Relaxed)),
        }
    }
}

impl LineRhs {
    pub fn new(medium: &Medium, domain: LineDomain) -> Result<Self> {
        if (domain.h - medium.cell().spacing()).abs() > 1e-15 {
            return Err(Error::InvalidInput("line and cell spacing differ".into()));
        }
        let reach = medium.stencil().reach();
        if domain.len <= 2 * reach {
            return Err(Error::DomainTooShort(format!(
                "{} nodes for a stencil of reach {reach}",
                domain.len
            )));
        }
        let window = ((2.0 * medium.kernel().radius() / domain.h).ceil() as usize)
            .clamp(2, domain.len);
        Ok(LineRhs {
            medium: medium.clone(),
            domain,
            window,
            fallback_warned: AtomicBool::new(false),
        })
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn domain(&self) -> &LineDomain {
        &self.domain
    }

    /// Amplitude of the exponential closure fitted to `u`, or `None` when the tail is
    /// not (yet) exponential.
    pub fn fit_exponential_tail(&self, u: &[f64]) -> Option<f64> {
        let RightClosure::Exponential { rate, profile } = &self.domain.right else {
            return None;
        };
        let d = &self.domain;
        let last = d.len - 1;
        let x_last = d.x(last);
        let basis = |i: usize| (-rate * (d.x(i) - x_last)).exp() * profile.at(d.global(i));
        let range = d.len - self.window..d.len;
        let (mut num, mut den) = (0.0, 0.0);
        for i in range.clone() {
            let g = basis(i);
            num += u[i] * g;
            den += g * g;
        }
        if !(den > 0.0) {
            return None;
        }
        let amp = num / den;
        if !(amp > 0.0) || !amp.is_finite() {
            return None;
        }
        let misfit = range
            .map(|i| {
                let g = amp * basis(i);
                (u[i] - g).abs() / g
            })
            .fold(0.0, f64::max);
        (misfit <= 0.1 && u[d.len - self.window..].iter().all(|&v| v > 0.0)).then_some(amp)
    }

    /// Copy of `u` padded with closure values on both sides.
    fn extend(&self, u: &[f64]) -> (Vec<f64>, usize) {
        let d = &self.domain;
        let pad = self.medium.stencil().reach();
        let mut ext = Vec::with_capacity(d.len + 2 * pad);
        let LeftClosure::Stationary(u_plus) = &d.left;
        ext.extend((0..pad).map(|k| u_plus.at(d.first - pad as i64 + k as i64)));
        ext.extend_from_slice(u);
        match &d.right {
            RightClosure::Zero => ext.extend(std::iter::repeat_n(0.0, pad)),
            RightClosure::Exponential { rate, profile } => match self.fit_exponential_tail(u) {
                Some(amp) => {
                    let x_last = d.x(d.len - 1);
                    ext.extend((1..=pad).map(|k| {
                        let g = d.global(d.len - 1) + k as i64;
                        amp * (-rate * (g as f64 * d.h - x_last)).exp() * profile.at(g)
                    }))
                }
                None => {
                    if !self.fallback_warned.swap(true, Ordering::Relaxed) {
                        log::warn!(
                            "right tail is not exponential yet; using the zero closure"
                        );
                    }
                    ext.extend(std::iter::repeat_n(0.0, pad))
                }
            },
        }
        (ext, pad)
    }
}

impl Rhs for LineRhs {
    fn len(&self) -> usize {
        self.domain.len
    }

    fn eval(&self, u: &[f64], du: &mut [f64]) {
        let (ext, pad) = self.extend(u);
        let st = self.medium.stencil();
        let nl = self.medium.nonlinearity();
        let first = self.domain.first;
        let node = |i: usize| -> f64 {
            let c = (i + pad) as i64;
            let ku: f64 = st
                .offsets()
                .iter()
                .zip(st.masses())
                .map(|(&o, &m)| m * ext[(c + o) as usize])
                .sum();
            ku - u[i] + nl.growth(first + i as i64, u[i])
        };
        if du.len() >= PARALLEL_MIN_NODES {
            du.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
                for (k, d) in chunk.iter_mut().enumerate() {
                    *d = node(c * CHUNK + k);
                }
            });
        } else {
            for (i, d) in du.iter_mut().enumerate() {
                *d = node(i);
            }
        }
    }
}

/// `0.2 / (1 + max a0 + max b * u_cap)`.
pub fn max_stable_dt(medium: &Medium, u_cap: f64) -> f64 {
    let nl = medium.nonlinearity();
    0.2 / (1.0 + nl.a0().max().max(0.0) + nl.b().max() * u_cap.max(0.0))
}

/// Classical four-stage Runge–Kutta settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record a state every this many steps.
    pub output_every: usize,
}

impl IntegratorConfig {
    /// Largest step not above `dt_target` that divides `t_end` evenly.
    pub fn fitted(dt_target: f64, t_end: f64, output_every: usize) -> Self {
        let steps = (t_end / dt_target).ceil().max(1.0);
        IntegratorConfig {
            dt: t_end / steps,
            t_end,
            output_every: output_every.max(1),
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn check_stable(&self, medium: &Medium, u_cap: f64) -> Result<()> {
        let bound = max_stable_dt(medium, u_cap);
        if !(self.dt > 0.0) || self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::UnstableStep { dt: self.dt, bound });
        }
        Ok(())
    }
}

/// Reusable RK4 stage storage.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Advances `u` by `dt`; returns `sup |du/dt|` at the start of the step.
    pub fn step(&mut self, rhs: &dyn Rhs, u: &mut [f64], dt: f64) -> f64 {
        rhs.eval(u, &mut self.k1);
        stage(&mut self.tmp, u, &self.k1, 0.5 * dt);
        rhs.eval(&self.tmp, &mut self.k2);
        stage(&mut self.tmp, u, &self.k2, 0.5 * dt);
        rhs.eval(&self.tmp, &mut self.k3);
        stage(&mut self.tmp, u, &self.k3, dt);
        rhs.eval(&self.tmp, &mut self.k4);
        for (i, v) in u.iter_mut().enumerate() {
            *v += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        sup_abs(&self.k1)
    }

    /// Advances `u` by `duration` in equal sub-steps no longer than `dt_max`.
    pub fn advance(&mut self, rhs: &dyn Rhs, u: &mut [f64], duration: f64, dt_max: f64) {
        if duration <= 0.0 {
            return;
        }
        let steps = (duration / dt_max).ceil().max(1.0) as usize;
        let dt = duration / steps as f64;
        for _ in 0..steps {
            self.step(rhs, u, dt);
        }
    }
}

fn stage(out: &mut [f64], u: &[f64], k: &[f64], a: f64) {
    for ((o, &x), &d) in out.iter_mut().zip(u).zip(k) {
        *o = x + a * d;
    }
}

pub fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// States recorded at output strides.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `sup |du/dt|` at each recorded time.
    pub rhs_sup: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn integrate(u0: &[f64], config: &IntegratorConfig, rhs: &dyn Rhs) -> Result<Trajectory> {
    if u0.len() != rhs.len() {
        return Err(Error::InvalidInput("state and rhs sizes differ".into()));
    }
    let mut u = u0.to_vec();
    let mut rk = Rk4::new(u.len());
    let mut du = vec![0.0; u.len()];
    rhs.eval(&u, &mut du);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![u.clone()],
        rhs_sup: vec![sup_abs(&du)],
    };
    let steps = config.steps();
    for s in 1..=steps {
        rk.step(rhs, &mut u, config.dt);
        let t = s as f64 * config.dt;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t });
        }
        if s % config.output_every == 0 || s == steps {
            rhs.eval(&u, &mut du);
            traj.times.push(t);
            traj.states.push(u.clone());
            traj.rhs_sup.push(sup_abs(&du));
        }
    }
    Ok(traj)
}

/// Positive periodic stationary state reached from `u0 > 0` by time integration.
pub fn stationary_solution(
    medium: &Medium,
    u0: &[f64],
    tol: f64,
    t_max: f64,
) -> Result<PeriodicField> {
    if u0.len() != medium.cell().len() || u0.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput(
            "stationary search needs a strictly positive cell state".into(),
        ));
    }
    let rhs = PeriodicRhs::new(medium);
    let cap = u0
        .iter()
        .copied()
        .fold(medium.nonlinearity().saturation_level(), f64::max);
    let dt = max_stable_dt(medium, cap);
    let mut u = u0.to_vec();
    let mut rk = Rk4::new(u.len());
    let mut du = vec![0.0; u.len()];
    let mut t = 0.0;
    while t < t_max {
        rhs.eval(&u, &mut du);
        if sup_abs(&du) <= tol {
            return PeriodicField::from_values(*medium.cell(), u);
        }
        rk.step(&rhs, &mut u, dt);
        t += dt;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t });
        }
    }
    Err(Error::NoConvergence(format!(
        "stationary state not reached by t = {t_max} (sup |du/dt| = {:.3e})",
        sup_abs(&du)
    )))
}

/// Ordering of two trajectories started from ordered data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `min (u2 - u1)` over every output and node.
    pub min_gap: f64,
    /// `min (u2 - u1)` at the final time.
    pub final_min_gap: f64,
    /// The initial gap is nonzero somewhere.
    pub initial_gap_nontrivial: bool,
    pub t_end: f64,
}

impl ComparisonReport {
    /// Ordering kept and, for a nontrivial initial gap, strict at the end.
    pub fn holds(&self) -> bool {
        self.min_gap >= -1e-10 && (!self.initial_gap_nontrivial || self.final_min_gap > 0.0)
    }
}

pub fn comparison_harness(
    lower0: &[f64],
    upper0: &[f64],
    config: &IntegratorConfig,
    rhs: &dyn Rhs,
) -> Result<ComparisonReport> {
    if lower0.len() != upper0.len() {
        return Err(Error::InvalidInput("states differ in length".into()));
    }
    let initial_gap = lower0
        .iter()
        .zip(upper0)
        .map(|(a, b)| b - a)
        .fold(f64::INFINITY, f64::min);
    if initial_gap < 0.0 {
        return Err(Error::InvalidInput("initial data are not ordered".into()));
    }
    let nontrivial = lower0.iter().zip(upper0).any(|(a, b)| b > a);
    let mut lo = lower0.to_vec();
    let mut hi = upper0.to_vec();
    let mut rk = Rk4::new(lo.len());
    let mut min_gap = initial_gap;
    let steps = config.steps();
    let mut last_gap = initial_gap;
    for s in 1..=steps {
        rk.step(rhs, &mut lo, config.dt);
        rk.step(rhs, &mut hi, config.dt);
        if s % config.output_every == 0 || s == steps {
            last_gap = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| b - a)
                .fold(f64::INFINITY, f64::min);
            min_gap = min_gap.min(last_gap);
        }
    }
    let report = ComparisonReport {
        min_gap,
        final_min_gap: last_gap,
        initial_gap_nontrivial: nontrivial,
        t_end: config.t_end,
    };
    if report.min_gap < -1e-10 {
        return Err(Error::Invariant(format!(
            "comparison ordering violated by {:.3e}",
            -report.min_gap
        )));
    }
    Ok(report)
}

/// Level-set history of a spreading run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrack {
    pub level: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub u_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub rhs_sup: Vec<f64>,
    /// `sup { u(t, x) : x >= x_level(0) + v t }` for the observer speed `v`, if requested.
    pub ahead: Vec<f64>,
    /// Least-squares slope of the positions over the second half of the run.
    pub speed: f64,
}

/// `max { x : u(x) >= level }`, linearly interpolated towards the next node.
pub fn level_position(domain: &LineDomain, u: &[f64], level: f64) -> Option<f64> {
    let i = u.iter().rposition(|&v| v >= level)?;
    if i + 1 >= u.len() {
        return None;
    }
    let (a, b) = (u[i], u[i + 1]);
    let frac = if a > b { (a - level) / (a - b) } else { 0.0 };
    Some(domain.x(i) + frac * domain.spacing())
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (num, den) = xs.iter().zip(ys).fold((0.0, 0.0), |(nu, de), (&x, &y)| {
        (nu + (x - mx) * (y - my), de + (x - mx) * (x - mx))
    });
    num / den
}

/// Heaviside-type data on `[0, length]`: `u+` left of `step_at`, zero beyond, with the
/// `u+` closure on the left and the zero closure on the right.
pub fn front_like_data(
    medium: &Medium,
    u_plus: &PeriodicField,
    length: f64,
    step_at: f64,
) -> Result<(LineRhs, Vec<f64>)> {
    let cell = medium.cell();
    let length = (length / cell.period()).ceil() * cell.period();
    let domain = LineDomain::new(
        cell,
        0.0,
        length,
        LeftClosure::Stationary(u_plus.clone()),
        RightClosure::Zero,
    )?;
    let u0 = (0..domain.len())
        .map(|i| if domain.x(i) < step_at { u_plus.at(domain.global(i)) } else { 0.0 })
        .collect();
    Ok((LineRhs::new(medium, domain)?, u0))
}

pub fn front_speed_measurement(
    u0: &[f64],
    level: f64,
    config: &IntegratorConfig,
    rhs: &LineRhs,
    observer_speed: Option<f64>,
) -> Result<FrontTrack> {
    let domain = rhs.domain().clone();
    let closure_zone = 2.0 * rhs.medium().kernel().radius();
    let x0 = level_position(&domain, u0, level).ok_or(Error::FrontNotFound)?;
    let mut u = u0.to_vec();
    let mut rk = Rk4::new(u.len());
    let mut du = vec![0.0; u.len()];

    let mut track = FrontTrack {
        level,
        times: Vec::new(),
        positions: Vec::new(),
        u_max: Vec::new(),
        u_min: Vec::new(),
        rhs_sup: Vec::new(),
        ahead: Vec::new(),
        speed: f64::NAN,
    };
    let record = |t: f64, u: &[f64], du: &[f64], track: &mut FrontTrack| -> Result<()> {
        let x = level_position(&domain, u, level).ok_or(Error::FrontNotFound)?;
        if x >= domain.x_hi() - closure_zone {
            return Err(Error::DomainTooShort(format!(
                "level set reached the right closure zone at t = {t}"
            )));
        }
        track.times.push(t);
        track.positions.push(x);
        track.u_max.push(u.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        track.u_min.push(u.iter().copied().fold(f64::INFINITY, f64::min));
        track.rhs_sup.push(sup_abs(du));
        if let Some(v) = observer_speed {
            let edge = x0 + v * t;
            let sup = (0..u.len())
                .filter(|&i| domain.x(i) >= edge && domain.x(i) < domain.x_hi() - closure_zone)
                .map(|i| u[i])
                .fold(0.0, f64::max);
            track.ahead.push(sup);
        }
        Ok(())
    };

    rhs.eval(&u, &mut du);
    record(0.0, &u, &du, &mut track)?;
    let steps = config.steps();
    for s in 1..=steps {
        rk.step(rhs, &mut u, config.dt);
        let t = s as f64 * config.dt;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t });
        }
        if s % config.output_every == 0 || s == steps {
            rhs.eval(&u, &mut du);
            record(t, &u, &du, &mut track)?;
        }
    }
    let half = track.times.len() / 2;
    if track.times.len() - half < 2 {
        return Err(Error::InvalidInput("too few outputs to fit a speed".into()));
    }
    track.speed = least_squares_slope(&track.times[half..], &track.positions[half..]);
    Ok(track)
}
