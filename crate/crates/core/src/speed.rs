//! Spreading speed `c* = inf lambda0(mu)/mu`, the decay rate `mu(c)` and the
//! constants of the explicit sub- and super-solutions.

use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::habitat::{Medium, PeriodicField};
use crate::spectral::{self, DispersionCurve, EigenPair, EigenSolver};

/// Points in the coarse geometric scan of `lambda0(mu)/mu`.
pub const SCAN_POINTS: usize = 32;
/// Relative width at which golden-section refinement stops.
pub const GOLDEN_REL_WIDTH: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedResult {
    pub xi: f64,
    pub c_star: f64,
    pub mu_star: f64,
    /// The coarse scan.
    pub curve: DispersionCurve,
    /// Bracketing triple `(mu_lo, mu_mid, mu_hi)` handed to the golden section.
    pub bracket: (f64, f64, f64),
    pub search: (f64, f64),
}

/// `lambda0(mu)/mu` with warm starts threaded through.
struct SpeedObjective<'a> {
    medium: &'a Medium,
    xi: f64,
    solver: &'a EigenSolver,
    warm: Option<Vec<f64>>,
}

impl SpeedObjective<'_> {
    fn pair(&mut self, mu: f64) -> Result<EigenPair> {
        let pair = spectral::principal_eigenvalue_of(
            self.medium,
            self.xi,
            mu,
            self.medium.a0(),
            self.solver,
            self.warm.as_deref(),
        )?;
        self.warm = Some(pair.phi.values().to_vec());
        Ok(pair)
    }

    fn eval(&mut self, mu: f64) -> Result<f64> {
        Ok(self.pair(mu)?.lambda0 / mu)
    }
}

fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|k| lo * (ratio * k as f64).exp()).collect();
    grid[n - 1] = hi;
    grid
}

pub fn spreading_speed(
    medium: &Medium,
    xi: f64,
    search: (f64, f64),
    solver: &EigenSolver,
) -> Result<SpeedResult> {
    spectral::validate_direction(xi)?;
    let (lo, hi) = search;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "search interval must satisfy 0 < mu_lo < mu_hi, got ({lo}, {hi})"
        )));
    }
    let base = spectral::principal_eigenvalue_of(medium, xi, 0.0, medium.a0(), solver, None)?;
    if base.lambda0 <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "zero state is not linearly unstable: lambda0(a0) = {:.6e}",
            base.lambda0
        )));
    }

    let grid = geometric_grid(lo, hi, SCAN_POINTS);
    let curve = spectral::lambda0_curve(medium, xi, medium.a0(), &grid, solver)?;
    let ratios: Vec<f64> = curve.points.iter().map(|p| p.lambda0 / p.mu).collect();
    let imin = ratios
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if imin == 0 || imin == SCAN_POINTS - 1 {
        return Err(Error::NoInteriorMinimum { lo, hi });
    }
    let bracket = (grid[imin - 1], grid[imin], grid[imin + 1]);

    let mut obj = SpeedObjective {
        medium,
        xi,
        solver,
        warm: None,
    };
    let (mu_star, c_star) = golden_section(bracket.0, bracket.2, |mu| obj.eval(mu))?;
    // The scan point may still be lower by solver noise.
    let (mu_star, c_star) = if ratios[imin] < c_star {
        (grid[imin], ratios[imin])
    } else {
        (mu_star, c_star)
    };
    Ok(SpeedResult {
        xi,
        c_star,
        mu_star,
        curve,
        bracket,
        search,
    })
}

/// Minimizes a unimodal function on `[a, b]`; returns `(argmin, min)`.
pub fn golden_section(
    mut a: f64,
    mut b: f64,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while (b - a) > GOLDEN_REL_WIDTH * 0.5 * (a + b).abs() {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// The tilt `mu in (0, mu*)` with `lambda0(mu)/mu = c`.
pub fn decay_rate_for_speed(
    c: f64,
    speed: &SpeedResult,
    medium: &Medium,
    solver: &EigenSolver,
) -> Result<f64> {
    let scale = solver.tol * speed.c_star.abs().max(1.0) / speed.mu_star;
    if !(c > speed.c_star + scale) {
        return Err(Error::NoSubcriticalDecayRate {
            c,
            c_star: speed.c_star,
        });
    }
    let mut obj = SpeedObjective {
        medium,
        xi: speed.xi,
        solver,
        warm: None,
    };
    let mut hi = speed.mu_star;
    let mut lo = speed.search.0.min(speed.mu_star / 2.0);
    let mut halvings = 0;
    while obj.eval(lo)? <= c {
        hi = lo;
        lo /= 2.0;
        halvings += 1;
        if halvings > 200 {
            return Err(Error::DecayRateNotFound(format!(
                "lambda0(mu)/mu stays below c = {c} as mu -> 0"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = obj.eval(mid)?;
        if (g - c).abs() <= 1e-10 * c {
            return Ok(mid);
        }
        if g > c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Err(Error::DecayRateNotFound(format!(
        "bisection for c = {c} stalled on [{lo}, {hi}]"
    )))
}

/// Free choices in the sub/super-solution construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveChoices {
    pub d1_factor: f64,
    pub d2: f64,
    pub b_factor: f64,
}

impl Default for WaveChoices {
    fn default() -> Self {
        WaveChoices {
            d1_factor: 2.0,
            d2: 0.0,
            b_factor: 0.5,
        }
    }
}

impl WaveChoices {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.d1_factor >= 1.0) {
            bad.push(format!("d1_factor must be >= 1, got {}", self.d1_factor));
        }
        if !(self.d2 >= 0.0) {
            bad.push(format!("d2 must be >= 0, got {}", self.d2));
        }
        if !(self.b_factor > 0.0 && self.b_factor < 1.0) {
            bad.push(format!("b_factor must lie in (0, 1), got {}", self.b_factor));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(bad.join("; ")))
        }
    }
}

/// Every constant of the explicit sub/super-solutions, with their eigenfunctions.
///
/// Profiles are written in the moving coordinate `r = x - c t` (direction `+1`).
#[derive(Debug, Clone)]
pub struct WaveParams {
    pub xi: f64,
    pub c: f64,
    pub c_star: f64,
    pub mu_star: f64,
    pub mu: f64,
    pub mu1: f64,
    pub lambda_mu: f64,
    pub lambda_mu1: f64,
    pub lambda0: f64,
    pub phi: PeriodicField,
    pub phi1: PeriodicField,
    pub phi0: PeriodicField,
    pub lipschitz: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub b: f64,
    pub b_max: f64,
    /// Largest `b` for which the band of width `2 delta0` exists.
    pub b_band: f64,
    pub band_threshold: f64,
    pub u_plus: PeriodicField,
    pub choices: WaveChoices,
    medium: Medium,
}

/// Serializable summary of [`WaveParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveConstants {
    pub xi: f64,
    pub c: f64,
    pub c_star: f64,
    pub mu_star: f64,
    pub mu: f64,
    pub mu1: f64,
    pub lambda_mu: f64,
    pub lambda_mu1: f64,
    pub lambda0: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub b: f64,
    pub b_max: f64,
    pub b_band: f64,
    #[serde(rename = "M")]
    pub band_threshold: f64,
    pub min_phi: f64,
    pub min_phi1: f64,
    pub min_phi0: f64,
    pub u_plus_min: f64,
    pub u_plus_max: f64,
}

impl WaveParams {
    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    /// `mu1 c - lambda(mu1)`.
    pub fn gap(&self) -> f64 {
        self.mu1 * self.c - self.lambda_mu1
    }

    pub fn constants(&self) -> WaveConstants {
        WaveConstants {
            xi: self.xi,
            c: self.c,
            c_star: self.c_star,
            mu_star: self.mu_star,
            mu: self.mu,
            mu1: self.mu1,
            lambda_mu: self.lambda_mu,
            lambda_mu1: self.lambda_mu1,
            lambda0: self.lambda0,
            lipschitz: self.lipschitz,
            d0: self.d0,
            d1: self.d1,
            d2: self.d2,
            b: self.b,
            b_max: self.b_max,
            b_band: self.b_band,
            band_threshold: self.band_threshold,
            min_phi: self.phi.min(),
            min_phi1: self.phi1.min(),
            min_phi0: self.phi0.min(),
            u_plus_min: self.u_plus.min(),
            u_plus_max: self.u_plus.max(),
        }
    }

    /// Moving coordinate of global node `g` at time `t`.
    #[inline]
    pub fn r(&self, t: f64, g: i64) -> f64 {
        g as f64 * self.medium.cell().spacing() - self.c * t
    }

    /// `e^{-mu r} phi`.
    #[inline]
    pub fn leading(&self, t: f64, g: i64) -> f64 {
        (-self.mu * self.r(t, g)).exp() * self.phi.at(g)
    }

    /// `e^{-mu1 r} phi1`.
    #[inline]
    pub fn correction(&self, t: f64, g: i64) -> f64 {
        (-self.mu1 * self.r(t, g)).exp() * self.phi1.at(g)
    }

    /// `v1 = e^{-mu r} phi - d1 e^{-mu1 r} phi1`.
    pub fn v1(&self, t: f64, g: i64) -> f64 {
        self.leading(t, g) - self.d1 * self.correction(t, g)
    }

    pub fn v1_t(&self, t: f64, g: i64) -> f64 {
        self.mu * self.c * self.leading(t, g)
            - self.d1 * self.mu1 * self.c * self.correction(t, g)
    }

    /// `b phi0`.
    pub fn floor(&self, g: i64) -> f64 {
        self.b * self.phi0.at(g)
    }

    /// Sub-solution: `max{b phi0, v1}` left of `M`, `max{v1, 0}` from `M` on.
    pub fn lower(&self, t: f64, g: i64) -> f64 {
        let v = self.v1(t, g);
        if self.r(t, g) < self.band_threshold {
            v.max(self.floor(g))
        } else {
            v.max(0.0)
        }
    }

    pub fn lower_t(&self, t: f64, g: i64) -> f64 {
        let v = self.v1(t, g);
        let other = if self.r(t, g) < self.band_threshold {
            self.floor(g)
        } else {
            0.0
        };
        if v > other {
            self.v1_t(t, g)
        } else {
            0.0
        }
    }

    /// Super-solution: `min{e^{-mu r} phi + d2 e^{-mu1 r} phi1, u+}`.
    pub fn upper(&self, t: f64, g: i64) -> f64 {
        let v = self.leading(t, g) + self.d2 * self.correction(t, g);
        v.min(self.u_plus.at(g))
    }

    pub fn upper_t(&self, t: f64, g: i64) -> f64 {
        let v = self.leading(t, g) + self.d2 * self.correction(t, g);
        if v < self.u_plus.at(g) {
            self.mu * self.c * self.leading(t, g)
                + self.d2 * self.mu1 * self.c * self.correction(t, g)
        } else {
            0.0
        }
    }

    /// Conservative lower bound of `v1` at moving coordinate `r`.
    pub fn v1_bound(&self, r: f64) -> f64 {
        band_bound(self.mu, self.mu1, self.phi.min(), self.d1, self.phi1.max(), r)
    }

    /// `min v1_bound` over `[M - 2 delta0, M]` on the grid.
    pub fn band_minimum(&self) -> f64 {
        let h = self.medium.cell().spacing();
        let width = band_width_nodes(self.medium.kernel().radius(), h);
        (0..=width)
            .map(|k| self.v1_bound(self.band_threshold - k as f64 * h))
            .fold(f64::INFINITY, f64::min)
    }
}

fn band_bound(mu: f64, mu1: f64, min_phi: f64, d1: f64, max_phi1: f64, r: f64) -> f64 {
    (-mu * r).exp() * min_phi - d1 * (-mu1 * r).exp() * max_phi1
}

fn band_width_nodes(radius: f64, h: f64) -> usize {
    (2.0 * radius / h).round() as usize
}

/// Best achievable band value and, for a given `b`, the largest band end with the
/// bound above `b` over the whole band.
struct BandScan {
    rs: Vec<f64>,
    band_min: Vec<f64>,
}

impl BandScan {
    fn new(mu: f64, mu1: f64, min_phi: f64, d1: f64, max_phi1: f64, radius: f64, h: f64) -> Self {
        // v1_bound > 0 exactly for r > r0.
        let r0 = (d1 * max_phi1 / min_phi).ln() / (mu1 - mu);
        let start = (r0 / h).floor() as i64;
        let reach = ((40.0 / mu + 4.0 * radius) / h).ceil() as i64;
        let rs: Vec<f64> = (start..=start + reach).map(|k| k as f64 * h).collect();
        let vals: Vec<f64> = rs
            .iter()
            .map(|&r| band_bound(mu, mu1, min_phi, d1, max_phi1, r))
            .collect();
        let w = band_width_nodes(radius, h);
        let band_min = (0..rs.len())
            .map(|j| {
                if j < w {
                    f64::NEG_INFINITY
                } else {
                    vals[j - w..=j].iter().copied().fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        BandScan { rs, band_min }
    }

    fn best(&self) -> f64 {
        self.band_min.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn threshold(&self, b: f64) -> Option<f64> {
        self.band_min
            .iter()
            .rposition(|&m| m >= b)
            .map(|j| self.rs[j])
    }
}

/// Assembles [`WaveParams`] for speed `c > c*` in direction `+1`.
pub fn build_wave_params(
    c: f64,
    speed: &SpeedResult,
    medium: &Medium,
    choices: WaveChoices,
    solver: &EigenSolver,
) -> Result<WaveParams> {
    choices.validate()?;
    if speed.xi != 1.0 {
        return Err(Error::InvalidInput(
            "wave profiles are built for direction +1; reflect the medium for -1".into(),
        ));
    }
    let mu = decay_rate_for_speed(c, speed, medium, solver)?;
    let mu1 = 0.5 * (mu + (2.0 * mu).min(speed.mu_star));
    if !(mu < mu1 && mu1 < (2.0 * mu).min(speed.mu_star)) {
        return Err(Error::Invariant(format!(
            "mu1 = {mu1} not strictly inside ({mu}, min(2 mu, mu*))"
        )));
    }

    let xi = speed.xi;
    let a0 = medium.a0();
    let (e_mu, e_mu1, e_0) = {
        let solve = |m: f64| spectral::principal_eigenvalue_of(medium, xi, m, a0, solver, None);
        let (e_mu, (e_mu1, e_0)) =
            rayon::join(|| solve(mu), || rayon::join(|| solve(mu1), || solve(0.0)));
        (e_mu?, e_mu1?, e_0?)
    };

    let gap = mu1 * c - e_mu1.lambda0;
    if !(gap > 0.0) {
        return Err(Error::Invariant(format!(
            "mu1 c - lambda(mu1) = {gap:.3e} is not positive"
        )));
    }
    let nl = medium.nonlinearity();
    let lipschitz = nl.lipschitz_bound();
    let (phi, phi1, phi0) = (e_mu.phi, e_mu1.phi, e_0.phi);
    let d0 = (phi.max() / phi1.min())
        .max(lipschitz * phi.max().powi(2) / (gap * phi1.min()));
    let d1 = choices.d1_factor * d0;

    let lambda0 = e_0.lambda0;
    let b_max = lambda0
        / (0..medium.cell().len() as i64)
            .map(|i| nl.b().at(i) * phi0.at(i))
            .fold(0.0, f64::max);

    let h = medium.cell().spacing();
    let radius = medium.kernel().radius();
    let scan = BandScan::new(mu, mu1, phi.min(), d1, phi1.max(), radius, h);
    let b_band = scan.best();
    if !(b_band > 0.0) {
        return Err(Error::BandNotFound(format!(
            "no band of width 2 delta0 with v1 > 0 (d1 = {d1:.3e})"
        )));
    }
    let b = choices.b_factor * b_max.min(b_band);
    if b_band < b_max {
        log::info!(
            "band condition caps b: b_max = {b_max:.3e}, band maximum = {b_band:.3e}"
        );
    }
    let band_threshold = scan
        .threshold(b)
        .ok_or_else(|| Error::BandNotFound(format!("b = {b:.3e}")))?;

    let sat = nl.saturation_level().max(1.0);
    let u_plus = dynamics::stationary_solution(medium, &vec![sat; medium.cell().len()], 1e-12, 1e4)?;

    let params = WaveParams {
        xi,
        c,
        c_star: speed.c_star,
        mu_star: speed.mu_star,
        mu,
        mu1,
        lambda_mu: e_mu.lambda0,
        lambda_mu1: e_mu1.lambda0,
        lambda0,
        phi,
        phi1,
        phi0,
        lipschitz,
        d0,
        d1,
        d2: choices.d2,
        b,
        b_max,
        b_band,
        band_threshold,
        u_plus,
        choices,
        medium: medium.clone(),
    };
    if params.band_minimum() < params.b {
        return Err(Error::Invariant("band condition fails on re-evaluation".into()));
    }
    Ok(params)
}
