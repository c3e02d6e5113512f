//! Sign of `r = u_t - [K u - u + u f(x, u)]` for explicit candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::habitat::{Kernel, Medium, PeriodicField};
use crate::speed::WaveParams;

/// Function of `(t, global node)` with a known time derivative.
pub trait Candidate: Sync {
    fn value(&self, t: f64, g: i64) -> f64;
    fn rate(&self, t: f64, g: i64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sub,
    Super,
}

/// The explicit profiles of [`WaveParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `max{b phi0, v1}` / `v1+`.
    Lower,
    /// `min{e^{-mu r} phi + d2 e^{-mu1 r} phi1, u+}`.
    Upper,
    /// `b phi0`.
    Floor,
}

pub struct Explicit<'a> {
    pub params: &'a WaveParams,
    pub profile: Profile,
}

impl Candidate for Explicit<'_> {
    fn value(&self, t: f64, g: i64) -> f64 {
        match self.profile {
            Profile::Lower => self.params.lower(t, g),
            Profile::Upper => self.params.upper(t, g),
            Profile::Floor => self.params.floor(g),
        }
    }

    fn rate(&self, t: f64, g: i64) -> f64 {
        match self.profile {
            Profile::Lower => self.params.lower_t(t, g),
            Profile::Upper => self.params.upper_t(t, g),
            Profile::Floor => 0.0,
        }
    }
}

/// A time-independent field, e.g. the stationary state.
pub struct Stationary<'a>(pub &'a PeriodicField);

impl Candidate for Stationary<'_> {
    fn value(&self, _t: f64, g: i64) -> f64 {
        self.0.at(g)
    }

    fn rate(&self, _t: f64, _g: i64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kind: Kind,
    /// `max r` for sub-solutions, `-min r` for super-solutions.
    pub max_violation: f64,
    pub tol_q: f64,
    pub samples: usize,
    /// `(t, x)` of the largest violation.
    pub worst: (f64, f64),
}

impl ResidualReport {
    pub fn holds(&self) -> bool {
        self.max_violation <= self.tol_q
    }

    pub fn into_result(self) -> Result<Self> {
        if self.holds() {
            Ok(self)
        } else {
            Err(Error::Invariant(format!(
                "{:?} residual violated by {:.3e} > {:.3e} at (t, x) = ({}, {})",
                self.kind, self.max_violation, self.tol_q, self.worst.0, self.worst.1
            )))
        }
    }
}

/// Residual of `candidate` at time `t`, global node `g`.
pub fn residual_at(candidate: &dyn Candidate, medium: &Medium, t: f64, g: i64) -> f64 {
    let u = candidate.value(t, g);
    let ku = medium.stencil().apply_at(g, |j| candidate.value(t, j));
    candidate.rate(t, g) - (ku - u + medium.nonlinearity().growth(g, u))
}

pub fn residual_sign_check(
    candidate: &dyn Candidate,
    kind: Kind,
    medium: &Medium,
    times: &[f64],
    nodes: std::ops::Range<i64>,
    tol_q: f64,
) -> ResidualReport {
    let h = medium.cell().spacing();
    let mut worst = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    let mut samples = 0;
    for &t in times {
        for g in nodes.clone() {
            let r = residual_at(candidate, medium, t, g);
            let v = match kind {
                Kind::Sub => r,
                Kind::Super => -r,
            };
            if v > worst.0 {
                worst = (v, (t, g as f64 * h));
            }
            samples += 1;
        }
    }
    ResidualReport {
        kind,
        max_violation: worst.0,
        tol_q,
        samples,
        worst: worst.1,
    }
}

/// Absolute floor of every residual tolerance.
pub const TOL_FLOOR: f64 = 1e-9;

/// Quadrature error bound for candidates built from `e^{-mu x}`-type pieces of size
/// at most `sup_value`: Richardson estimate `|Khat_q - Khat_{q/2}| / 3` at each rate.
pub fn quadrature_tolerance(kernel: &Kernel, rates: &[f64], sup_value: f64) -> Result<f64> {
    let coarse = Kernel::new(kernel.shape(), kernel.radius(), (kernel.quadrature_count() / 2).max(16))?;
    let est = rates
        .iter()
        .map(|&mu| (kernel.tilted_mass(mu, 1.0) - coarse.tilted_mass(mu, 1.0)).abs() / 3.0)
        .fold(0.0, f64::max);
    Ok(TOL_FLOOR + est * sup_value.max(1.0))
}

/// Tolerance for the explicit profiles of `params`.
pub fn explicit_tolerance(params: &WaveParams) -> Result<f64> {
    quadrature_tolerance(
        params.medium().kernel(),
        &[0.0, params.mu, params.mu1],
        params.u_plus.max(),
    )
}
