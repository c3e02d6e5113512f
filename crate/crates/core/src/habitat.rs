//! The periodic medium: period cell, coefficient fields, the nonlinearity,
//! the dispersal kernel and its grid stencil.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, EigenSolver};

/// Smallest admissible number of grid nodes in a period cell.
pub const MIN_CELL_NODES: usize = 8;

/// Uniform grid on one period `[0, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodCell {
    period: f64,
    n: usize,
}

impl PeriodCell {
    pub fn new(period: f64, n: usize) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {period}"
            )));
        }
        if n < MIN_CELL_NODES {
            return Err(Error::GridTooSmall {
                n,
                min: MIN_CELL_NODES,
            });
        }
        Ok(PeriodCell { period, n })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the cell node equivalent to the (possibly out of range) global index `i`.
    #[inline]
    pub fn wrap(&self, i: i64) -> usize {
        i.rem_euclid(self.n as i64) as usize
    }
}

/// Finite Fourier series `c0 + sum_m a_m cos(2 pi m x / p) + b_m sin(2 pi m x / p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FourierSeries {
    pub constant: f64,
    /// `(a_m, b_m)` for `m = 1, 2, ...`.
    pub harmonics: Vec<(f64, f64)>,
}

impl FourierSeries {
    pub fn constant(c0: f64) -> Self {
        FourierSeries {
            constant: c0,
            harmonics: Vec::new(),
        }
    }

    pub fn cosine(c0: f64, a1: f64) -> Self {
        FourierSeries {
            constant: c0,
            harmonics: vec![(a1, 0.0)],
        }
    }

    /// Parses the flat coefficient list `[c0, a1, b1, a2, b2, ...]`.
    pub fn from_flat(coeffs: &[f64]) -> Result<Self> {
        let Some((&c0, rest)) = coeffs.split_first() else {
            return Err(Error::InvalidInput("empty Fourier coefficient list".into()));
        };
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "Fourier coefficients must be finite".into(),
            ));
        }
        let harmonics = rest
            .chunks(2)
            .map(|ab| (ab[0], ab.get(1).copied().unwrap_or(0.0)))
            .collect();
        Ok(FourierSeries {
            constant: c0,
            harmonics,
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![self.constant];
        for &(a, b) in &self.harmonics {
            out.push(a);
            out.push(b);
        }
        out
    }

    pub fn eval(&self, x: f64, period: f64) -> f64 {
        let theta = 2.0 * std::f64::consts::PI * x / period;
        self.harmonics
            .iter()
            .enumerate()
            .fold(self.constant, |acc, (m, &(a, b))| {
                let arg = (m + 1) as f64 * theta;
                acc + a * arg.cos() + b * arg.sin()
            })
    }

    /// Upper bound on `max - min` of the series (sum of harmonic amplitudes, doubled).
    pub fn oscillation_bound(&self) -> f64 {
        2.0 * self
            .harmonics
            .iter()
            .map(|&(a, b)| a.hypot(b))
            .sum::<f64>()
    }

    pub fn shifted(&self, c: f64) -> Self {
        FourierSeries {
            constant: self.constant + c,
            harmonics: self.harmonics.clone(),
        }
    }
}

/// Samples of a p-periodic function at the nodes of a [`PeriodCell`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    cell: PeriodCell,
    values: Vec<f64>,
    series: Option<FourierSeries>,
}

impl PeriodicField {
    /// Exact samples of a Fourier series at the grid nodes.
    pub fn sample(cell: PeriodCell, series: &FourierSeries) -> Self {
        let values = cell
            .nodes()
            .into_iter()
            .map(|x| series.eval(x, cell.period()))
            .collect();
        PeriodicField {
            cell,
            values,
            series: Some(series.clone()),
        }
    }

    pub fn constant(cell: PeriodCell, value: f64) -> Self {
        Self::sample(cell, &FourierSeries::constant(value))
    }

    pub fn from_values(cell: PeriodCell, values: Vec<f64>) -> Result<Self> {
        if values.len() != cell.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} samples, cell has {} nodes",
                values.len(),
                cell.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field values must be finite".into()));
        }
        Ok(PeriodicField {
            cell,
            values,
            series: None,
        })
    }

    pub fn cell(&self) -> &PeriodCell {
        &self.cell
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn series(&self) -> Option<&FourierSeries> {
        self.series.as_ref()
    }

    /// Value at a global grid index, wrapped into the cell.
    #[inline]
    pub fn at(&self, i: i64) -> f64 {
        self.values[self.cell.wrap(i)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        PeriodicField {
            cell: self.cell,
            values: self.values.iter().map(|&v| f(v)).collect(),
            series: None,
        }
    }

    /// Field plus a scalar; keeps the Fourier descriptor in sync.
    pub fn plus(&self, c: f64) -> Self {
        PeriodicField {
            cell: self.cell,
            values: self.values.iter().map(|v| v + c).collect(),
            series: self.series.as_ref().map(|s| s.shifted(c)),
        }
    }

    /// `x -> u(x + k h)`.
    pub fn shifted_nodes(&self, k: i64) -> Self {
        PeriodicField {
            cell: self.cell,
            values: (0..self.cell.len() as i64).map(|i| self.at(i + k)).collect(),
            series: None,
        }
    }

    /// `x -> u(-x)`.
    pub fn reflected(&self) -> Self {
        PeriodicField {
            cell: self.cell,
            values: (0..self.cell.len() as i64).map(|i| self.at(-i)).collect(),
            series: None,
        }
    }
}

/// `f(x, u) = a0(x) - b(x) max(u, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    a0: PeriodicField,
    b: PeriodicField,
}

impl Nonlinearity {
    pub fn new(a0: PeriodicField, b: PeriodicField) -> Result<Self> {
        if a0.cell() != b.cell() {
            return Err(Error::InvalidInput(
                "a0 and b live on different cells".into(),
            ));
        }
        if b.min() <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "b must be positive, min b = {}",
                b.min()
            )));
        }
        Ok(Nonlinearity { a0, b })
    }

    pub fn a0(&self) -> &PeriodicField {
        &self.a0
    }

    pub fn b(&self) -> &PeriodicField {
        &self.b
    }

    #[inline]
    pub fn f(&self, i: i64, u: f64) -> f64 {
        self.a0.at(i) - self.b.at(i) * u.max(0.0)
    }

    /// `u f(x, u)`.
    #[inline]
    pub fn growth(&self, i: i64, u: f64) -> f64 {
        u * self.f(i, u)
    }

    #[inline]
    pub fn df_du(&self, i: i64, u: f64) -> f64 {
        if u > 0.0 {
            -self.b.at(i)
        } else {
            0.0
        }
    }

    /// Level above which `f < 0` everywhere.
    pub fn saturation_level(&self) -> f64 {
        self.a0.max().max(0.0) / self.b.min()
    }

    /// Bound on `-f_u` over `u >= 0`; `max b` for this family.
    pub fn lipschitz_bound(&self) -> f64 {
        self.b.max()
    }

    pub fn reflected(&self) -> Self {
        Nonlinearity {
            a0: self.a0.reflected(),
            b: self.b.reflected(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelShape {
    /// `(15/16)(1 - s^2)^2` on `[-1, 1]`, scaled to the support radius.
    Quartic,
    /// `exp(-1 / (1 - s^2))` on `(-1, 1)`, scaled to the support radius.
    SmoothBump,
}

impl std::str::FromStr for KernelShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quartic" => Ok(KernelShape::Quartic),
            "smooth-bump" | "bump" => Ok(KernelShape::SmoothBump),
            other => Err(Error::InvalidInput(format!(
                "unsupported kernel shape '{other}'"
            ))),
        }
    }
}

/// Compactly supported dispersal kernel with a composite midpoint quadrature
/// on `[-radius, radius]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    shape: KernelShape,
    radius: f64,
    q: usize,
    nodes: Vec<f64>,
    width: f64,
    /// Discrete mass of the unnormalized density.
    scale: f64,
}

impl Kernel {
    pub const MIN_NODES: usize = 16;

    pub fn new(shape: KernelShape, radius: f64, q: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel radius must be positive, got {radius}"
            )));
        }
        if q < Self::MIN_NODES {
            return Err(Error::InvalidInput(format!(
                "kernel quadrature needs at least {} nodes, got {q}",
                Self::MIN_NODES
            )));
        }
        let width = 2.0 * radius / q as f64;
        let nodes: Vec<f64> = (0..q)
            .map(|j| -radius + (j as f64 + 0.5) * width)
            .collect();
        let scale = nodes
            .iter()
            .map(|&s| width * unnormalized(shape, radius, s))
            .sum();
        Ok(Kernel {
            shape,
            radius,
            q,
            nodes,
            width,
            scale,
        })
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn quadrature_count(&self) -> usize {
        self.q
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weight `w_j` (uniform for the midpoint rule).
    pub fn weight(&self) -> f64 {
        self.width
    }

    /// Density before renormalization, e.g. `15/(16 delta)` at the origin for the quartic.
    pub fn unnormalized(&self, s: f64) -> f64 {
        unnormalized(self.shape, self.radius, s)
    }

    /// Renormalized density: `sum_j w_j k(s_j) = 1`.
    pub fn density(&self, s: f64) -> f64 {
        self.unnormalized(s) / self.scale
    }

    /// `w_j k(s_j)` for every node.
    pub fn masses(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|&s| self.width * self.density(s))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    /// `sum_j w_j e^{-mu s_j xi} k(s_j)`.
    pub fn tilted_mass(&self, mu: f64, xi: f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.masses())
            .map(|(&s, m)| m * (-mu * s * xi).exp())
            .sum()
    }

    /// Grid stencil for spacing `h`; every quadrature node must be a multiple of `h`.
    pub fn stencil(&self, h: f64) -> Result<Stencil> {
        if self.radius <= h {
            return Err(Error::InvalidInput(format!(
                "kernel support below grid spacing (radius {} <= h {h})",
                self.radius
            )));
        }
        let masses = self.masses();
        let mut offsets = Vec::with_capacity(self.q);
        for &s in &self.nodes {
            let ratio = s / h;
            let k = ratio.round();
            if (ratio - k).abs() > 1e-9 * ratio.abs().max(1.0) {
                return Err(Error::KernelMisaligned { node: s, h });
            }
            offsets.push(k as i64);
        }
        Ok(Stencil {
            offsets,
            masses,
            h,
        })
    }
}

fn unnormalized(shape: KernelShape, radius: f64, s: f64) -> f64 {
    let t = s / radius;
    if t.abs() >= 1.0 {
        return 0.0;
    }
    match shape {
        KernelShape::Quartic => 15.0 / 16.0 * (1.0 - t * t).powi(2) / radius,
        KernelShape::SmoothBump => (-1.0 / (1.0 - t * t)).exp() / radius,
    }
}

/// Convolution stencil over grid nodes: `(K u)_i = sum_j masses[j] u_{i + offsets[j]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    offsets: Vec<i64>,
    masses: Vec<f64>,
    h: f64,
}

impl Stencil {
    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Largest `|offset|` in nodes.
    pub fn reach(&self) -> usize {
        self.offsets
            .iter()
            .map(|o| o.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Masses multiplied by `e^{-mu s xi}` with `s = offset h`.
    pub fn tilted_masses(&self, mu: f64, xi: f64) -> Vec<f64> {
        self.offsets
            .iter()
            .zip(&self.masses)
            .map(|(&o, &m)| m * (-mu * o as f64 * self.h * xi).exp())
            .collect()
    }

    fn offset_gcd(&self, n: usize) -> usize {
        self.offsets
            .iter()
            .fold(n, |g, &o| gcd(g, o.unsigned_abs() as usize))
    }

    /// Convolution with an arbitrary index-to-value map.
    #[inline]
    pub fn apply_at(&self, i: i64, value: impl Fn(i64) -> f64) -> f64 {
        self.offsets
            .iter()
            .zip(&self.masses)
            .map(|(&o, &m)| m * value(i + o))
            .sum()
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Kernel weights folded onto the period cell: `wrapped[m] = sum_{offset = m mod n} mass`.
pub fn periodize_kernel(stencil: &Stencil, cell: &PeriodCell) -> Vec<f64> {
    let mut wrapped = vec![0.0; cell.len()];
    for (&o, &m) in stencil.offsets.iter().zip(&stencil.masses) {
        wrapped[cell.wrap(o)] += m;
    }
    wrapped
}

/// Convolution of a cell field with folded weights.
pub fn wrapped_convolution(wrapped: &[f64], u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            wrapped
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(m, w)| w * u[(i + m) % n])
                .sum()
        })
        .collect()
}

/// Everything that defines the equation: cell, nonlinearity, kernel and its stencil.
#[derive(Debug, Clone)]
pub struct Medium {
    cell: PeriodCell,
    nonlinearity: Nonlinearity,
    kernel: Kernel,
    stencil: Stencil,
}

impl Medium {
    pub fn new(cell: PeriodCell, nonlinearity: Nonlinearity, kernel: Kernel) -> Result<Self> {
        if *nonlinearity.a0().cell() != cell {
            return Err(Error::InvalidInput(
                "nonlinearity sampled on a different cell".into(),
            ));
        }
        let stencil = kernel.stencil(cell.spacing())?;
        let g = stencil.offset_gcd(cell.len());
        if g != 1 {
            return Err(Error::ReducibleStencil { n: cell.len(), gcd: g });
        }
        Ok(Medium {
            cell,
            nonlinearity,
            kernel,
            stencil,
        })
    }

    /// Medium described by Fourier series for `a0` and `b`.
    pub fn from_series(
        cell: PeriodCell,
        a0: &FourierSeries,
        b: &FourierSeries,
        kernel: Kernel,
    ) -> Result<Self> {
        let nl = Nonlinearity::new(
            PeriodicField::sample(cell, a0),
            PeriodicField::sample(cell, b),
        )?;
        Self::new(cell, nl, kernel)
    }

    pub fn cell(&self) -> &PeriodCell {
        &self.cell
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn a0(&self) -> &PeriodicField {
        self.nonlinearity.a0()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Same medium with coefficients `x -> a0(-x)`, `x -> b(-x)`; maps direction -1 onto +1
    /// for the symmetric kernels provided here.
    pub fn reflected(&self) -> Self {
        Medium {
            cell: self.cell,
            nonlinearity: self.nonlinearity.reflected(),
            kernel: self.kernel.clone(),
            stencil: self.stencil.clone(),
        }
    }

    /// Same kernel, coefficients shifted by `k` nodes (habitat shift `z = k h`).
    pub fn shifted_nodes(&self, k: i64) -> Self {
        let nl = Nonlinearity {
            a0: self.nonlinearity.a0.shifted_nodes(k),
            b: self.nonlinearity.b.shifted_nodes(k),
        };
        Medium {
            nonlinearity: nl,
            ..self.clone()
        }
    }
}

/// Outcome of the standing-hypothesis checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `min b > 0` and `f < 0` above the saturation level.
    pub h1: bool,
    /// Zero is linearly unstable: `lambda0(a0) > 0`.
    pub h2: bool,
    pub lambda0: f64,
    /// `max a0 - min a0 < 1`; `false` means only that this sufficient condition is not met.
    pub h3_sufficient: bool,
    pub a0_oscillation: f64,
    /// `f(x, u) = f(x, 0)` for `u <= 0`; holds for the implemented family.
    pub h4: bool,
    pub notes: Vec<String>,
}

pub fn check_hypotheses(medium: &Medium, solver: &EigenSolver) -> Result<HypothesisReport> {
    let nl = medium.nonlinearity();
    let cell = medium.cell();
    let sat = nl.saturation_level();
    let probe = 2.0 * sat + 1.0;
    let negative_above = (0..cell.len() as i64).all(|i| nl.f(i, probe) < 0.0);
    let h1 = nl.b().min() > 0.0 && negative_above;

    let h4 = (0..cell.len() as i64).all(|i| nl.f(i, -1.0) == nl.f(i, 0.0));

    let pair = spectral::principal_eigenvalue_of(medium, 1.0, 0.0, medium.a0(), solver, None)?;
    let osc = medium.a0().max() - medium.a0().min();

    let mut notes = vec![format!(
        "kernel radius {}: the principal eigenvalue also exists for every sufficiently small \
         radius of a rescaled kernel (not checked)",
        medium.kernel().radius()
    )];
    if osc >= 1.0 {
        notes.push(format!(
            "a0 oscillation {osc:.6} >= 1: sufficient condition for a principal eigenvalue not met \
             (this does not mean it fails)"
        ));
    }
    if nl.a0().series().is_some() {
        notes.push(
            "a0 is a trigonometric polynomial (smooth); in one dimension smooth coefficients also \
             satisfy the maximum-point criterion"
                .into(),
        );
    }

    Ok(HypothesisReport {
        h1,
        h2: pair.lambda0 > 0.0,
        lambda0: pair.lambda0,
        h3_sufficient: osc < 1.0,
        a0_oscillation: osc,
        h4,
        notes,
    })
}
