//! Principal spectrum point of the tilted dispersal operator
//! `K_{xi,mu} - I + a(.) I` restricted to periodic functions.
//!
//! On the cell grid the operator is the dense matrix
//! `A = Q_{xi,mu} - I + diag(a)`, where `Q` carries the kernel masses weighted by
//! `e^{-mu s xi}` for every offset `s = y - x`, folded periodically. `Q` is entrywise
//! nonnegative and, for an irreducible stencil, irreducible, so `A + sigma I` has a
//! Perron root once `sigma` clears the diagonal. Power iteration on that shifted matrix
//! returns the principal spectrum point and its positive eigenfunction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::habitat::{Medium, PeriodCell, PeriodicField, Stencil};

/// Direction of propagation in one dimension.
pub fn validate_direction(xi: f64) -> Result<()> {
    if xi == 1.0 || xi == -1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "direction must be +1 or -1, got {xi}"
        )))
    }
}

/// Dense `n x n` matrix of `Q_{xi,mu} - I + diag(a)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersalMatrix {
    pub xi: f64,
    pub mu: f64,
    n: usize,
    entries: Vec<f64>,
}

impl DispersalMatrix {
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Ok(DispersalMatrix {
            xi: 1.0,
            mu: 0.0,
            n,
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// `A + c I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.entries[i * self.n + i] += c;
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, x)| a * x).sum();
        }
    }
}

pub fn assemble(
    xi: f64,
    mu: f64,
    a: &PeriodicField,
    stencil: &Stencil,
    cell: &PeriodCell,
) -> Result<DispersalMatrix> {
    validate_direction(xi)?;
    if !mu.is_finite() {
        return Err(Error::InvalidInput(format!("tilt must be finite, got {mu}")));
    }
    if a.cell() != cell {
        return Err(Error::InvalidInput("field lives on a different cell".into()));
    }
    if (stencil.spacing() - cell.spacing()).abs() > 1e-12 * cell.spacing() {
        return Err(Error::KernelMisaligned {
            node: stencil.spacing(),
            h: cell.spacing(),
        });
    }
    let n = cell.len();
    let masses = stencil.tilted_masses(mu, xi);
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut entries[i * n..(i + 1) * n];
        for (&o, &m) in stencil.offsets().iter().zip(&masses) {
            row[cell.wrap(i as i64 + o)] += m;
        }
        row[i] += a.values()[i] - 1.0;
    }
    Ok(DispersalMatrix { xi, mu, n, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSolver {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenSolver {
    fn default() -> Self {
        EigenSolver {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Principal spectrum point with its positive, sup-normalized eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda0: f64,
    pub phi: PeriodicField,
    /// `||A phi - lambda0 phi||_inf`.
    pub residual: f64,
    pub iterations: usize,
}

impl EigenPair {
    pub fn min_phi(&self) -> f64 {
        self.phi.min()
    }

    pub fn max_phi(&self) -> f64 {
        self.phi.max()
    }
}

/// Power iteration on `A + sigma I` with `sigma = 1 + max |A_ii|`.
///
/// Tolerances are relative to `max(1, |lambda|)`. `start` must be strictly positive
/// when given; the default start is the constant vector.
pub fn principal_eigenpair(
    a: &DispersalMatrix,
    cell: &PeriodCell,
    solver: &EigenSolver,
    start: Option<&[f64]>,
) -> Result<EigenPair> {
    let n = a.dim();
    if n != cell.len() {
        return Err(Error::InvalidInput("matrix and cell sizes differ".into()));
    }
    if !(solver.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let sigma = 1.0 + (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let b = a.shifted(sigma);

    let mut v: Vec<f64> = match start {
        Some(s) if s.len() == n && s.iter().all(|&x| x > 0.0 && x.is_finite()) => s.to_vec(),
        _ => vec![1.0; n],
    };
    normalize_sup(&mut v);
    let mut w = vec![0.0; n];
    let mut prev_rq = f64::NAN;
    let mut residual = f64::INFINITY;

    for it in 1..=solver.max_iter {
        b.mul_vec(&v, &mut w);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let rq = v.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() / vv;
        let lambda = rq - sigma;
        let scale = lambda.abs().max(1.0);

        residual = v
            .iter()
            .zip(&w)
            .map(|(x, y)| (y - rq * x).abs())
            .fold(0.0, f64::max);

        let stagnant = (rq - prev_rq).abs() <= solver.tol * scale;
        if stagnant && residual <= 10.0 * solver.tol * scale {
            let phi = PeriodicField::from_values(*cell, v)?;
            return Ok(EigenPair {
                lambda0: lambda,
                phi,
                residual,
                iterations: it,
            });
        }
        prev_rq = rq;

        std::mem::swap(&mut v, &mut w);
        if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::NonPositiveIterate { iteration: it });
        }
        normalize_sup(&mut v);
    }
    Err(Error::EigenNoConvergence {
        iterations: solver.max_iter,
        residual,
    })
}

fn normalize_sup(v: &mut [f64]) {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

/// Assemble and solve in one step.
pub fn principal_eigenvalue_of(
    medium: &Medium,
    xi: f64,
    mu: f64,
    a: &PeriodicField,
    solver: &EigenSolver,
    start: Option<&[f64]>,
) -> Result<EigenPair> {
    let matrix = assemble(xi, mu, a, medium.stencil(), medium.cell())?;
    principal_eigenpair(&matrix, medium.cell(), solver, start).map_err(|e| Error::at_tilt(mu, e))
}

/// Result of comparing the eigenpair of `A + c I` with that of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub shift: f64,
    pub lambda_base: f64,
    pub lambda_shifted: f64,
    /// `|(lambda_shifted - lambda_base) - c|`.
    pub eigenvalue_error: f64,
    /// `||phi_shifted - phi_base||_inf`.
    pub eigenvector_error: f64,
}

impl ShiftReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.eigenvalue_error <= tol && self.eigenvector_error <= tol.sqrt()
    }
}

pub fn shift_check(
    a: &DispersalMatrix,
    cell: &PeriodCell,
    c: f64,
    solver: &EigenSolver,
) -> Result<ShiftReport> {
    let base = principal_eigenpair(a, cell, solver, None)?;
    let shifted = principal_eigenpair(&a.shifted(c), cell, solver, None)?;
    let eigenvector_error = base
        .phi
        .values()
        .iter()
        .zip(shifted.phi.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(ShiftReport {
        shift: c,
        lambda_base: base.lambda0,
        lambda_shifted: shifted.lambda0,
        eigenvalue_error: ((shifted.lambda0 - base.lambda0) - c).abs(),
        eigenvector_error,
    })
}

/// One sample of the dispersion curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub mu: f64,
    pub lambda0: f64,
    pub residual: f64,
    pub iterations: usize,
    pub min_phi: f64,
    pub max_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCurve {
    pub xi: f64,
    pub points: Vec<CurvePoint>,
}

impl DispersionCurve {
    pub fn mus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mu).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda0).collect()
    }
}

/// `mu -> lambda0(xi, mu, a)` on an increasing grid, warm-starting each solve.
pub fn lambda0_curve(
    medium: &Medium,
    xi: f64,
    a: &PeriodicField,
    mu_grid: &[f64],
    solver: &EigenSolver,
) -> Result<DispersionCurve> {
    if mu_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("mu grid must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(mu_grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &mu in mu_grid {
        let pair = principal_eigenvalue_of(medium, xi, mu, a, solver, warm.as_deref())?;
        points.push(CurvePoint {
            mu,
            lambda0: pair.lambda0,
            residual: pair.residual,
            iterations: pair.iterations,
            min_phi: pair.min_phi(),
            max_phi: pair.max_phi(),
        });
        warm = Some(pair.phi.values().to_vec());
    }
    Ok(DispersionCurve { xi, points })
}

/// Every eigenvalue of `A` as `(re, im)`, from a Schur decomposition that shares
/// nothing with the power-iteration path. Intended for verification at modest sizes.
pub fn dense_spectrum_oracle(a: &DispersalMatrix) -> Result<Vec<(f64, f64)>> {
    let n = a.dim();
    if n > 256 {
        return Err(Error::OracleFailure(format!(
            "oracle limited to n <= 256, got {n}"
        )));
    }
    let m = nalgebra::DMatrix::from_row_slice(n, n, a.entries());
    let schur = nalgebra::Schur::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::OracleFailure("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect())
}

/// Largest real part over the dense spectrum.
pub fn oracle_max_real_part(a: &DispersalMatrix) -> Result<f64> {
    Ok(dense_spectrum_oracle(a)?
        .into_iter()
        .map(|(re, _)| re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Grid-refinement warning for a principal eigenfunction that may degenerate in the
/// continuum limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementDiagnostic {
    pub min_phi_coarse: f64,
    pub min_phi_fine: f64,
    pub lambda_coarse: f64,
    pub lambda_fine: f64,
    /// `min phi` dropped by more than a factor 4 under refinement.
    pub may_degenerate: bool,
}

/// Re-solve on a grid with twice the nodes (kernel quadrature refined alongside so the
/// stencil stays aligned). Needs `a` to carry its Fourier descriptor.
pub fn refinement_diagnostic(
    medium: &Medium,
    xi: f64,
    mu: f64,
    a: &PeriodicField,
    solver: &EigenSolver,
) -> Result<Option<RefinementDiagnostic>> {
    let Some(series) = a.series() else {
        return Ok(None);
    };
    let coarse = principal_eigenvalue_of(medium, xi, mu, a, solver, None)?;
    let cell = medium.cell();
    let fine_cell = PeriodCell::new(cell.period(), 2 * cell.len())?;
    let k = medium.kernel();
    let fine_medium = [2 * k.quadrature_count(), k.quadrature_count(), 4 * k.quadrature_count()]
        .into_iter()
        .filter_map(|q| crate::habitat::Kernel::new(k.shape(), k.radius(), q).ok())
        .find_map(|kernel| {
            let b = medium.nonlinearity().b();
            let b_fine = match b.series() {
                Some(s) => PeriodicField::sample(fine_cell, s),
                None => PeriodicField::constant(fine_cell, b.min()),
            };
            let nl = crate::habitat::Nonlinearity::new(
                PeriodicField::sample(fine_cell, series),
                b_fine,
            )
            .ok()?;
            Medium::new(fine_cell, nl, kernel).ok()
        });
    let Some(fine_medium) = fine_medium else {
        return Ok(None);
    };
    let a_fine = PeriodicField::sample(fine_cell, series);
    let fine = principal_eigenvalue_of(&fine_medium, xi, mu, &a_fine, solver, None)?;
    let may_degenerate = fine.min_phi() < coarse.min_phi() / 4.0;
    if may_degenerate {
        log::warn!(
            "principal eigenfunction may degenerate in the continuum limit \
             (min phi {:.3e} -> {:.3e} under refinement)",
            coarse.min_phi(),
            fine.min_phi()
        );
    }
    Ok(Some(RefinementDiagnostic {
        min_phi_coarse: coarse.min_phi(),
        min_phi_fine: fine.min_phi(),
        lambda_coarse: coarse.lambda0,
        lambda_fine: fine.lambda0,
        may_degenerate,
    }))
}
