//! Cubic B-splines on equally spaced knots, tensor-product evaluation and the
//! second-order difference penalty used by the matrix-normal prior on the
//! spline coefficients.
//!
//! Basis values are produced by differencing truncated power functions
//! (`B = Δ⁴ P / (3! h³)` with `P_jk = (x - t_k)³₊`), which gives the same
//! functions as the Cox–de Boor recursion on the extended knot sequence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LogConcGrid;

pub const DEGREE: usize = 3;
pub const DEFAULT_BASIS_SIZE: usize = 6;
pub const DEFAULT_PENALTY_RIDGE: f64 = 1e-4;

/// Slack allowed when checking that a point lies inside the knot range.
const RANGE_TOL: f64 = 1e-9;

/// Equally spaced cubic B-spline basis of `n_basis` functions covering
/// `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpline {
    pub lo: f64,
    pub hi: f64,
    pub n_basis: usize,
}

impl AxisSpline {
    pub fn new(lo: f64, hi: f64, n_basis: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::invalid(format!(
                "knot range must be finite and increasing, got [{lo}, {hi}]"
            )));
        }
        if n_basis < DEGREE + 1 {
            return Err(Error::invalid(format!(
                "a cubic basis needs at least {} functions, got {n_basis}",
                DEGREE + 1
            )));
        }
        Ok(Self { lo, hi, n_basis })
    }

    pub fn n_segments(&self) -> usize {
        self.n_basis - DEGREE
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.n_segments() as f64
    }

    /// Full extended knot sequence, `n_basis + DEGREE + 1` knots.
    pub fn knots(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n_basis + DEGREE + 1)
            .map(|k| self.lo + (k as f64 - DEGREE as f64) * h)
            .collect()
    }

    /// Knots strictly inside or on the boundary of `[lo, hi]`.
    pub fn boundary_knots(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..=self.n_segments())
            .map(|k| self.lo + k as f64 * h)
            .collect()
    }

    /// Basis values at a single point (one row of the basis matrix).
    pub fn eval(&self, x: f64) -> Result<DVector<f64>> {
        if !x.is_finite() || x < self.lo - RANGE_TOL || x > self.hi + RANGE_TOL {
            return Err(Error::OutOfRange {
                point: x,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let x = x.clamp(self.lo, self.hi);
        let knots = self.knots();
        let h = self.spacing();
        let scale = 1.0 / (6.0 * h * h * h);
        // Fourth differences of (x - t_k)^3_+ over the five knots supporting B_j.
        const W: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
        let row = DVector::from_fn(self.n_basis, |j, _| {
            let support = &knots[j..j + 5];
            if x <= support[0] || x >= support[4] {
                return 0.0;
            }
            let acc: f64 = W
                .iter()
                .zip(support)
                .filter(|(_, &t)| x > t)
                .map(|(w, t)| w * (x - t).powi(3))
                .sum();
            (acc * scale).max(0.0)
        });
        Ok(row)
    }
}

/// Basis matrix with one row per point, shape `(points.len(), n_basis)`.
pub fn basis_matrix(points: &[f64], axis: &AxisSpline) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(points.len(), axis.n_basis);
    for (i, &x) in points.iter().enumerate() {
        out.set_row(i, &axis.eval(x)?.transpose());
    }
    Ok(out)
}

/// `Σ_lm C_lm · row1_l · row2_m`.
pub fn tensor_eval(row1: &[f64], row2: &[f64], coef: &DMatrix<f64>) -> Result<f64> {
    if coef.nrows() != row1.len() || coef.ncols() != row2.len() {
        return Err(Error::dims(
            "spline coefficients",
            format!("{}x{}", row1.len(), row2.len()),
            format!("{}x{}", coef.nrows(), coef.ncols()),
        ));
    }
    let mut total = 0.0;
    for (l, &a) in row1.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (m, &b) in row2.iter().enumerate() {
            inner += coef[(l, m)] * b;
        }
        total += a * inner;
    }
    Ok(total)
}

/// Second-difference operator, `(K-2) x K` with rows `(.., 1, -2, 1, ..)`.
pub fn second_difference(k: usize) -> Result<DMatrix<f64>> {
    if k < 3 {
        return Err(Error::invalid(format!(
            "second differences need at least 3 coefficients, got {k}"
        )));
    }
    let mut d = DMatrix::zeros(k - 2, k);
    for r in 0..k - 2 {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    Ok(d)
}

/// Precision matrix `D₂ᵀD₂ + ridge·I` of the smoothing prior along one axis.
pub fn penalty_precision(k: usize, ridge: f64) -> Result<DMatrix<f64>> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::invalid(format!(
            "penalty ridge must be positive, got {ridge}"
        )));
    }
    let d = second_difference(k)?;
    Ok(d.transpose() * d + DMatrix::identity(k, k) * ridge)
}

/// Spline configuration of the interaction term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub axis1: AxisSpline,
    pub axis2: AxisSpline,
    pub penalty_ridge: f64,
}

impl SplineSpec {
    /// Knots spanning exactly the (substituted) log-concentration range of
    /// each axis.
    pub fn for_grid(grid: &LogConcGrid, k1: usize, k2: usize, ridge: f64) -> Result<Self> {
        let (lo1, hi1) = grid.range1();
        let (lo2, hi2) = grid.range2();
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!(
                "penalty ridge must be positive, got {ridge}"
            )));
        }
        Ok(Self {
            axis1: AxisSpline::new(lo1, hi1, k1)?,
            axis2: AxisSpline::new(lo2, hi2, k2)?,
            penalty_ridge: ridge,
        })
    }

    pub fn k1(&self) -> usize {
        self.axis1.n_basis
    }

    pub fn k2(&self) -> usize {
        self.axis2.n_basis
    }

    /// Row precision (axis 1, `K1 x K1`) and column precision (axis 2).
    pub fn precisions(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((
            penalty_precision(self.k1(), self.penalty_ridge)?,
            penalty_precision(self.k2(), self.penalty_ridge)?,
        ))
    }
}

/// Basis matrices of both axes evaluated at a fixed set of grid points.
#[derive(Debug, Clone)]
pub struct GridBasis {
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
}

impl GridBasis {
    pub fn new(spec: &SplineSpec, points1: &[f64], points2: &[f64]) -> Result<Self> {
        Ok(Self {
            b1: basis_matrix(points1, &spec.axis1)?,
            b2: basis_matrix(points2, &spec.axis2)?,
        })
    }

    pub fn for_grid(spec: &SplineSpec, grid: &LogConcGrid) -> Result<Self> {
        Self::new(spec, &grid.logc1, &grid.logc2)
    }

    /// `B1 · C · B2ᵀ`: the spline term at every grid point.
    pub fn surface(&self, coef: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coef.nrows() != self.b1.ncols() || coef.ncols() != self.b2.ncols() {
            return Err(Error::dims(
                "spline coefficients",
                format!("{}x{}", self.b1.ncols(), self.b2.ncols()),
                format!("{}x{}", coef.nrows(), coef.ncols()),
            ));
        }
        Ok(&self.b1 * coef * self.b2.transpose())
    }
}

/// `tr(P_col · Cᵀ · P_row · C)`, the matrix-normal quadratic form, without
/// forming the Kronecker product.
pub fn matrix_normal_quadratic(
    coef: &DMatrix<f64>,
    row_precision: &DMatrix<f64>,
    col_precision: &DMatrix<f64>,
) -> f64 {
    let a = row_precision * coef; // K1 x K2
    let b = coef * col_precision; // K1 x K2
    a.component_mul(&b).sum()
}
