//! Posterior summaries: drug sensitivity scores, relative volumes under
//! surfaces, the bivariate EC50 set, LPML and surface MSE.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorChain;
use crate::model::{link_g, two_ll, LinearScale, ParameterState, PlateDataset, ResponseModel};
use crate::splines::basis_matrix;
use crate::surface::{SurfaceGrid, SurfaceKind};

pub const DEFAULT_ACTIVITY_THRESHOLD: f64 = 0.10;
pub const DEFAULT_EC50_DELTA: f64 = 0.01;
pub const DEFAULT_REFINE: usize = 100;

/// Samples per work unit in parallel reductions; fixed so results do not
/// depend on the thread count.
const CHUNK: usize = 64;

/// `∫ a(x) dx` with `a = 1 − f`, i.e. `log10(1 + 10^{λ(x−m)}) / λ`.
fn activity_antiderivative(x: f64, m: f64, lambda: f64) -> f64 {
    let u = lambda * (x - m);
    let softplus = if u > 0.0 {
        u + (-u * std::f64::consts::LN_10).exp().ln_1p() / std::f64::consts::LN_10
    } else {
        (u * std::f64::consts::LN_10).exp().ln_1p() / std::f64::consts::LN_10
    };
    softplus / lambda
}

/// Drug sensitivity score in `[0, 100]`: the area of the activity curve
/// `1 − f` above the threshold `t`, over `(1 − t)·R` with `R` the width of
/// `range`.
pub fn dss(m: f64, lambda: f64, range: (f64, f64), threshold: f64) -> Result<f64> {
    let (lo, hi) = range;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("DSS needs a non-degenerate range, got [{lo}, {hi}]")));
    }
    if !(lambda > 0.0) || !m.is_finite() || !lambda.is_finite() {
        return Err(Error::invalid(format!("DSS needs finite m and positive lambda, got ({m}, {lambda})")));
    }
    if !(threshold >= 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("activity threshold must lie in [0, 1), got {threshold}")));
    }
    // a(x) > t beyond this point.
    let x_t = if threshold == 0.0 {
        f64::NEG_INFINITY
    } else {
        m + (threshold / (1.0 - threshold)).log10() / lambda
    };
    let start = x_t.max(lo);
    if start >= hi {
        return Ok(0.0);
    }
    let area = activity_antiderivative(hi, m, lambda)
        - activity_antiderivative(start, m, lambda)
        - threshold * (hi - start);
    let r = hi - lo;
    Ok((100.0 * area.max(0.0) / ((1.0 - threshold) * r)).min(100.0))
}

/// Trapezoid integral along each axis in turn.
fn trapezoid_2d(values: &DMatrix<f64>, axis1: &[f64], axis2: &[f64]) -> f64 {
    let w = |axis: &[f64]| -> Vec<f64> {
        let n = axis.len();
        (0..n)
            .map(|k| {
                let left = if k > 0 { axis[k] - axis[k - 1] } else { 0.0 };
                let right = if k + 1 < n { axis[k + 1] - axis[k] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    };
    let (w1, w2) = (w(axis1), w(axis2));
    let mut total = 0.0;
    for (i, a) in w1.iter().enumerate() {
        let mut row = 0.0;
        for (j, b) in w2.iter().enumerate() {
            row += b * values[(i, j)];
        }
        total += a * row;
    }
    total
}

/// Relative volume under `surface` inside the box `[lower, upper]`.
pub fn rvus(surface: &SurfaceGrid, lower: f64, upper: f64) -> Result<f64> {
    if !(upper > lower) {
        return Err(Error::invalid(format!("rVUS bounds must satisfy upper > lower, got ({lower}, {upper})")));
    }
    if surface.axis1.len() < 2 || surface.axis2.len() < 2 {
        return Err(Error::invalid("rVUS needs at least two points per axis"));
    }
    let tol = 1e-12 * (upper - lower);
    for &v in surface.values.iter() {
        if !(v >= lower - tol && v <= upper + tol) {
            return Err(Error::OutOfBounds { value: v, lower, upper });
        }
    }
    let area = (surface.axis1.last().unwrap() - surface.axis1[0])
        * (surface.axis2.last().unwrap() - surface.axis2[0]);
    let shifted = surface.values.map(|v| v - lower);
    Ok(trapezoid_2d(&shifted, &surface.axis1, &surface.axis2) / ((upper - lower) * area))
}

/// rVUS of the zero-interaction surface and of the interaction split by sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvusDecomposition {
    pub p0: f64,
    pub abs_delta: f64,
    /// From `|min(0, Δ)|`, or `max(0, Δ)` when labels are swapped.
    pub delta_plus: f64,
    /// From `max(0, Δ)`, or `|min(0, Δ)|` when labels are swapped.
    pub delta_minus: f64,
    pub one_minus_p: f64,
}

/// `Δ` bounds are `(0, max_ij max(p⁰_ij, 1 − p⁰_ij))`.
pub fn rvus_decomposition(p0: &SurfaceGrid, delta: &SurfaceGrid, swap_labels: bool) -> Result<RvusDecomposition> {
    p0.same_shape(delta)?;
    let upper = p0.values.iter().map(|&v| v.max(1.0 - v)).fold(0.0, f64::max);
    let neg = delta.map(SurfaceKind::Other, |d| (-d).max(0.0));
    let pos = delta.map(SurfaceKind::Other, |d| d.max(0.0));
    let (plus, minus) = if swap_labels { (pos, neg) } else { (neg, pos) };
    let one_minus_p = SurfaceGrid {
        values: DMatrix::from_fn(p0.values.nrows(), p0.values.ncols(), |i, j| {
            1.0 - p0.values[(i, j)] - delta.values[(i, j)]
        }),
        axis1: p0.axis1.clone(),
        axis2: p0.axis2.clone(),
        kind: SurfaceKind::Other,
    };
    Ok(RvusDecomposition {
        p0: rvus(p0, 0.0, 1.0)?,
        abs_delta: rvus(&delta.map(SurfaceKind::Other, f64::abs), 0.0, upper)?,
        delta_plus: rvus(&plus, 0.0, upper)?,
        delta_minus: rvus(&minus, 0.0, upper)?,
        one_minus_p: rvus(&one_minus_p, 0.0, 1.0)?,
    })
}

/// Grid points whose value lies within `delta` of 0.5.
pub fn bi_ec50(p: &SurfaceGrid, delta: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (i, &x1) in p.axis1.iter().enumerate() {
        for (j, &x2) in p.axis2.iter().enumerate() {
            if (p.values[(i, j)] - 0.5).abs() <= delta {
                out.push((x1, x2));
            }
        }
    }
    out
}

/// Which observations enter the LPML sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpmlScope {
    #[default]
    AllWells,
    /// Only wells where both drugs are present.
    CombinationWells,
}

/// `Σ_i log CPO_i`, `CPO_i` the harmonic mean of the per-sample densities.
pub fn lpml(chain: &PosteriorChain, data: &PlateDataset, scope: LpmlScope) -> Result<f64> {
    let s = chain.len();
    if s == 0 {
        return Err(Error::invalid("LPML needs at least one posterior sample"));
    }
    if chain.n_obs() != data.n_obs() {
        return Err(Error::dims("observations", data.n_obs(), chain.n_obs()));
    }
    let n2 = data.conc2.len();
    let n_rep = data.n_rep();
    let mut total = 0.0;
    for k in 0..chain.n_obs() {
        let cell = k / n_rep;
        if scope == LpmlScope::CombinationWells && (cell / n2 == 0 || cell % n2 == 0) {
            continue;
        }
        let neg: Vec<f64> = (0..s).map(|q| -chain.log_density_row(q)[k]).collect();
        total += (s as f64).ln() - log_sum_exp(&neg);
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("LPML is not finite ({total})")));
    }
    Ok(total)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean squared cell difference.
pub fn mse_surface(estimate: &SurfaceGrid, truth: &SurfaceGrid) -> Result<f64> {
    estimate.same_shape(truth)?;
    let n = estimate.values.len() as f64;
    Ok(estimate
        .values
        .iter()
        .zip(truth.values.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Posterior means of `p⁰`, `Δ`, `p` on the data grid.
pub fn posterior_mean_surfaces(chain: &PosteriorChain, model: &ResponseModel) -> Result<[SurfaceGrid; 3]> {
    if chain.is_empty() {
        return Err(Error::invalid("empty chain"));
    }
    let (n1, n2) = model.shape();
    let parts = chain
        .samples
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<[DMatrix<f64>; 3]> {
            let mut acc = [DMatrix::zeros(n1, n2), DMatrix::zeros(n1, n2), DMatrix::zeros(n1, n2)];
            for st in chunk {
                let s = model.surfaces(st)?;
                acc[0] += s.p0;
                acc[1] += s.delta;
                acc[2] += s.p;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = [DMatrix::zeros(n1, n2), DMatrix::zeros(n1, n2), DMatrix::zeros(n1, n2)];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    let n = chain.len() as f64;
    let [p0, delta, p] = total;
    Ok([
        model.to_surface(p0 / n, SurfaceKind::P0),
        model.to_surface(delta / n, SurfaceKind::Delta),
        model.to_surface(p / n, SurfaceKind::P),
    ])
}

/// Evaluates the mean surface on an arbitrary grid of positive
/// concentrations, where every point carries the interaction term.
#[derive(Debug, Clone)]
pub struct RefinedEvaluator {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    basis1: DMatrix<f64>,
    basis2: DMatrix<f64>,
    cov1: Vec<f64>,
    cov2: Vec<f64>,
}

impl RefinedEvaluator {
    /// `n1 x n2` equally spaced points over the nonzero observed log range.
    pub fn over_observed_range(model: &ResponseModel, n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::invalid("refined grid needs at least 2 points per axis"));
        }
        let g = &model.grid;
        let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
        };
        let axis1 = lin(g.logc1[1], *g.logc1.last().unwrap(), n1);
        let axis2 = lin(g.logc2[1], *g.logc2.last().unwrap(), n2);
        Self::new(model, axis1, axis2)
    }

    pub fn new(model: &ResponseModel, axis1: Vec<f64>, axis2: Vec<f64>) -> Result<Self> {
        let basis1 = basis_matrix(&axis1, &model.spline.axis1)?;
        let basis2 = basis_matrix(&axis2, &model.spline.axis2)?;
        let cov = |axis: &[f64]| -> Vec<f64> {
            match model.linear_scale {
                LinearScale::Log10 => axis.to_vec(),
                LinearScale::Raw => axis.iter().map(|x| 10f64.powf(*x)).collect(),
            }
        };
        Ok(Self {
            cov1: cov(&axis1),
            cov2: cov(&axis2),
            axis1,
            axis2,
            basis1,
            basis2,
        })
    }

    pub fn mean_surface(&self, state: &ParameterState) -> DMatrix<f64> {
        let spline = &self.basis1 * &state.c * self.basis2.transpose();
        let f1: Vec<f64> = self.axis1.iter().map(|&x| two_ll(x, state.m1, state.lambda1)).collect();
        let f2: Vec<f64> = self.axis2.iter().map(|&x| two_ll(x, state.m2, state.lambda2)).collect();
        DMatrix::from_fn(self.axis1.len(), self.axis2.len(), |i, j| {
            let p0 = f1[i] * f2[j];
            let b = state.gamma0 + state.gamma1 * self.cov1[i] + state.gamma2 * self.cov2[j] + spline[(i, j)];
            p0 + link_g(b, p0, state.b1, state.b2)
        })
    }

    /// Average of the per-sample mean surfaces.
    pub fn posterior_mean(&self, samples: &[ParameterState]) -> Result<SurfaceGrid> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples to average"));
        }
        let (n1, n2) = (self.axis1.len(), self.axis2.len());
        let parts: Vec<DMatrix<f64>> = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = DMatrix::zeros(n1, n2);
                for st in chunk {
                    acc += self.mean_surface(st);
                }
                acc
            })
            .collect();
        let mut total = DMatrix::zeros(n1, n2);
        for p in parts {
            total += p;
        }
        SurfaceGrid::new(total / samples.len() as f64, self.axis1.clone(), self.axis2.clone(), SurfaceKind::P)
    }
}

/// Median and equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("interval needs finite samples".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            median: quantile_sorted(&v, 0.5),
            lower: quantile_sorted(&v, 0.025),
            upper: quantile_sorted(&v, 0.975),
        })
    }
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryOptions {
    pub activity_threshold: f64,
    pub ec50_delta: f64,
    pub refine1: usize,
    pub refine2: usize,
    pub swap_rvus_labels: bool,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            activity_threshold: DEFAULT_ACTIVITY_THRESHOLD,
            ec50_delta: DEFAULT_EC50_DELTA,
            refine1: DEFAULT_REFINE,
            refine2: DEFAULT_REFINE,
            swap_rvus_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvusSummary {
    pub p0: Interval,
    pub abs_delta: Interval,
    pub delta_plus: Interval,
    pub delta_minus: Interval,
    pub one_minus_p: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub n_samples: usize,
    pub dss1: Interval,
    pub dss2: Interval,
    pub rvus: RvusSummary,
    pub bi_ec50: Vec<(f64, f64)>,
    pub lpml: f64,
    pub lpml_combination: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<MseReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub delta: f64,
    pub p: f64,
}

/// Per-sample summaries of a chain.
pub fn summarize(
    chain: &PosteriorChain,
    data: &PlateDataset,
    model: &ResponseModel,
    options: &SummaryOptions,
) -> Result<SummaryReport> {
    if chain.is_empty() {
        return Err(Error::invalid("empty chain"));
    }
    let g = &model.grid;
    let range1 = (g.logc1[1], *g.logc1.last().unwrap());
    let range2 = (g.logc2[1], *g.logc2.last().unwrap());
    let t = options.activity_threshold;
    let dss1: Vec<f64> = chain.samples.iter().map(|s| dss(s.m1, s.lambda1, range1, t)).collect::<Result<_>>()?;
    let dss2: Vec<f64> = chain.samples.iter().map(|s| dss(s.m2, s.lambda2, range2, t)).collect::<Result<_>>()?;

    let decomp: Vec<RvusDecomposition> = chain
        .samples
        .par_iter()
        .map(|st| {
            let s = model.surfaces(st)?;
            rvus_decomposition(
                &model.to_surface(s.p0, SurfaceKind::P0),
                &model.to_surface(s.delta, SurfaceKind::Delta),
                options.swap_rvus_labels,
            )
        })
        .collect::<Result<_>>()?;
    let pick = |f: fn(&RvusDecomposition) -> f64| Interval::from_samples(&decomp.iter().map(f).collect::<Vec<_>>());
    let rvus = RvusSummary {
        p0: pick(|d| d.p0)?,
        abs_delta: pick(|d| d.abs_delta)?,
        delta_plus: pick(|d| d.delta_plus)?,
        delta_minus: pick(|d| d.delta_minus)?,
        one_minus_p: pick(|d| d.one_minus_p)?,
    };

    let refined = RefinedEvaluator::over_observed_range(model, options.refine1, options.refine2)?;
    let p_mean = refined.posterior_mean(&chain.samples)?;

    Ok(SummaryReport {
        n_samples: chain.len(),
        dss1: Interval::from_samples(&dss1)?,
        dss2: Interval::from_samples(&dss2)?,
        rvus,
        bi_ec50: bi_ec50(&p_mean, options.ec50_delta),
        lpml: lpml(chain, data, LpmlScope::AllWells)?,
        lpml_combination: lpml(chain, data, LpmlScope::CombinationWells)?,
        mse: None,
    })
}
