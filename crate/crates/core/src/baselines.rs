//! Classical reference surfaces built from monotherapy data: Bliss, highest
//! single agent, Loewe additivity and a simplified zero-interaction-potency
//! surface.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{two_ll, LogConcGrid, PlateDataset};
use crate::surface::{SurfaceGrid, SurfaceKind};

const LAMBDA_MIN: f64 = 1e-6;
const LAMBDA_MAX: f64 = 1e3;
const MAX_ITER: usize = 20_000;
const STEP_TOL: f64 = 1e-10;

/// Least-squares 2LL fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonoFit {
    pub m: f64,
    pub lambda: f64,
    pub rss: f64,
    /// The slope sits at its lower bound, i.e. the data carry no trend.
    pub lambda_at_boundary: bool,
    pub iterations: usize,
}

impl MonoFit {
    pub fn eval(&self, logx: f64) -> f64 {
        two_ll(logx, self.m, self.lambda)
    }

    /// `f^{-1}(y) = 10^{m + log10((1 − y)/y)/λ}`.
    pub fn inverse(&self, y: f64) -> f64 {
        10f64.powf(self.m + ((1.0 - y) / y).log10() / self.lambda)
    }
}

fn rss(points: &[(f64, f64)], m: f64, log_lambda: f64) -> f64 {
    let l = log_lambda.exp();
    points.iter().map(|&(x, y)| (y - two_ll(x, m, l)).powi(2)).sum()
}

/// Fits `(m, λ)` by grid search followed by a compass search on `(m, ln λ)`.
pub fn fit_2ll(points: &[(f64, f64)]) -> Result<MonoFit> {
    fit_2ll_with(points, MAX_ITER)
}

pub fn fit_2ll_with(points: &[(f64, f64)], max_iter: usize) -> Result<MonoFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("2LL fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("2LL fit needs finite points"));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1.0 {
        return Err(Error::invalid(format!("2LL fit needs points spanning a decade, got [{lo}, {hi}]")));
    }
    let (ll_lo, ll_hi) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
    let centre = 0.5 * (lo + hi);

    let mut best = (centre, 0.0, f64::INFINITY);
    let n_m = 81;
    let n_l = 41;
    for a in 0..n_m {
        let m = lo - 2.0 + (hi - lo + 4.0) * a as f64 / (n_m - 1) as f64;
        for b in 0..n_l {
            let ll = (1e-3f64).ln() + ((1e2f64).ln() - (1e-3f64).ln()) * b as f64 / (n_l - 1) as f64;
            let r = rss(points, m, ll);
            let closer = (m - centre).abs() < (best.0 - centre).abs();
            if r < best.2 || (r == best.2 && closer) {
                best = (m, ll, r);
            }
        }
    }

    let (mut m, mut ll, mut r) = best;
    let mut step = [0.5 * (hi - lo + 4.0) / (n_m - 1) as f64, 0.5];
    let mut it = 0;
    while step[0].max(step[1]) > STEP_TOL {
        if it >= max_iter {
            return Err(Error::NonConvergence {
                iterations: it,
                best_m: m,
                best_lambda: ll.exp(),
                best_rss: r,
            });
        }
        it += 1;
        let mut improved = false;
        for (dm, dl) in [(step[0], 0.0), (-step[0], 0.0), (0.0, step[1]), (0.0, -step[1])] {
            let cand_ll = (ll + dl).clamp(ll_lo, ll_hi);
            let cand = rss(points, m + dm, cand_ll);
            if cand < r {
                m += dm;
                ll = cand_ll;
                r = cand;
                improved = true;
                break;
            }
        }
        if !improved {
            step[0] *= 0.5;
            step[1] *= 0.5;
        }
    }
    Ok(MonoFit {
        m,
        lambda: ll.exp(),
        rss: r,
        lambda_at_boundary: ll <= ll_lo + 1e-9,
        iterations: it,
    })
}

/// Replicate readings along the border of each drug: `(log10 c, y)` pairs.
pub fn monotherapy_points(data: &PlateDataset) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let g = data.log_grid()?;
    let mut p1 = Vec::new();
    for (i, &x) in g.logc1.iter().enumerate() {
        p1.extend(data.cell(i, 0).iter().map(|&y| (x, y)));
    }
    let mut p2 = Vec::new();
    for (j, &x) in g.logc2.iter().enumerate() {
        p2.extend(data.cell(0, j).iter().map(|&y| (x, y)));
    }
    Ok((p1, p2))
}

fn on_grid(grid: &LogConcGrid, f: impl Fn(usize, usize) -> f64) -> SurfaceGrid {
    let (n1, n2) = grid.shape();
    SurfaceGrid {
        values: DMatrix::from_fn(n1, n2, f),
        axis1: grid.logc1.clone(),
        axis2: grid.logc2.clone(),
        kind: SurfaceKind::Other,
    }
}

pub fn bliss_surface(fit1: &MonoFit, fit2: &MonoFit, grid: &LogConcGrid) -> SurfaceGrid {
    on_grid(grid, |i, j| fit1.eval(grid.logc1[i]) * fit2.eval(grid.logc2[j]))
}

/// `max(y1_i, y2_j)` of the border means; border wells keep their own mean.
pub fn hsa_surface(y1: &[f64], y2: &[f64], grid: &LogConcGrid) -> Result<SurfaceGrid> {
    let (n1, n2) = grid.shape();
    if y1.len() != n1 || y2.len() != n2 {
        return Err(Error::dims("margins", format!("{n1} and {n2}"), format!("{} and {}", y1.len(), y2.len())));
    }
    Ok(on_grid(grid, |i, j| match (i, j) {
        (_, 0) => y1[i],
        (0, _) => y2[j],
        _ => y1[i].max(y2[j]),
    }))
}

/// Loewe solution at one well, by bisection on `u = log10((1 − y)/y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoeweCell {
    pub y: f64,
    /// `|x1/f1⁻¹(y) + x2/f2⁻¹(y) − 1|` at the returned value.
    pub residual: f64,
    /// No sign change on the bracket; `y` is the nearest bracket end.
    pub at_bracket: bool,
}

pub const LOEWE_U_BRACKET: f64 = 9.0;

/// Solves `x1/f1⁻¹(y) + x2/f2⁻¹(y) = 1` for natural concentrations
/// `x1, x2 > 0`.
pub fn loewe_cell(x1: f64, x2: f64, fit1: &MonoFit, fit2: &MonoFit) -> LoeweCell {
    // Combination index as a function of u; increasing in y, so decreasing in u.
    let index = |u: f64| {
        x1 * 10f64.powf(-fit1.m - u / fit1.lambda) + x2 * 10f64.powf(-fit2.m - u / fit2.lambda)
    };
    let y_of = |u: f64| 1.0 / (1.0 + 10f64.powf(u));
    let (mut a, mut b) = (-LOEWE_U_BRACKET, LOEWE_U_BRACKET);
    let (ia, ib) = (index(a) - 1.0, index(b) - 1.0);
    if ia < 0.0 {
        return LoeweCell { y: y_of(a), residual: ia.abs(), at_bracket: true };
    }
    if ib > 0.0 {
        return LoeweCell { y: y_of(b), residual: ib.abs(), at_bracket: true };
    }
    let mut mid = 0.5 * (a + b);
    let mut r = index(mid) - 1.0;
    while r.abs() > 1e-10 && b - a > 1e-12 {
        if r > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        mid = 0.5 * (a + b);
        r = index(mid) - 1.0;
    }
    LoeweCell { y: y_of(mid), residual: r.abs(), at_bracket: false }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoeweSurface {
    pub surface: SurfaceGrid,
    /// Wells whose root was not bracketed.
    pub flagged: Vec<(usize, usize)>,
    pub max_residual: f64,
}

pub fn loewe_surface(fit1: &MonoFit, fit2: &MonoFit, grid: &LogConcGrid) -> LoeweSurface {
    let (n1, n2) = grid.shape();
    let mut flagged = Vec::new();
    let mut max_residual: f64 = 0.0;
    let mut values = DMatrix::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            values[(i, j)] = match (i, j) {
                (0, 0) => 1.0,
                (_, 0) => fit1.eval(grid.logc1[i]),
                (0, _) => fit2.eval(grid.logc2[j]),
                _ => {
                    let c = loewe_cell(10f64.powf(grid.logc1[i]), 10f64.powf(grid.logc2[j]), fit1, fit2);
                    if c.at_bracket {
                        flagged.push((i, j));
                    } else {
                        max_residual = max_residual.max(c.residual);
                    }
                    c.y
                }
            };
        }
    }
    LoeweSurface {
        surface: SurfaceGrid { values, axis1: grid.logc1.clone(), axis2: grid.logc2.clone(), kind: SurfaceKind::Other },
        flagged,
        max_residual,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZipSurface {
    /// Average of the row-wise and column-wise conditional fits.
    pub smoothed: SurfaceGrid,
    pub bliss: SurfaceGrid,
    /// Rows (`(i, 0)`) or columns (`(0, j)`) whose conditional fit failed and
    /// fell back to the Bliss value.
    pub fallbacks: Vec<(usize, usize)>,
}

impl ZipSurface {
    pub fn delta(&self) -> SurfaceGrid {
        let mut d = self.smoothed.clone();
        d.values -= &self.bliss.values;
        for i in 0..d.values.nrows() {
            for j in 0..d.values.ncols() {
                if i == 0 || j == 0 {
                    d.values[(i, j)] = 0.0;
                }
            }
        }
        d.kind = SurfaceKind::Delta;
        d
    }
}

/// Simplified zero-interaction potency: each row of the plate (drug 1
/// fixed) is divided by the drug 1 effect and refitted as a 2LL curve in
/// drug 2, and symmetrically for columns; the two fitted surfaces are
/// averaged.
pub fn zip_surface(fit1: &MonoFit, fit2: &MonoFit, data: &PlateDataset) -> Result<ZipSurface> {
    let grid = data.log_grid()?;
    let (n1, n2) = grid.shape();
    let bliss = bliss_surface(fit1, fit2, &grid);
    let means = data.cell_means();
    let mut fallbacks = Vec::new();
    let mut rows = bliss.values.clone();
    let mut cols = bliss.values.clone();

    for i in 1..n1 {
        let f1 = fit1.eval(grid.logc1[i]);
        let pts: Vec<(f64, f64)> = (0..n2).map(|j| (grid.logc2[j], means[(i, j)] / f1)).collect();
        match fit_2ll(&pts) {
            Ok(f) if f.m.is_finite() => {
                for j in 1..n2 {
                    rows[(i, j)] = f1 * f.eval(grid.logc2[j]);
                }
            }
            _ => fallbacks.push((i, 0)),
        }
    }
    for j in 1..n2 {
        let f2 = fit2.eval(grid.logc2[j]);
        let pts: Vec<(f64, f64)> = (0..n1).map(|i| (grid.logc1[i], means[(i, j)] / f2)).collect();
        match fit_2ll(&pts) {
            Ok(f) if f.m.is_finite() => {
                for i in 1..n1 {
                    cols[(i, j)] = f2 * f.eval(grid.logc1[i]);
                }
            }
            _ => fallbacks.push((0, j)),
        }
    }
    let smoothed = SurfaceGrid { values: (rows + cols) * 0.5, ..bliss.clone() };
    Ok(ZipSurface { smoothed, bliss, fallbacks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Bliss,
    Hsa,
    Loewe,
    Zip,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 4] = [BaselineMethod::Bliss, BaselineMethod::Hsa, BaselineMethod::Loewe, BaselineMethod::Zip];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Bliss => "bliss",
            BaselineMethod::Hsa => "hsa",
            BaselineMethod::Loewe => "loewe",
            BaselineMethod::Zip => "zip",
        }
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline method {s:?} (bliss | hsa | loewe | zip)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub fit1: MonoFit,
    pub fit2: MonoFit,
    /// Zero-interaction reference the interaction is measured against.
    pub reference: SurfaceGrid,
    /// Interaction estimate; zero on wells with a missing drug.
    pub delta: SurfaceGrid,
    /// Wells where the method fell back or hit a bracket end.
    pub flagged: Vec<(usize, usize)>,
}

/// Reference surface and interaction estimate `Δ̂ = ȳ − reference`
/// (for ZIP, smoothed minus Bliss).
pub fn baseline(method: BaselineMethod, data: &PlateDataset) -> Result<BaselineResult> {
    let grid = data.log_grid()?;
    let (p1, p2) = monotherapy_points(data)?;
    let fit1 = fit_2ll(&p1)?;
    let fit2 = fit_2ll(&p2)?;
    let means = data.cell_means();
    let (reference, flagged, zip_delta) = match method {
        BaselineMethod::Bliss => (bliss_surface(&fit1, &fit2, &grid), Vec::new(), None),
        BaselineMethod::Hsa => {
            let y1: Vec<f64> = (0..means.nrows()).map(|i| means[(i, 0)]).collect();
            let y2: Vec<f64> = (0..means.ncols()).map(|j| means[(0, j)]).collect();
            (hsa_surface(&y1, &y2, &grid)?, Vec::new(), None)
        }
        BaselineMethod::Loewe => {
            let l = loewe_surface(&fit1, &fit2, &grid);
            (l.surface, l.flagged, None)
        }
        BaselineMethod::Zip => {
            let z = zip_surface(&fit1, &fit2, data)?;
            let d = z.delta();
            (z.bliss, z.fallbacks, Some(d))
        }
    };
    let delta = zip_delta.unwrap_or_else(|| SurfaceGrid {
        values: DMatrix::from_fn(means.nrows(), means.ncols(), |i, j| {
            if i == 0 || j == 0 {
                0.0
            } else {
                means[(i, j)] - reference.values[(i, j)]
            }
        }),
        axis1: grid.logc1.clone(),
        axis2: grid.logc2.clone(),
        kind: SurfaceKind::Delta,
    });
    Ok(BaselineResult { method, fit1, fit2, reference, delta, flagged })
}

/// Runs `method` on each replicate plate separately and averages the
/// reference and interaction surfaces. Monotherapy fits of the first
/// replicate are reported.
pub fn baseline_replicate_averaged(method: BaselineMethod, data: &PlateDataset) -> Result<BaselineResult> {
    let n = data.n_rep();
    let mut acc: Option<BaselineResult> = None;
    for r in 0..n {
        let plate = PlateDataset::from_fn(
            data.conc1.clone(),
            data.conc2.clone(),
            1,
            data.drug_names.clone(),
            |i, j, _| data.y(i, j, r),
        )?;
        let b = baseline(method, &plate)?;
        acc = Some(match acc {
            None => b,
            Some(mut a) => {
                a.reference.values += &b.reference.values;
                a.delta.values += &b.delta.values;
                a.flagged.extend(b.flagged);
                a
            }
        });
    }
    let mut a = acc.expect("n_rep >= 1");
    a.reference.values /= n as f64;
    a.delta.values /= n as f64;
    a.flagged.sort_unstable();
    a.flagged.dedup();
    Ok(a)
}
