//! Observation model: 2LL monotherapy curves, the Bliss zero-interaction
//! surface, the link-constrained spline interaction term, the Gaussian
//! likelihood and the joint prior density.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_gamma;
use crate::splines::{matrix_normal_quadratic, GridBasis, SplineSpec};
use crate::surface::{SurfaceGrid, SurfaceKind};

/// Exponent arguments inside the link are clamped to this magnitude.
pub const EXP_CLAMP: f64 = 700.0;

/// Log10 units between the smallest nonzero concentration and the value
/// substituted for the zero concentration.
pub const ZERO_SUBSTITUTE_OFFSET: f64 = 2.0;

/// Replicated viability readings on a two-drug concentration grid.
///
/// Index 0 of each concentration axis is the zero (drug absent) level.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateDataset {
    pub conc1: Vec<f64>,
    pub conc2: Vec<f64>,
    n_rep: usize,
    /// Row-major over `(i, j, r)`.
    viability: Vec<f64>,
    pub drug_names: [String; 2],
}

impl PlateDataset {
    pub fn new(
        conc1: Vec<f64>,
        conc2: Vec<f64>,
        n_rep: usize,
        viability: Vec<f64>,
        drug_names: [String; 2],
    ) -> Result<Self> {
        check_axis(&conc1, "conc1")?;
        check_axis(&conc2, "conc2")?;
        if n_rep == 0 {
            return Err(Error::InvalidDataset("n_rep must be at least 1".into()));
        }
        let expected = conc1.len() * conc2.len() * n_rep;
        if viability.len() != expected {
            return Err(Error::InvalidDataset(format!(
                "expected {expected} viability readings, got {}",
                viability.len()
            )));
        }
        if let Some(k) = viability.iter().position(|v| !v.is_finite()) {
            let r = k % n_rep;
            let cell = k / n_rep;
            return Err(Error::InvalidDataset(format!(
                "non-finite viability at cell ({}, {}), replicate {}",
                cell / conc2.len(),
                cell % conc2.len(),
                r + 1
            )));
        }
        Ok(Self {
            conc1,
            conc2,
            n_rep,
            viability,
            drug_names,
        })
    }

    /// Builds a dataset from a closure `y(i, j, r)`.
    pub fn from_fn(
        conc1: Vec<f64>,
        conc2: Vec<f64>,
        n_rep: usize,
        drug_names: [String; 2],
        mut y: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut v = Vec::with_capacity(conc1.len() * conc2.len() * n_rep);
        for i in 0..conc1.len() {
            for j in 0..conc2.len() {
                for r in 0..n_rep {
                    v.push(y(i, j, r));
                }
            }
        }
        Self::new(conc1, conc2, n_rep, v, drug_names)
    }

    pub fn n1(&self) -> usize {
        self.conc1.len() - 1
    }

    pub fn n2(&self) -> usize {
        self.conc2.len() - 1
    }

    pub fn n_rep(&self) -> usize {
        self.n_rep
    }

    pub fn n_cells(&self) -> usize {
        self.conc1.len() * self.conc2.len()
    }

    pub fn n_obs(&self) -> usize {
        self.viability.len()
    }

    pub fn y(&self, i: usize, j: usize, r: usize) -> f64 {
        self.viability[(i * self.conc2.len() + j) * self.n_rep + r]
    }

    /// Replicates of one well.
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.conc2.len() + j) * self.n_rep;
        &self.viability[start..start + self.n_rep]
    }

    /// All readings in `(i, j, r)` order.
    pub fn readings(&self) -> &[f64] {
        &self.viability
    }

    pub fn cell_means(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.conc1.len(), self.conc2.len(), |i, j| {
            self.cell(i, j).iter().sum::<f64>() / self.n_rep as f64
        })
    }

    pub fn log_grid(&self) -> Result<LogConcGrid> {
        LogConcGrid::from_concentrations(&self.conc1, &self.conc2)
    }
}

fn check_axis(conc: &[f64], name: &str) -> Result<()> {
    if conc.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "{name} needs the zero level and at least one positive concentration"
        )));
    }
    if conc[0] != 0.0 {
        return Err(Error::InvalidDataset(format!(
            "{name}[0] must be exactly 0, got {}",
            conc[0]
        )));
    }
    if conc.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidDataset(format!("{name} has non-finite entries")));
    }
    if conc.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidDataset(format!(
            "{name} must be strictly increasing"
        )));
    }
    Ok(())
}

/// Log10 concentrations with the zero level replaced by a finite value two
/// decades below the smallest positive concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogConcGrid {
    pub logc1: Vec<f64>,
    pub logc2: Vec<f64>,
    pub zero_substitute_1: f64,
    pub zero_substitute_2: f64,
}

impl LogConcGrid {
    pub fn from_concentrations(conc1: &[f64], conc2: &[f64]) -> Result<Self> {
        check_axis(conc1, "conc1")?;
        check_axis(conc2, "conc2")?;
        let (logc1, z1) = substituted_log10(conc1);
        let (logc2, z2) = substituted_log10(conc2);
        Ok(Self {
            logc1,
            logc2,
            zero_substitute_1: z1,
            zero_substitute_2: z2,
        })
    }

    /// Grid from log10 axes whose first entry already stands in for zero.
    pub fn from_log10(logc1: Vec<f64>, logc2: Vec<f64>) -> Result<Self> {
        for (axis, name) in [(&logc1, "logc1"), (&logc2, "logc2")] {
            if axis.len() < 2 || axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{name} must hold >= 2 finite values")));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!("{name} must be strictly increasing")));
            }
        }
        Ok(Self {
            zero_substitute_1: logc1[0],
            zero_substitute_2: logc2[0],
            logc1,
            logc2,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.logc1.len(), self.logc2.len())
    }

    pub fn range1(&self) -> (f64, f64) {
        (self.logc1[0], *self.logc1.last().unwrap())
    }

    pub fn range2(&self) -> (f64, f64) {
        (self.logc2[0], *self.logc2.last().unwrap())
    }

    /// Covariates multiplying `γ1`, `γ2` in the linear predictor.
    pub fn linear_covariates(&self, scale: LinearScale) -> (Vec<f64>, Vec<f64>) {
        let raw = |axis: &[f64]| -> Vec<f64> {
            axis.iter()
                .enumerate()
                .map(|(i, &l)| if i == 0 { 0.0 } else { 10f64.powf(l) })
                .collect()
        };
        match scale {
            LinearScale::Log10 => (self.logc1.clone(), self.logc2.clone()),
            LinearScale::Raw => (raw(&self.logc1), raw(&self.logc2)),
        }
    }
}

fn substituted_log10(conc: &[f64]) -> (Vec<f64>, f64) {
    let sub = conc[1].log10() - ZERO_SUBSTITUTE_OFFSET;
    let mut out = Vec::with_capacity(conc.len());
    out.push(sub);
    out.extend(conc[1..].iter().map(|c| c.log10()));
    (out, sub)
}

/// Scale of the covariates in the linear part of the interaction predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearScale {
    /// Log10 concentrations (same scale as the spline domain).
    #[default]
    Log10,
    /// Natural concentrations, zero level kept at 0.
    Raw,
}

/// Parameters carrying a `N(0, σ²_φ)` prior with their own variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phi {
    M1,
    M2,
    Gamma0,
    Gamma1,
    Gamma2,
}

impl Phi {
    pub const ALL: [Phi; 5] = [Phi::M1, Phi::M2, Phi::Gamma0, Phi::Gamma1, Phi::Gamma2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Phi::M1 => "m1",
            Phi::M2 => "m2",
            Phi::Gamma0 => "gamma0",
            Phi::Gamma1 => "gamma1",
            Phi::Gamma2 => "gamma2",
        }
    }
}

/// One point of the sampler's parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub m1: f64,
    pub m2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub b1: f64,
    pub b2: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `K1 x K2` spline coefficients.
    pub c: DMatrix<f64>,
    /// Prior variances, indexed by [`Phi::index`].
    pub sigma2_phi: [f64; 5],
    pub sigma2_eps: f64,
}

impl ParameterState {
    /// Starting point: EC50s mid-range, unit slopes, null interaction,
    /// all variances `0.01`.
    pub fn initial(grid: &LogConcGrid, spline: &SplineSpec) -> Self {
        let (lo1, hi1) = grid.range1();
        let (lo2, hi2) = grid.range2();
        Self {
            m1: 0.5 * (lo1 + hi1),
            m2: 0.5 * (lo2 + hi2),
            lambda1: 1.0,
            lambda2: 1.0,
            b1: 1.0,
            b2: 1.0,
            gamma0: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
            c: DMatrix::zeros(spline.k1(), spline.k2()),
            sigma2_phi: [0.01; 5],
            sigma2_eps: 0.01,
        }
    }

    pub fn phi(&self, which: Phi) -> f64 {
        match which {
            Phi::M1 => self.m1,
            Phi::M2 => self.m2,
            Phi::Gamma0 => self.gamma0,
            Phi::Gamma1 => self.gamma1,
            Phi::Gamma2 => self.gamma2,
        }
    }

    pub fn phi_mut(&mut self, which: Phi) -> &mut f64 {
        match which {
            Phi::M1 => &mut self.m1,
            Phi::M2 => &mut self.m2,
            Phi::Gamma0 => &mut self.gamma0,
            Phi::Gamma1 => &mut self.gamma1,
            Phi::Gamma2 => &mut self.gamma2,
        }
    }

    pub fn sigma2(&self, which: Phi) -> f64 {
        self.sigma2_phi[which.index()]
    }

    pub fn validate(&self, spline: &SplineSpec) -> Result<()> {
        let positive = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("sigma2_eps", self.sigma2_eps),
        ];
        for (name, v) in positive
            .into_iter()
            .chain(Phi::ALL.iter().map(|p| (p.name(), self.sigma2(*p))))
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("m1", self.m1),
            ("m2", self.m2),
            ("gamma0", self.gamma0),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if self.c.shape() != (spline.k1(), spline.k2()) {
            return Err(Error::dims(
                "spline coefficients",
                format!("{}x{}", spline.k1(), spline.k2()),
                format!("{}x{}", self.c.nrows(), self.c.ncols()),
            ));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("spline coefficients must be finite"));
        }
        Ok(())
    }
}

/// `Gamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    /// Mean 1, variance 100.
    fn default() -> Self {
        Self {
            shape: 0.01,
            rate: 0.01,
        }
    }
}

impl GammaPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }
}

/// Hyper-prior shared by every variance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum VariancePrior {
    /// Half-Cauchy with scale `h`, placed on the standard deviation.
    HalfCauchy { scale: f64 },
    /// Inverse-gamma on the variance.
    InverseGamma { shape: f64, rate: f64 },
}

impl Default for VariancePrior {
    fn default() -> Self {
        VariancePrior::HalfCauchy { scale: 1.0 }
    }
}

impl VariancePrior {
    /// Log density in the prior's own parametrisation: of `σ` for the
    /// half-Cauchy, of `σ²` for the inverse-gamma.
    pub fn ln_pdf(&self, sigma2: f64) -> f64 {
        if sigma2 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            VariancePrior::HalfCauchy { scale } => {
                (2.0 * scale / PI).ln() - (sigma2 + scale * scale).ln()
            }
            VariancePrior::InverseGamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * sigma2.ln() - rate / sigma2
            }
        }
    }

    /// Log density of the variance `σ²` itself.
    pub fn ln_pdf_variance(&self, sigma2: f64) -> f64 {
        match self {
            VariancePrior::HalfCauchy { .. } => self.ln_pdf(sigma2) - (2.0 * sigma2.sqrt()).ln(),
            VariancePrior::InverseGamma { .. } => self.ln_pdf(sigma2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            VariancePrior::HalfCauchy { scale } => scale > 0.0 && scale.is_finite(),
            VariancePrior::InverseGamma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid variance prior {self:?}")))
        }
    }
}

/// Prior choices for every parameter group. The spline penalty ridge lives
/// in [`SplineSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub lambda1: GammaPrior,
    pub lambda2: GammaPrior,
    pub b1: GammaPrior,
    pub b2: GammaPrior,
    pub variance: VariancePrior,
}

impl PriorSpec {
    pub fn with_variance(variance: VariancePrior) -> Self {
        Self {
            variance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("b1", self.b1),
            ("b2", self.b2),
        ] {
            if !(g.shape > 0.0 && g.rate > 0.0 && g.shape.is_finite() && g.rate.is_finite()) {
                return Err(Error::invalid(format!("invalid Gamma prior for {name}: {g:?}")));
            }
        }
        self.variance.validate()
    }
}

/// `(1 + 10^{λ(logx - m)})^{-1}`.
pub fn log_logistic_2ll(logx: f64, m: f64, lambda: f64) -> Result<f64> {
    if !(logx.is_finite() && m.is_finite() && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "2LL needs finite inputs, got logx={logx}, m={m}, lambda={lambda}"
        )));
    }
    if lambda <= 0.0 {
        return Err(Error::invalid(format!("2LL slope must be positive, got {lambda}")));
    }
    Ok(two_ll(logx, m, lambda))
}

#[inline]
pub(crate) fn two_ll(logx: f64, m: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + (std::f64::consts::LN_10 * lambda * (logx - m)).exp())
}

#[inline]
fn clamped_exp(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// Link mapping the real line onto `(-p0, 1 - p0)`.
#[inline]
pub fn link_g(b: f64, p0: f64, b1: f64, b2: f64) -> f64 {
    -p0 / (1.0 + clamped_exp(b1 * b)) + (1.0 - p0) / (1.0 + clamped_exp(-b2 * b))
}

/// Derivative of [`link_g`] with respect to its first argument.
pub fn link_g_derivative(b: f64, p0: f64, b1: f64, b2: f64) -> f64 {
    let s1 = 1.0 / (1.0 + clamped_exp(-b1 * b));
    let s2 = 1.0 / (1.0 + clamped_exp(-b2 * b));
    p0 * b1 * s1 * (1.0 - s1) + (1.0 - p0) * b2 * s2 * (1.0 - s2)
}

/// Grid, spline basis and covariates needed to evaluate the response
/// surfaces for any parameter state.
#[derive(Debug, Clone)]
pub struct ResponseModel {
    pub grid: LogConcGrid,
    pub spline: SplineSpec,
    pub basis: GridBasis,
    pub linear_scale: LinearScale,
    cov1: Vec<f64>,
    cov2: Vec<f64>,
}

/// `p⁰`, `Δ` and `p` on the model grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Surfaces {
    pub p0: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl ResponseModel {
    pub fn new(grid: LogConcGrid, spline: SplineSpec, linear_scale: LinearScale) -> Result<Self> {
        let basis = GridBasis::for_grid(&spline, &grid)?;
        let (cov1, cov2) = grid.linear_covariates(linear_scale);
        Ok(Self {
            grid,
            spline,
            basis,
            linear_scale,
            cov1,
            cov2,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    /// Covariates of `γ1` and `γ2`.
    pub fn covariates(&self) -> (&[f64], &[f64]) {
        (&self.cov1, &self.cov2)
    }

    pub fn margin1(&self, m: f64, lambda: f64) -> Vec<f64> {
        self.grid.logc1.iter().map(|&x| two_ll(x, m, lambda)).collect()
    }

    pub fn margin2(&self, m: f64, lambda: f64) -> Vec<f64> {
        self.grid.logc2.iter().map(|&x| two_ll(x, m, lambda)).collect()
    }

    pub fn p0_from_margins(f1: &[f64], f2: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(f1.len(), f2.len(), |i, j| f1[i] * f2[j])
    }

    pub fn zero_interaction(&self, state: &ParameterState) -> DMatrix<f64> {
        Self::p0_from_margins(
            &self.margin1(state.m1, state.lambda1),
            &self.margin2(state.m2, state.lambda2),
        )
    }

    /// Spline term `B1 C B2ᵀ`.
    pub fn spline_term(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.basis.surface(c)
    }

    /// Linear predictor `B_ij = γ0 + γ1 x1i + γ2 x2j + spline_ij`.
    pub fn predictor_from_spline(&self, state: &ParameterState, spline: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(spline.nrows(), spline.ncols(), |i, j| {
            state.gamma0 + state.gamma1 * self.cov1[i] + state.gamma2 * self.cov2[j] + spline[(i, j)]
        })
    }

    pub fn predictor(&self, state: &ParameterState) -> Result<DMatrix<f64>> {
        let s = self.spline_term(&state.c)?;
        Ok(self.predictor_from_spline(state, &s))
    }

    /// `Δ_ij = g(B_ij) · 1{i > 0, j > 0}`.
    pub fn delta_from(p0: &DMatrix<f64>, predictor: &DMatrix<f64>, b1: f64, b2: f64) -> DMatrix<f64> {
        DMatrix::from_fn(p0.nrows(), p0.ncols(), |i, j| {
            if i == 0 || j == 0 {
                0.0
            } else {
                link_g(predictor[(i, j)], p0[(i, j)], b1, b2)
            }
        })
    }

    pub fn surfaces(&self, state: &ParameterState) -> Result<Surfaces> {
        let p0 = self.zero_interaction(state);
        let pred = self.predictor(state)?;
        let delta = Self::delta_from(&p0, &pred, state.b1, state.b2);
        let p = &p0 + &delta;
        Ok(Surfaces { p0, delta, p })
    }

    pub fn to_surface(&self, values: DMatrix<f64>, kind: SurfaceKind) -> SurfaceGrid {
        SurfaceGrid {
            values,
            axis1: self.grid.logc1.clone(),
            axis2: self.grid.logc2.clone(),
            kind,
        }
    }
}

pub fn zero_interaction_surface(grid: &LogConcGrid, state: &ParameterState) -> SurfaceGrid {
    let f1: Vec<f64> = grid.logc1.iter().map(|&x| two_ll(x, state.m1, state.lambda1)).collect();
    let f2: Vec<f64> = grid.logc2.iter().map(|&x| two_ll(x, state.m2, state.lambda2)).collect();
    SurfaceGrid {
        values: ResponseModel::p0_from_margins(&f1, &f2),
        axis1: grid.logc1.clone(),
        axis2: grid.logc2.clone(),
        kind: SurfaceKind::P0,
    }
}

pub fn interaction_surface(
    grid: &LogConcGrid,
    state: &ParameterState,
    spline: &SplineSpec,
    linear_scale: LinearScale,
) -> Result<SurfaceGrid> {
    let model = ResponseModel::new(grid.clone(), spline.clone(), linear_scale)?;
    let s = model.surfaces(state)?;
    Ok(model.to_surface(s.delta, SurfaceKind::Delta))
}

pub fn mean_surface(
    grid: &LogConcGrid,
    state: &ParameterState,
    spline: &SplineSpec,
    linear_scale: LinearScale,
) -> Result<SurfaceGrid> {
    let model = ResponseModel::new(grid.clone(), spline.clone(), linear_scale)?;
    let s = model.surfaces(state)?;
    Ok(model.to_surface(s.p, SurfaceKind::P))
}

/// `Σ_ijr (y_ijr - p_ij)²`.
pub fn residual_sum_of_squares(data: &PlateDataset, p: &DMatrix<f64>) -> f64 {
    let n2 = data.conc2.len();
    data.readings()
        .chunks_exact(data.n_rep())
        .enumerate()
        .map(|(cell, reps)| {
            let mu = p[(cell / n2, cell % n2)];
            reps.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>()
        })
        .sum()
}

/// Gaussian log-likelihood with common variance `sigma2_eps`.
pub fn log_likelihood(data: &PlateDataset, p: &DMatrix<f64>, sigma2_eps: f64) -> Result<f64> {
    if p.shape() != (data.conc1.len(), data.conc2.len()) {
        return Err(Error::dims(
            "mean surface",
            format!("{}x{}", data.conc1.len(), data.conc2.len()),
            format!("{}x{}", p.nrows(), p.ncols()),
        ));
    }
    if !(sigma2_eps > 0.0) {
        return Err(Error::invalid(format!("sigma2_eps must be positive, got {sigma2_eps}")));
    }
    Ok(gaussian_log_lik(data.n_obs(), residual_sum_of_squares(data, p), sigma2_eps))
}

#[inline]
pub(crate) fn gaussian_log_lik(n: usize, rss: f64, sigma2: f64) -> f64 {
    -0.5 * n as f64 * (2.0 * PI * sigma2).ln() - 0.5 * rss / sigma2
}

/// Log density of a single reading.
#[inline]
pub fn normal_ln_pdf(y: f64, mean: f64, sigma2: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma2).ln() - 0.5 * (y - mean) * (y - mean) / sigma2
}

/// Log of the matrix-normal density of `C` with row precision `P_row`
/// (`K1 x K1`) and column precision `P_col` (`K2 x K2`).
pub fn matrix_normal_ln_pdf(
    c: &DMatrix<f64>,
    row_precision: &DMatrix<f64>,
    col_precision: &DMatrix<f64>,
) -> Result<f64> {
    let (k1, k2) = c.shape();
    let logdet = |m: &DMatrix<f64>| -> Result<f64> {
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("precision matrix is not positive definite".into()))?;
        Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    };
    Ok(0.5 * k2 as f64 * logdet(row_precision)? + 0.5 * k1 as f64 * logdet(col_precision)?
        - 0.5 * (k1 * k2) as f64 * (2.0 * PI).ln()
        - 0.5 * matrix_normal_quadratic(c, row_precision, col_precision))
}

/// Joint log prior density of a state.
///
/// Variance terms use each hyper-prior's own parametrisation (density of `σ`
/// for the half-Cauchy, of `σ²` for the inverse-gamma).
pub fn log_prior(state: &ParameterState, priors: &PriorSpec, spline: &SplineSpec) -> Result<f64> {
    state.validate(spline)?;
    let mut total = 0.0;
    for phi in Phi::ALL {
        total += normal_ln_pdf(state.phi(phi), 0.0, state.sigma2(phi));
    }
    total += priors.lambda1.ln_pdf(state.lambda1);
    total += priors.lambda2.ln_pdf(state.lambda2);
    total += priors.b1.ln_pdf(state.b1);
    total += priors.b2.ln_pdf(state.b2);
    let (pr, pc) = spline.precisions()?;
    total += matrix_normal_ln_pdf(&state.c, &pr, &pc)?;
    for phi in Phi::ALL {
        total += priors.variance.ln_pdf(state.sigma2(phi));
    }
    total += priors.variance.ln_pdf(state.sigma2_eps);
    Ok(total)
}
