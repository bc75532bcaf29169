//! Adaptive Metropolis-within-Gibbs sampler.
//!
//! Each iteration sweeps the blocks in [`Block::SWEEP`] order. Real
//! parameters take Gaussian random-walk steps on the identity scale, positive
//! ones on the log scale. Before `adapt_start` every block uses its fixed
//! initial scale; afterwards proposals follow the running covariance of the
//! block's own history, scaled by a Robbins–Monro factor.

mod adaptive;
mod chain;
mod step;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adaptive::AdaptiveState;
pub use chain::{BlockAcceptance, PosteriorChain};
pub use step::{mh_step_block, mh_step_scalar, StepOutcome, Transform};

use crate::error::{Error, Result};
use crate::model::{
    gaussian_log_lik, link_g, log_prior, normal_ln_pdf, two_ll, GammaPrior, LinearScale,
    ParameterState, Phi, PlateDataset, PriorSpec, ResponseModel, VariancePrior,
};
use crate::splines::{matrix_normal_quadratic, SplineSpec};

/// Gibbs blocks in sweep order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    M1,
    M2,
    Lambda1,
    Lambda2,
    /// `(b1, b2)` jointly.
    B,
    Gamma0,
    Gamma1,
    Gamma2,
    /// All spline coefficients jointly.
    C,
    Sigma2M1,
    Sigma2M2,
    Sigma2Gamma0,
    Sigma2Gamma1,
    Sigma2Gamma2,
    Sigma2Eps,
}

impl Block {
    pub const SWEEP: [Block; 15] = [
        Block::M1,
        Block::M2,
        Block::Lambda1,
        Block::Lambda2,
        Block::B,
        Block::Gamma0,
        Block::Gamma1,
        Block::Gamma2,
        Block::C,
        Block::Sigma2M1,
        Block::Sigma2M2,
        Block::Sigma2Gamma0,
        Block::Sigma2Gamma1,
        Block::Sigma2Gamma2,
        Block::Sigma2Eps,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::M1 => "m1",
            Block::M2 => "m2",
            Block::Lambda1 => "lambda1",
            Block::Lambda2 => "lambda2",
            Block::B => "b",
            Block::Gamma0 => "gamma0",
            Block::Gamma1 => "gamma1",
            Block::Gamma2 => "gamma2",
            Block::C => "c",
            Block::Sigma2M1 => "sigma2_m1",
            Block::Sigma2M2 => "sigma2_m2",
            Block::Sigma2Gamma0 => "sigma2_gamma0",
            Block::Sigma2Gamma1 => "sigma2_gamma1",
            Block::Sigma2Gamma2 => "sigma2_gamma2",
            Block::Sigma2Eps => "sigma2_eps",
        }
    }

    pub fn dim(self, spline: &SplineSpec) -> usize {
        match self {
            Block::B => 2,
            Block::C => spline.k1() * spline.k2(),
            _ => 1,
        }
    }

    pub fn transform(self) -> Transform {
        match self {
            Block::M1 | Block::M2 | Block::Gamma0 | Block::Gamma1 | Block::Gamma2 | Block::C => {
                Transform::Identity
            }
            _ => Transform::Log,
        }
    }

    /// The mean parameter whose prior variance this block updates.
    pub fn variance_of(self) -> Option<Phi> {
        match self {
            Block::Sigma2M1 => Some(Phi::M1),
            Block::Sigma2M2 => Some(Phi::M2),
            Block::Sigma2Gamma0 => Some(Phi::Gamma0),
            Block::Sigma2Gamma1 => Some(Phi::Gamma1),
            Block::Sigma2Gamma2 => Some(Phi::Gamma2),
            _ => None,
        }
    }

    pub fn is_variance(self) -> bool {
        self.variance_of().is_some() || self == Block::Sigma2Eps
    }

    /// Current block value, in the original parametrisation.
    pub fn values(self, state: &ParameterState) -> Vec<f64> {
        match self {
            Block::B => vec![state.b1, state.b2],
            Block::C => state.c.as_slice().to_vec(),
            _ => vec![self.scalar(state)],
        }
    }

    fn scalar(self, s: &ParameterState) -> f64 {
        match self {
            Block::M1 => s.m1,
            Block::M2 => s.m2,
            Block::Lambda1 => s.lambda1,
            Block::Lambda2 => s.lambda2,
            Block::Gamma0 => s.gamma0,
            Block::Gamma1 => s.gamma1,
            Block::Gamma2 => s.gamma2,
            Block::Sigma2Eps => s.sigma2_eps,
            Block::B | Block::C => unreachable!("multivariate block"),
            b => s.sigma2(b.variance_of().unwrap()),
        }
    }

    /// Writes `values` (original parametrisation) into `state`.
    pub fn set(self, state: &mut ParameterState, values: &[f64]) {
        match self {
            Block::M1 => state.m1 = values[0],
            Block::M2 => state.m2 = values[0],
            Block::Lambda1 => state.lambda1 = values[0],
            Block::Lambda2 => state.lambda2 = values[0],
            Block::B => {
                state.b1 = values[0];
                state.b2 = values[1];
            }
            Block::Gamma0 => state.gamma0 = values[0],
            Block::Gamma1 => state.gamma1 = values[0],
            Block::Gamma2 => state.gamma2 = values[0],
            Block::C => state.c.as_mut_slice().copy_from_slice(values),
            Block::Sigma2Eps => state.sigma2_eps = values[0],
            b => state.sigma2_phi[b.variance_of().unwrap().index()] = values[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Iteration `g0` after which proposals adapt.
    pub adapt_start: usize,
    pub seed: u64,
    pub target_scalar: f64,
    pub target_block: f64,
    pub adapt_jitter: f64,
    /// Random-walk sd (transformed scale) used before adaptation.
    pub initial_scale: f64,
    /// Per-block overrides of `initial_scale`.
    pub block_scales: BTreeMap<Block, f64>,
    pub linear_scale: LinearScale,
    /// Drop the likelihood; the chain then targets the prior.
    pub prior_only: bool,
    /// Blocks held at their initial value.
    pub fixed_blocks: Vec<Block>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 100_000,
            burn_in: 50_000,
            thin: 10,
            adapt_start: 1_000,
            seed: 0,
            target_scalar: 0.44,
            target_block: 0.234,
            adapt_jitter: 1e-6,
            initial_scale: 0.1,
            block_scales: BTreeMap::new(),
            linear_scale: LinearScale::Log10,
            prior_only: false,
            fixed_blocks: Vec::new(),
        }
    }
}

impl ChainConfig {
    /// Default schedule shrunk or stretched to `n_iter`, burn-in half of it.
    pub fn with_iterations(n_iter: usize) -> Self {
        Self {
            n_iter,
            burn_in: n_iter / 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::invalid("n_iter must be positive"));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::invalid(format!(
                "burn_in ({}) must be below n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if self.burn_in > 0 && self.adapt_start >= self.burn_in {
            return Err(Error::invalid(format!(
                "adapt_start ({}) must be below burn_in ({})",
                self.adapt_start, self.burn_in
            )));
        }
        for (name, t) in [("target_scalar", self.target_scalar), ("target_block", self.target_block)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if !(self.adapt_jitter > 0.0 && self.adapt_jitter.is_finite()) {
            return Err(Error::invalid("adapt_jitter must be positive"));
        }
        for s in std::iter::once(&self.initial_scale).chain(self.block_scales.values()) {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("proposal scales must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Number of retained samples.
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    fn keeps(&self, g: usize) -> bool {
        g > self.burn_in && (g - self.burn_in) % self.thin == 0
    }

    fn target(&self, block: Block) -> f64 {
        if matches!(block, Block::B | Block::C) {
            self.target_block
        } else {
            self.target_scalar
        }
    }

    fn initial_scale_of(&self, block: Block) -> f64 {
        self.block_scales.get(&block).copied().unwrap_or(self.initial_scale)
    }
}

/// Quantities of a state that proposals reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCache {
    pub spline_term: DMatrix<f64>,
    pub rss: f64,
    /// `tr(P_col Cᵀ P_row C)`.
    pub quadratic: f64,
}

/// Data, model and priors of one fit: the target density of the sampler.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    pub data: &'a PlateDataset,
    pub model: ResponseModel,
    pub priors: PriorSpec,
    pub row_precision: DMatrix<f64>,
    pub col_precision: DMatrix<f64>,
    pub prior_only: bool,
}

impl<'a> Posterior<'a> {
    pub fn new(
        data: &'a PlateDataset,
        priors: PriorSpec,
        spline: &SplineSpec,
        linear_scale: LinearScale,
        prior_only: bool,
    ) -> Result<Self> {
        priors.validate()?;
        let grid = data.log_grid()?;
        let model = ResponseModel::new(grid, spline.clone(), linear_scale)?;
        let (row_precision, col_precision) = spline.precisions()?;
        Ok(Self {
            data,
            model,
            priors,
            row_precision,
            col_precision,
            prior_only,
        })
    }

    /// Observations entering the likelihood.
    pub fn n_obs(&self) -> usize {
        if self.prior_only {
            0
        } else {
            self.data.n_obs()
        }
    }

    pub fn rss(&self, state: &ParameterState, spline_term: &DMatrix<f64>) -> f64 {
        if self.prior_only {
            return 0.0;
        }
        let grid = &self.model.grid;
        let (cov1, cov2) = self.model.covariates();
        let f2: Vec<f64> = grid.logc2.iter().map(|&x| two_ll(x, state.m2, state.lambda2)).collect();
        let mut rss = 0.0;
        for (i, &x1) in grid.logc1.iter().enumerate() {
            let f1 = two_ll(x1, state.m1, state.lambda1);
            let lin = state.gamma0 + state.gamma1 * cov1[i];
            for (j, &f2j) in f2.iter().enumerate() {
                let p0 = f1 * f2j;
                let p = if i == 0 || j == 0 {
                    p0
                } else {
                    let b = lin + state.gamma2 * cov2[j] + spline_term[(i, j)];
                    p0 + link_g(b, p0, state.b1, state.b2)
                };
                rss += self.data.cell(i, j).iter().map(|y| (y - p) * (y - p)).sum::<f64>();
            }
        }
        rss
    }

    pub fn cache(&self, state: &ParameterState) -> Result<StateCache> {
        let spline_term = self.model.spline_term(&state.c)?;
        let rss = self.rss(state, &spline_term);
        let quadratic = matrix_normal_quadratic(&state.c, &self.row_precision, &self.col_precision);
        Ok(StateCache {
            spline_term,
            rss,
            quadratic,
        })
    }

    pub fn log_likelihood(&self, state: &ParameterState, cache: &StateCache) -> f64 {
        gaussian_log_lik(self.n_obs(), cache.rss, state.sigma2_eps)
    }

    /// Log prior plus log-likelihood, evaluated from scratch.
    pub fn log_density(&self, state: &ParameterState) -> Result<f64> {
        let lp = log_prior(state, &self.priors, &self.model.spline)?;
        let cache = self.cache(state)?;
        Ok(lp + self.log_likelihood(state, &cache))
    }

    /// `ln π(proposed) − ln π(current)` for a move of one non-variance block,
    /// `π` the full conditional in the original parametrisation.
    pub fn block_log_ratio(
        &self,
        block: Block,
        current: &ParameterState,
        cache: &StateCache,
        proposed: &ParameterState,
    ) -> (f64, StateCache) {
        let mut next = StateCache {
            spline_term: DMatrix::zeros(0, 0),
            rss: cache.rss,
            quadratic: cache.quadratic,
        };
        let prior = match block {
            Block::C => {
                next.quadratic =
                    matrix_normal_quadratic(&proposed.c, &self.row_precision, &self.col_precision);
                -0.5 * (next.quadratic - cache.quadratic)
            }
            Block::M1 | Block::M2 | Block::Gamma0 | Block::Gamma1 | Block::Gamma2 => {
                let phi = match block {
                    Block::M1 => Phi::M1,
                    Block::M2 => Phi::M2,
                    Block::Gamma0 => Phi::Gamma0,
                    Block::Gamma1 => Phi::Gamma1,
                    _ => Phi::Gamma2,
                };
                let (c, p) = (current.phi(phi), proposed.phi(phi));
                -(p * p - c * c) / (2.0 * current.sigma2(phi))
            }
            Block::Lambda1 => gamma_ratio(&self.priors.lambda1, current.lambda1, proposed.lambda1),
            Block::Lambda2 => gamma_ratio(&self.priors.lambda2, current.lambda2, proposed.lambda2),
            Block::B => {
                gamma_ratio(&self.priors.b1, current.b1, proposed.b1)
                    + gamma_ratio(&self.priors.b2, current.b2, proposed.b2)
            }
            _ => panic!("block_log_ratio called for variance block {block:?}"),
        };
        next.spline_term = if block == Block::C && !self.prior_only {
            match self.model.spline_term(&proposed.c) {
                Ok(s) => s,
                Err(_) => return (f64::NAN, next),
            }
        } else {
            cache.spline_term.clone()
        };
        if self.prior_only {
            return (prior, next);
        }
        next.rss = self.rss(proposed, &next.spline_term);
        let dll = -(next.rss - cache.rss) / (2.0 * current.sigma2_eps);
        (prior + dll, next)
    }
}

/// Gamma prior ratio in the original parametrisation.
fn gamma_ratio(prior: &GammaPrior, current: f64, proposed: f64) -> f64 {
    (prior.shape - 1.0) * (proposed / current).ln() - prior.rate * (proposed - current)
}

/// One update of a variance given `n` Gaussian terms with sum of squares
/// `sum_sq`: a conjugate draw under the inverse-gamma prior, a log-scale
/// random walk with sd `scale` under the half-Cauchy.
pub fn update_variance<R: Rng + ?Sized>(
    current: f64,
    sum_sq: f64,
    n: usize,
    prior: &VariancePrior,
    scale: f64,
    rng: &mut R,
) -> StepOutcome<f64> {
    match *prior {
        VariancePrior::InverseGamma { shape, rate } => {
            let value = inverse_gamma_draw(shape + 0.5 * n as f64, rate + 0.5 * sum_sq, rng);
            StepOutcome {
                value,
                accepted: true,
                accept_prob: 1.0,
                auto_rejected: false,
            }
        }
        VariancePrior::HalfCauchy { .. } => {
            mh_step_scalar(current, Transform::Log, scale, rng, |proposed| {
                -0.5 * n as f64 * (proposed / current).ln() - 0.5 * sum_sq * (1.0 / proposed - 1.0 / current)
                    + prior.ln_pdf_variance(proposed)
                    - prior.ln_pdf_variance(current)
            })
        }
    }
}

/// Draw from `IG(shape, rate)`.
pub fn inverse_gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("inverse-gamma parameters are positive");
    1.0 / g.sample(rng)
}

/// Runs one chain from the default initial state on stream 0.
pub fn run_chain(
    data: &PlateDataset,
    priors: &PriorSpec,
    spline: &SplineSpec,
    config: &ChainConfig,
) -> Result<PosteriorChain> {
    let init = ParameterState::initial(&data.log_grid()?, spline);
    run_chain_from(data, priors, spline, config, init, 0)
}

/// Runs `n_chains` independent chains in parallel on RNG streams
/// `0..n_chains` of the configured seed and concatenates them in stream order.
pub fn run_chains(
    data: &PlateDataset,
    priors: &PriorSpec,
    spline: &SplineSpec,
    config: &ChainConfig,
    n_chains: usize,
) -> Result<PosteriorChain> {
    if n_chains == 0 {
        return Err(Error::invalid("n_chains must be at least 1"));
    }
    let init = ParameterState::initial(&data.log_grid()?, spline);
    let chains = (0..n_chains as u64)
        .into_par_iter()
        .map(|k| run_chain_from(data, priors, spline, config, init.clone(), k))
        .collect::<Result<Vec<_>>>()?;
    PosteriorChain::merge(chains)
}

/// Runs one chain from `init` on RNG stream `stream`.
pub fn run_chain_from(
    data: &PlateDataset,
    priors: &PriorSpec,
    spline: &SplineSpec,
    config: &ChainConfig,
    init: ParameterState,
    stream: u64,
) -> Result<PosteriorChain> {
    config.validate()?;
    init.validate(spline)?;
    let post = Posterior::new(data, *priors, spline, config.linear_scale, config.prior_only)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let mut state = init;
    let mut cache = post.cache(&state)?;
    let lp0 = post.log_density(&state)?;
    if !lp0.is_finite() {
        return Err(Error::Initialization(format!(
            "log posterior at the initial state is {lp0} (rss = {}, sigma2_eps = {})",
            cache.rss, state.sigma2_eps
        )));
    }

    let mut adapt: Vec<AdaptiveState> = Block::SWEEP
        .iter()
        .map(|b| AdaptiveState::new(b.dim(spline), config.initial_scale_of(*b)))
        .collect();
    let active: Vec<Block> = Block::SWEEP
        .into_iter()
        .filter(|b| !config.fixed_blocks.contains(b))
        .collect();

    let n_obs = data.n_obs();
    let mut samples = Vec::with_capacity(config.n_retained());
    let mut log_density = Vec::with_capacity(config.n_retained() * n_obs);

    for g in 1..=config.n_iter {
        for &block in &active {
            let k = block.index();
            let transform = block.transform();
            let out = if block.is_variance() {
                let (sum_sq, n) = match block.variance_of() {
                    Some(phi) => (state.phi(phi).powi(2), 1),
                    None => (cache.rss, post.n_obs()),
                };
                let sd = adapt[k].proposal_cholesky(g, config.adapt_start, config.adapt_jitter)[(0, 0)];
                let o = update_variance(block.scalar(&state), sum_sq, n, &post.priors.variance, sd, &mut rng);
                StepOutcome {
                    value: vec![o.value],
                    accepted: o.accepted,
                    accept_prob: o.accept_prob,
                    auto_rejected: o.auto_rejected,
                }
            } else {
                let chol = adapt[k].proposal_cholesky(g, config.adapt_start, config.adapt_jitter);
                let current = block.values(&state);
                let mut next_cache = None;
                let mut ratio = |values: &[f64]| {
                    let mut proposed = state.clone();
                    block.set(&mut proposed, values);
                    let (r, c) = post.block_log_ratio(block, &state, &cache, &proposed);
                    next_cache = Some(c);
                    r
                };
                let o = if current.len() == 1 {
                    let s = mh_step_scalar(current[0], transform, chol[(0, 0)], &mut rng, |v| ratio(&[v]));
                    StepOutcome {
                        value: vec![s.value],
                        accepted: s.accepted,
                        accept_prob: s.accept_prob,
                        auto_rejected: s.auto_rejected,
                    }
                } else {
                    mh_step_block(&current, transform, &chol, &mut rng, ratio)
                };
                if o.accepted {
                    cache = next_cache.expect("accepted proposal was evaluated");
                }
                o
            };
            if out.accepted {
                block.set(&mut state, &out.value);
            }
            adapt[k].count(out.accepted, out.auto_rejected);
            let t: Vec<f64> = out.value.iter().map(|&v| transform.forward(v)).collect();
            adapt[k].adapt_proposal(g, &t, out.accept_prob, config.target(block), config.adapt_start);
        }

        if config.keeps(g) {
            push_log_density(&post, &state, &cache, &mut log_density);
            samples.push(state.clone());
        }
    }

    let acceptance = Block::SWEEP
        .iter()
        .map(|&b| {
            let a = &adapt[b.index()];
            BlockAcceptance {
                block: b,
                proposed: a.proposed,
                accepted: a.accepted,
                auto_rejected: a.auto_rejected,
            }
        })
        .collect();
    Ok(PosteriorChain::new(samples, log_density, n_obs, acceptance, config.clone(), stream))
}

fn push_log_density(post: &Posterior, state: &ParameterState, cache: &StateCache, out: &mut Vec<f64>) {
    let model = &post.model;
    let spline_term = if post.prior_only {
        model.spline_term(&state.c).expect("coefficient shape checked at start")
    } else {
        cache.spline_term.clone()
    };
    let pred = model.predictor_from_spline(state, &spline_term);
    let p0 = model.zero_interaction(state);
    let delta = ResponseModel::delta_from(&p0, &pred, state.b1, state.b2);
    let data = post.data;
    for i in 0..data.conc1.len() {
        for j in 0..data.conc2.len() {
            let p = p0[(i, j)] + delta[(i, j)];
            out.extend(data.cell(i, j).iter().map(|&y| normal_ln_pdf(y, p, state.sigma2_eps)));
        }
    }
}
