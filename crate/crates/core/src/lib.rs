//! Bayesian drug-combination response surfaces.
//!
//! The mean viability on a two-drug concentration grid is modelled as a Bliss
//! zero-interaction surface plus a bounded interaction term driven by a
//! penalised tensor-product spline. Posterior samples come from an adaptive
//! Metropolis-within-Gibbs sampler.

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod mcmc;
pub mod model;
pub mod simgen;
pub mod special;
pub mod splines;
pub mod summaries;
pub mod surface;

pub use baselines::{baseline, BaselineMethod, BaselineResult, MonoFit};
pub use error::{Error, Result};
pub use nalgebra;
pub use mcmc::{run_chain, run_chains, Block, BlockAcceptance, ChainConfig, PosteriorChain};
pub use model::{
    LinearScale, LogConcGrid, ParameterState, Phi, PlateDataset, PriorSpec, ResponseModel,
    VariancePrior,
};
pub use simgen::{NoiseFamily, SimScenario, SimulatedPlate};
pub use splines::SplineSpec;
pub use summaries::{summarize, Interval, LpmlScope, SummaryOptions, SummaryReport};
pub use surface::{SurfaceGrid, SurfaceKind};
