//! Run configuration: defaults, optional TOML file, command-line overrides.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use synergy_core::splines::{DEFAULT_BASIS_SIZE, DEFAULT_PENALTY_RIDGE};
use synergy_core::{ChainConfig, LogConcGrid, PriorSpec, SplineSpec, SummaryOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineConfig {
    pub k1: usize,
    pub k2: usize,
    pub penalty_ridge: f64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            k1: DEFAULT_BASIS_SIZE,
            k2: DEFAULT_BASIS_SIZE,
            penalty_ridge: DEFAULT_PENALTY_RIDGE,
        }
    }
}

impl SplineConfig {
    pub fn spec(&self, grid: &LogConcGrid) -> synergy_core::Result<SplineSpec> {
        SplineSpec::for_grid(grid, self.k1, self.k2, self.penalty_ridge)
    }
}

/// Everything a fit needs besides the data. Echoed into `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_chains: usize,
    pub chain: ChainConfig,
    pub priors: PriorSpec,
    pub spline: SplineConfig,
    pub summary: SummaryOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_chains: 1,
            chain: ChainConfig::default(),
            priors: PriorSpec::default(),
            spline: SplineConfig::default(),
            summary: SummaryOptions::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| synergy_core::Error::InvalidArgument(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks every numeric field before any compute starts.
    pub fn validate(&self) -> synergy_core::Result<()> {
        if self.n_chains == 0 {
            return Err(synergy_core::Error::InvalidArgument("n_chains must be at least 1".into()));
        }
        self.chain.validate()?;
        self.priors.validate()?;
        if !(self.spline.penalty_ridge > 0.0 && self.spline.penalty_ridge.is_finite()) {
            return Err(synergy_core::Error::InvalidArgument(format!(
                "penalty_ridge must be positive, got {}",
                self.spline.penalty_ridge
            )));
        }
        let s = &self.summary;
        if !(s.activity_threshold >= 0.0 && s.activity_threshold < 1.0) {
            return Err(synergy_core::Error::InvalidArgument(format!(
                "activity_threshold must lie in [0, 1), got {}",
                s.activity_threshold
            )));
        }
        if !(s.ec50_delta >= 0.0) || s.refine1 < 2 || s.refine2 < 2 {
            return Err(synergy_core::Error::InvalidArgument(
                "ec50_delta must be nonnegative and refine grids need at least 2 points".into(),
            ));
        }
        Ok(())
    }
}
