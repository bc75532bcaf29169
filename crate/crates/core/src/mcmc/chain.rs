use serde::{Deserialize, Serialize};

use super::{Block, ChainConfig};
use crate::error::{Error, Result};
use crate::model::ParameterState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: Block,
    pub proposed: u64,
    pub accepted: u64,
    pub auto_rejected: u64,
}

impl BlockAcceptance {
    /// Fraction of accepted proposals; direct draws count as accepted.
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Retained, thinned post-burn-in samples of one or more chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub samples: Vec<ParameterState>,
    /// `samples.len() x n_obs`, row-major; observation order follows
    /// [`crate::PlateDataset::readings`].
    log_density: Vec<f64>,
    n_obs: usize,
    pub acceptance: Vec<BlockAcceptance>,
    pub config: ChainConfig,
    /// Stream index of every merged chain.
    pub chain_indices: Vec<u64>,
}

impl PosteriorChain {
    pub(crate) fn new(
        samples: Vec<ParameterState>,
        log_density: Vec<f64>,
        n_obs: usize,
        acceptance: Vec<BlockAcceptance>,
        config: ChainConfig,
        chain_index: u64,
    ) -> Self {
        debug_assert_eq!(samples.len() * n_obs, log_density.len());
        Self {
            samples,
            log_density,
            n_obs,
            acceptance,
            config,
            chain_indices: vec![chain_index],
        }
    }

    /// Builds a chain from externally supplied samples and log densities.
    pub fn from_parts(
        samples: Vec<ParameterState>,
        log_density: Vec<f64>,
        n_obs: usize,
        config: ChainConfig,
    ) -> Result<Self> {
        if samples.len() * n_obs != log_density.len() {
            return Err(Error::dims(
                "log-density matrix",
                samples.len() * n_obs,
                log_density.len(),
            ));
        }
        Ok(Self {
            samples,
            log_density,
            n_obs,
            acceptance: Vec::new(),
            config,
            chain_indices: vec![0],
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// Per-observation log densities of sample `s`.
    pub fn log_density_row(&self, s: usize) -> &[f64] {
        &self.log_density[s * self.n_obs..(s + 1) * self.n_obs]
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    /// Total log-likelihood of sample `s`.
    pub fn log_likelihood(&self, s: usize) -> f64 {
        self.log_density_row(s).iter().sum()
    }

    /// Concatenates chains in the given order.
    pub fn merge(chains: Vec<PosteriorChain>) -> Result<Self> {
        let mut it = chains.into_iter();
        let mut out = it
            .next()
            .ok_or_else(|| Error::invalid("cannot merge an empty list of chains"))?;
        for c in it {
            if c.n_obs != out.n_obs {
                return Err(Error::dims("observations per sample", out.n_obs, c.n_obs));
            }
            out.samples.extend(c.samples);
            out.log_density.extend(c.log_density);
            out.chain_indices.extend(c.chain_indices);
            for (a, b) in out.acceptance.iter_mut().zip(c.acceptance) {
                a.proposed += b.proposed;
                a.accepted += b.accepted;
                a.auto_rejected += b.auto_rejected;
            }
        }
        Ok(out)
    }

    /// Values of one scalar parameter across samples.
    pub fn trace(&self, f: impl Fn(&ParameterState) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}
