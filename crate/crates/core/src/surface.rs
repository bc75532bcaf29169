use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    /// Mean viability `p = p⁰ + Δ`.
    P,
    /// Zero-interaction (Bliss) surface.
    P0,
    /// Interaction surface.
    Delta,
    /// Ground truth from a simulation.
    Truth,
    /// Anything else (baseline references, derived fields).
    Other,
}

/// Scalar field over a concentration grid. Rows follow drug 1, columns drug 2;
/// axes are in log10 units.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub values: DMatrix<f64>,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub kind: SurfaceKind,
}

impl SurfaceGrid {
    pub fn new(
        values: DMatrix<f64>,
        axis1: Vec<f64>,
        axis2: Vec<f64>,
        kind: SurfaceKind,
    ) -> Result<Self> {
        if values.nrows() != axis1.len() || values.ncols() != axis2.len() {
            return Err(Error::dims(
                "surface values",
                format!("{}x{}", axis1.len(), axis2.len()),
                format!("{}x{}", values.nrows(), values.ncols()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("surface contains non-finite values".into()));
        }
        Ok(Self {
            values,
            axis1,
            axis2,
            kind,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn map(&self, kind: SurfaceKind, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.map(f),
            axis1: self.axis1.clone(),
            axis2: self.axis2.clone(),
            kind,
        }
    }

    pub fn with_kind(mut self, kind: SurfaceKind) -> Self {
        self.kind = kind;
        self
    }

    pub(crate) fn same_shape(&self, other: &SurfaceGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                "surface grid",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }
}
