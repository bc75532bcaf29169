//! Synthetic plates with known zero-interaction and interaction surfaces.
//!
//! Both truths are products of univariate normal CDFs evaluated on log10
//! concentrations. Readings are `p + σ·ε` with `ε` standard normal or
//! Student-t with five degrees of freedom.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LogConcGrid, PlateDataset};
use crate::special::normal_cdf;
use crate::surface::{SurfaceGrid, SurfaceKind};

pub const DEFAULT_SIGMA: f64 = 0.05;
pub const T_DOF: f64 = 5.0;

/// Log10 concentrations of drug 1 (excluding the zero level).
pub fn default_log10_axis1() -> Vec<f64> {
    (-4..=4).map(f64::from).chain([5.0]).collect()
}

/// Log10 concentrations of drug 2 (excluding the zero level).
pub fn default_log10_axis2() -> Vec<f64> {
    (0..8).map(|k| -3.5 + k as f64).chain([5.5]).collect()
}

/// Natural concentrations with the leading zero.
pub fn default_concentrations() -> (Vec<f64>, Vec<f64>) {
    let nat = |v: Vec<f64>| -> Vec<f64> {
        std::iter::once(0.0).chain(v.into_iter().map(|l| 10f64.powf(l))).collect()
    };
    (nat(default_log10_axis1()), nat(default_log10_axis2()))
}

pub fn default_grid() -> LogConcGrid {
    let (c1, c2) = default_concentrations();
    LogConcGrid::from_concentrations(&c1, &c2).expect("static grid is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Normal,
    /// Student-t, five degrees of freedom.
    T5,
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(NoiseFamily::Normal),
            "t5" => Ok(NoiseFamily::T5),
            _ => Err(Error::invalid(format!("unknown noise family {s:?} (normal | t5)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    /// 1: no interaction; 2: positive bump at high doses; 3: mixed sign.
    pub interaction: u8,
    pub noise: NoiseFamily,
    pub n_rep: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl SimScenario {
    pub fn new(interaction: u8, noise: NoiseFamily, n_rep: usize, seed: u64) -> Result<Self> {
        let s = Self {
            interaction,
            noise,
            n_rep,
            sigma: DEFAULT_SIGMA,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.interaction) {
            return Err(Error::invalid(format!(
                "interaction id must be 1, 2 or 3, got {}",
                self.interaction
            )));
        }
        if self.n_rep == 0 {
            return Err(Error::invalid("n_rep must be at least 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// `Φ(−x1/√5)·Φ((5 − x2)/√5)`.
pub fn p0_at(x1: f64, x2: f64) -> f64 {
    let s = 5f64.sqrt();
    normal_cdf(-x1 / s) * normal_cdf((5.0 - x2) / s)
}

/// Interaction field `id` at one log10 point, without border masking.
pub fn delta_at(x1: f64, x2: f64, id: u8) -> Result<f64> {
    match id {
        1 => Ok(0.0),
        2 => {
            let s = 10f64.sqrt();
            Ok(normal_cdf((x1 - 5.0) / s) * normal_cdf((x2 - 5.0) / s))
        }
        3 => Ok(0.5
            * (normal_cdf(x1 - 1.0) * normal_cdf(x2 - 1.0)
                - normal_cdf(-1.0 - x1) * normal_cdf(-1.0 - x2))),
        _ => Err(Error::invalid(format!("interaction id must be 1, 2 or 3, got {id}"))),
    }
}

fn field(grid: &LogConcGrid, kind: SurfaceKind, f: impl Fn(usize, usize) -> f64) -> SurfaceGrid {
    let (n1, n2) = grid.shape();
    SurfaceGrid {
        values: DMatrix::from_fn(n1, n2, f),
        axis1: grid.logc1.clone(),
        axis2: grid.logc2.clone(),
        kind,
    }
}

pub fn truth_p0(grid: &LogConcGrid) -> SurfaceGrid {
    field(grid, SurfaceKind::Truth, |i, j| p0_at(grid.logc1[i], grid.logc2[j]))
}

/// Interaction truth on the grid. Wells with a zero concentration carry no
/// interaction, matching the model's indicator.
pub fn truth_delta(grid: &LogConcGrid, id: u8) -> Result<SurfaceGrid> {
    delta_at(0.0, 0.0, id)?;
    Ok(field(grid, SurfaceKind::Truth, |i, j| {
        if i == 0 || j == 0 {
            0.0
        } else {
            delta_at(grid.logc1[i], grid.logc2[j], id).expect("id checked")
        }
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPlate {
    pub data: PlateDataset,
    pub p0: SurfaceGrid,
    pub delta: SurfaceGrid,
    pub p: SurfaceGrid,
}

/// Draws a plate on the default grid.
pub fn sample_plate(scenario: &SimScenario) -> Result<SimulatedPlate> {
    let (c1, c2) = default_concentrations();
    sample_plate_on(scenario, &c1, &c2)
}

pub fn sample_plate_on(scenario: &SimScenario, conc1: &[f64], conc2: &[f64]) -> Result<SimulatedPlate> {
    scenario.validate()?;
    let grid = LogConcGrid::from_concentrations(conc1, conc2)?;
    let p0 = truth_p0(&grid);
    let delta = truth_delta(&grid, scenario.interaction)?;
    let p = SurfaceGrid {
        values: &p0.values + &delta.values,
        ..p0.clone()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed);
    let data = PlateDataset::from_fn(
        conc1.to_vec(),
        conc2.to_vec(),
        scenario.n_rep,
        ["drug1".into(), "drug2".into()],
        |i, j, _| p.values[(i, j)] + scenario.sigma * noise(scenario.noise, &mut rng),
    )?;
    Ok(SimulatedPlate {
        data,
        p0,
        delta,
        p,
    })
}

/// One standardised noise draw.
pub fn noise<R: Rng + ?Sized>(family: NoiseFamily, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    match family {
        NoiseFamily::Normal => z,
        NoiseFamily::T5 => {
            let chi2 = ChiSquared::new(T_DOF).expect("positive dof").sample(rng);
            z / (chi2 / T_DOF).sqrt()
        }
    }
}
