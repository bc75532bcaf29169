use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Reparametrisation used for the random walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    /// For strictly positive parameters.
    Log,
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
        }
    }

    pub fn inverse(self, t: f64) -> f64 {
        match self {
            Transform::Identity => t,
            Transform::Log => t.exp(),
        }
    }

    /// `|J(x)| = |dt/dx|`.
    pub fn jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => 1.0 / x,
        }
    }

    /// `ln(|J(current)| / |J(proposed)|)`, the factor that turns a random walk
    /// in transformed space into a valid Metropolis–Hastings ratio.
    pub fn log_jacobian_ratio(self, current: f64, proposed: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => proposed.ln() - current.ln(),
        }
    }

    fn admits(self, x: f64) -> bool {
        match self {
            Transform::Identity => x.is_finite(),
            Transform::Log => x.is_finite() && x > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub value: T,
    pub accepted: bool,
    /// `min(1, ratio)`; zero for auto-rejected proposals.
    pub accept_prob: f64,
    /// Proposal left the support or produced a non-finite ratio.
    pub auto_rejected: bool,
}

fn decide<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> (bool, f64) {
    if log_ratio.is_nan() {
        return (false, 0.0);
    }
    let a = log_ratio.min(0.0).exp();
    let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    (accepted, a)
}

/// One random-walk step `t* = t + scale·z` in transformed space.
///
/// `log_target_ratio(θ*)` returns `ln π(θ*) − ln π(θ)` with `π` the density
/// in the original parametrisation; the Jacobian factor is added here.
pub fn mh_step_scalar<R: Rng + ?Sized>(
    current: f64,
    transform: Transform,
    scale: f64,
    rng: &mut R,
    log_target_ratio: impl FnOnce(f64) -> f64,
) -> StepOutcome<f64> {
    let z: f64 = rng.sample(StandardNormal);
    let proposed = transform.inverse(transform.forward(current) + scale * z);
    let reject = StepOutcome {
        value: current,
        accepted: false,
        accept_prob: 0.0,
        auto_rejected: true,
    };
    if !transform.admits(proposed) {
        return reject;
    }
    let log_ratio = log_target_ratio(proposed) + transform.log_jacobian_ratio(current, proposed);
    if log_ratio.is_nan() || log_ratio == f64::INFINITY {
        return reject;
    }
    let (accepted, accept_prob) = decide(rng, log_ratio);
    StepOutcome {
        value: if accepted { proposed } else { current },
        accepted,
        accept_prob,
        auto_rejected: false,
    }
}

/// Multivariate version of [`mh_step_scalar`] with proposal `t* = t + L z`,
/// `L` lower triangular. The transform applies elementwise.
pub fn mh_step_block<R: Rng + ?Sized>(
    current: &[f64],
    transform: Transform,
    chol: &DMatrix<f64>,
    rng: &mut R,
    log_target_ratio: impl FnOnce(&[f64]) -> f64,
) -> StepOutcome<Vec<f64>> {
    let d = current.len();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let step = chol * z;
    let proposed: Vec<f64> = current
        .iter()
        .zip(step.iter())
        .map(|(&x, &dz)| transform.inverse(transform.forward(x) + dz))
        .collect();
    let reject = |current: &[f64]| StepOutcome {
        value: current.to_vec(),
        accepted: false,
        accept_prob: 0.0,
        auto_rejected: true,
    };
    if !proposed.iter().all(|&x| transform.admits(x)) {
        return reject(current);
    }
    let jac: f64 = current
        .iter()
        .zip(&proposed)
        .map(|(&c, &p)| transform.log_jacobian_ratio(c, p))
        .sum();
    let log_ratio = log_target_ratio(&proposed) + jac;
    if log_ratio.is_nan() || log_ratio == f64::INFINITY {
        return reject(current);
    }
    let (accepted, accept_prob) = decide(rng, log_ratio);
    StepOutcome {
        value: if accepted { proposed } else { current.to_vec() },
        accepted,
        accept_prob,
        auto_rejected: false,
    }
}
