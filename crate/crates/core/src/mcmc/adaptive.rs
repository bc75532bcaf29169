use nalgebra::{DMatrix, DVector};

/// Proposal state of one block: running moments of the transformed samples,
/// the Robbins–Monro scale and acceptance counters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    dim: usize,
    n: usize,
    mean: DVector<f64>,
    /// Sum of outer products of deviations from the running mean.
    m2: DMatrix<f64>,
    log_scale: f64,
    initial_scale: f64,
    pub proposed: u64,
    pub accepted: u64,
    pub auto_rejected: u64,
}

impl AdaptiveState {
    /// `initial_scale` is the random-walk standard deviation used before
    /// adaptation starts; the adaptive scale starts at `2.38²/d`.
    pub fn new(dim: usize, initial_scale: f64) -> Self {
        Self {
            dim,
            n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            log_scale: (2.38f64 * 2.38 / dim as f64).ln(),
            initial_scale,
            proposed: 0,
            accepted: 0,
            auto_rejected: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Welford update with one transformed sample.
    pub fn record(&mut self, t: &[f64]) {
        debug_assert_eq!(t.len(), self.dim);
        self.n += 1;
        let x = DVector::from_column_slice(t);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.m2.ger(1.0, &delta, &delta2, 1.0);
    }

    /// Unbiased sample covariance; zero with fewer than two samples.
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.n < 2 {
            return DMatrix::zeros(self.dim, self.dim);
        }
        let c = &self.m2 / (self.n - 1) as f64;
        (&c + c.transpose()) * 0.5
    }

    /// `ξ = s·Cov + s·ε·I`.
    pub fn proposal_covariance(&self, jitter: f64) -> DMatrix<f64> {
        let s = self.scale();
        let mut xi = self.covariance() * s;
        for k in 0..self.dim {
            xi[(k, k)] += s * jitter;
        }
        xi
    }

    /// Lower Cholesky factor of the proposal covariance at iteration `g`.
    pub fn proposal_cholesky(&self, g: usize, adapt_start: usize, jitter: f64) -> DMatrix<f64> {
        if g <= adapt_start {
            return DMatrix::identity(self.dim, self.dim) * self.initial_scale;
        }
        let xi = self.proposal_covariance(jitter);
        match xi.clone().cholesky() {
            Some(ch) => ch.l(),
            None => DMatrix::from_diagonal(&xi.diagonal().map(|v| v.max(0.0).sqrt())),
        }
    }

    /// Records the new sample and, after `adapt_start`, moves the scale by
    /// `g^{-0.7}·(accept_prob − target)` on the log scale.
    pub fn adapt_proposal(
        &mut self,
        g: usize,
        sample: &[f64],
        accept_prob: f64,
        target: f64,
        adapt_start: usize,
    ) {
        self.record(sample);
        if g > adapt_start {
            self.log_scale += (g as f64).powf(-0.7) * (accept_prob - target);
        }
    }

    pub fn count(&mut self, accepted: bool, auto_rejected: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        self.auto_rejected += auto_rejected as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn identical_samples_leave_only_jitter() {
        let mut a = AdaptiveState::new(3, 0.1);
        for g in 1..=50 {
            a.adapt_proposal(g, &[1.0, -2.0, 0.5], 0.234, 0.234, 10);
        }
        let s = a.scale();
        let xi = a.proposal_covariance(1e-6);
        let want = DMatrix::<f64>::identity(3, 3) * (s * 1e-6);
        assert!((xi - want).abs().max() < 1e-18);
    }

    #[test]
    fn scale_is_fixed_at_target_acceptance() {
        let mut a = AdaptiveState::new(1, 0.1);
        let s0 = a.scale();
        for g in 1..=5000 {
            a.adapt_proposal(g, &[g as f64], 0.44, 0.44, 100);
        }
        assert_eq!(a.scale(), s0);
    }

    #[test]
    fn running_moments_match_full_history() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut a = AdaptiveState::new(4, 0.1);
        let mut hist = Vec::new();
        for _ in 0..500 {
            let t: Vec<f64> = (0..4).map(|k| rng.random::<f64>() * (k + 1) as f64 + 100.0).collect();
            a.record(&t);
            hist.push(t);
        }
        let g = hist.len() as f64;
        let mut sum = DVector::zeros(4);
        let mut outer = DMatrix::zeros(4, 4);
        for t in &hist {
            let v = DVector::from_column_slice(t);
            outer += &v * v.transpose();
            sum += v;
        }
        let oracle = (outer - &sum * sum.transpose() / g) / (g - 1.0);
        assert!((a.covariance() - oracle).abs().max() < 1e-9);
    }

    #[test]
    fn fixed_scale_before_adaptation() {
        let a = AdaptiveState::new(2, 0.3);
        let l = a.proposal_cholesky(5, 10, 1e-6);
        assert_eq!(l, DMatrix::identity(2, 2) * 0.3);
    }
}
