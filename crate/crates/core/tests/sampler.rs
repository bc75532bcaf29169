//! Stationary-distribution checks for the Metropolis-within-Gibbs sampler.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Gamma, InverseGamma, Normal, StudentsT};

use synergy_core::diagnostics::{ks_p_value, ks_statistic, total_variation};
use synergy_core::mcmc::{
    run_chain_from, update_variance, Block, ChainConfig, Posterior, PosteriorChain,
};
use synergy_core::model::GammaPrior;
use synergy_core::simgen::sample_plate;
use synergy_core::{
    run_chains, LinearScale, NoiseFamily, ParameterState, Phi, PlateDataset, PriorSpec,
    ResponseModel, SimScenario, SplineSpec, VariancePrior,
};

const P_MIN: f64 = 0.01;

fn toy_plate() -> PlateDataset {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    PlateDataset::from_fn(
        vec![0.0, 0.01, 0.1, 1.0, 10.0],
        vec![0.0, 0.01, 0.1, 1.0, 10.0],
        2,
        ["a".into(), "b".into()],
        |i, j, _| {
            let base = 1.0 / (1.0 + 0.3 * i as f64) / (1.0 + 0.5 * j as f64);
            base + 0.05 * (rng.random::<f64>() - 0.5)
        },
    )
    .unwrap()
}

fn well_conditioned_priors(variance: VariancePrior) -> PriorSpec {
    let g = GammaPrior { shape: 2.0, rate: 1.0 };
    PriorSpec {
        lambda1: g,
        lambda2: g,
        b1: g,
        b2: g,
        variance,
    }
}

fn assert_ks(name: &str, draws: &[f64], cdf: impl Fn(f64) -> f64) {
    let d = ks_statistic(draws, cdf);
    let p = ks_p_value(d, draws.len());
    assert!(p > P_MIN, "{name}: KS D = {d:.5}, p = {p:.4} over {} draws", draws.len());
}

fn prior_chain(priors: &PriorSpec, spec: &SplineSpec, draws: usize, thin: usize) -> PosteriorChain {
    let data = toy_plate();
    let init = ParameterState::initial(&data.log_grid().unwrap(), spec);
    let cfg = ChainConfig {
        n_iter: 5_000 + draws * thin,
        burn_in: 5_000,
        thin,
        adapt_start: 1_000,
        seed: 17,
        prior_only: true,
        ..ChainConfig::default()
    };
    run_chain_from(&data, priors, spec, &cfg, init, 0).unwrap()
}

#[test]
fn every_block_recovers_its_prior_without_likelihood() {
    let (a, b) = (3.0, 2.0);
    let priors = well_conditioned_priors(VariancePrior::InverseGamma { shape: a, rate: b });
    let data = toy_plate();
    let spec = SplineSpec::for_grid(&data.log_grid().unwrap(), 4, 4, 1.0).unwrap();
    let chain = prior_chain(&priors, &spec, 100_000, 20);
    assert_eq!(chain.len(), 100_000);

    // N(0, σ²) with σ² ~ IG(a, b) is a Student-t with 2a dof and scale √(b/a).
    let t = StudentsT::new(0.0, (b / a).sqrt(), 2.0 * a).unwrap();
    for phi in Phi::ALL {
        assert_ks(phi.name(), &chain.trace(|s| s.phi(phi)), |x| t.cdf(x));
    }
    let gamma = Gamma::new(2.0, 1.0).unwrap();
    let positive: [(&str, fn(&ParameterState) -> f64); 4] = [
        ("lambda1", |s| s.lambda1),
        ("lambda2", |s| s.lambda2),
        ("b1", |s| s.b1),
        ("b2", |s| s.b2),
    ];
    for (name, f) in positive {
        assert_ks(name, &chain.trace(f), |x| gamma.cdf(x));
    }
    let ig = InverseGamma::new(a, b).unwrap();
    for phi in Phi::ALL {
        assert_ks(&format!("sigma2 of {}", phi.name()), &chain.trace(|s| s.sigma2(phi)), |x| ig.cdf(x));
    }
    assert_ks("sigma2_eps", &chain.trace(|s| s.sigma2_eps), |x| ig.cdf(x));

    // vec(C) ~ N(0, P_col⁻¹ ⊗ P_row⁻¹).
    let (pr, pc) = spec.precisions().unwrap();
    let (sr, sc) = (pr.try_inverse().unwrap(), pc.try_inverse().unwrap());
    for (i, j) in [(0, 0), (1, 2), (3, 3), (2, 0)] {
        let sd = (sr[(i, i)] * sc[(j, j)]).sqrt();
        let n = Normal::new(0.0, sd).unwrap();
        assert_ks(&format!("C[{i},{j}]"), &chain.trace(|s| s.c[(i, j)]), |x| n.cdf(x));
    }
}

#[test]
fn spline_coefficient_covariance_matches_matrix_normal() {
    let priors = well_conditioned_priors(VariancePrior::InverseGamma { shape: 3.0, rate: 2.0 });
    let data = toy_plate();
    let spec = SplineSpec::for_grid(&data.log_grid().unwrap(), 4, 4, 1.0).unwrap();
    let chain = prior_chain(&priors, &spec, 40_000, 20);
    let (pr, pc) = spec.precisions().unwrap();
    let (sr, sc) = (pr.try_inverse().unwrap(), pc.try_inverse().unwrap());
    let n = chain.len() as f64;
    for ((i, j), (k, l)) in [((0, 0), (0, 0)), ((0, 0), (1, 0)), ((1, 1), (2, 2)), ((0, 1), (0, 3)), ((3, 3), (3, 3))] {
        let want = sr[(i, k)] * sc[(j, l)];
        let scale = (sr[(i, i)] * sc[(j, j)] * sr[(k, k)] * sc[(l, l)]).sqrt();
        let got = chain.samples.iter().map(|s| s.c[(i, j)] * s.c[(k, l)]).sum::<f64>() / n;
        assert!(
            (got - want).abs() < 0.05 * scale,
            "cov(C[{i},{j}], C[{k},{l}]) = {got:.4}, expected {want:.4}"
        );
    }
}

#[test]
fn conjugate_inverse_gamma_draws_match_closed_form() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let prior = VariancePrior::InverseGamma { shape: 1.0, rate: 1.0 };
    let draws: Vec<f64> = (0..100_000)
        .map(|_| update_variance(1.0, 0.0, 1, &prior, 0.1, &mut rng).value)
        .collect();
    let want = InverseGamma::new(1.5, 1.0).unwrap();
    assert_ks("IG(1,1) after one zero residual", &draws, |x| want.cdf(x));
}

#[test]
fn noise_variance_with_exact_fit_is_inverse_gamma() {
    let data0 = toy_plate();
    let grid = data0.log_grid().unwrap();
    let spec = SplineSpec::for_grid(&grid, 4, 4, 1e-4).unwrap();
    let mut init = ParameterState::initial(&grid, &spec);
    (init.m1, init.m2, init.lambda1, init.lambda2) = (-0.5, 0.2, 0.8, 1.4);
    init.gamma0 = 0.3;
    let model = ResponseModel::new(grid, spec.clone(), LinearScale::Log10).unwrap();
    let p = model.surfaces(&init).unwrap().p;
    let data = PlateDataset::from_fn(
        data0.conc1.clone(),
        data0.conc2.clone(),
        2,
        ["a".into(), "b".into()],
        |i, j, _| p[(i, j)],
    )
    .unwrap();
    let (alpha, beta) = (2.0, 0.5);
    let priors = PriorSpec::with_variance(VariancePrior::InverseGamma { shape: alpha, rate: beta });
    let cfg = ChainConfig {
        n_iter: 100_000,
        burn_in: 0,
        thin: 1,
        seed: 3,
        fixed_blocks: Block::SWEEP.into_iter().filter(|b| *b != Block::Sigma2Eps).collect(),
        ..ChainConfig::default()
    };
    let chain = run_chain_from(&data, &priors, &spec, &cfg, init, 0).unwrap();
    let want = InverseGamma::new(alpha + 0.5 * data.n_obs() as f64, beta).unwrap();
    assert_ks("sigma2_eps", &chain.trace(|s| s.sigma2_eps), |x| want.cdf(x));
}

/// Stationary law of `σ²` given one `N(0, σ²)` term `φ` under a half-Cauchy
/// on `σ`, tabulated on a log grid.
fn half_cauchy_conditional_cdf(phi: f64, h: f64) -> impl Fn(f64) -> f64 {
    let n = 200_001;
    let (lo, hi) = (-40.0f64, 40.0f64);
    let du = (hi - lo) / (n - 1) as f64;
    // Density of u = ln σ²: v·p(v) with p(v) ∝ v^{-1/2} e^{-φ²/2v} · v^{-1/2}/(v + h²).
    let dens: Vec<f64> = (0..n)
        .map(|k| {
            let v = (lo + k as f64 * du).exp();
            (-(phi * phi) / (2.0 * v)).exp() / (v + h * h)
        })
        .collect();
    let mut cum = vec![0.0; n];
    for k in 1..n {
        cum[k] = cum[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * du;
    }
    let total = cum[n - 1];
    move |v: f64| {
        let u = ((v.ln() - lo) / du).clamp(0.0, (n - 1) as f64);
        let k = (u.floor() as usize).min(n - 2);
        let w = u - k as f64;
        (cum[k] * (1.0 - w) + cum[k + 1] * w) / total
    }
}

#[test]
fn half_cauchy_variance_step_targets_the_conditional() {
    let (phi, h) = (0.5, 1.0);
    let prior = VariancePrior::HalfCauchy { scale: h };
    let mut rng = ChaCha20Rng::seed_from_u64(29);
    let mut v = 1.0;
    let mut draws = Vec::with_capacity(100_000);
    for k in 0..100_000 * 10 + 1_000 {
        v = update_variance(v, phi * phi, 1, &prior, 2.0, &mut rng).value;
        if k >= 1_000 && (k - 1_000) % 10 == 0 {
            draws.push(v);
        }
    }
    assert_ks("sigma2 | phi under HC", &draws, half_cauchy_conditional_cdf(phi, h));
}

#[test]
fn noise_variance_under_half_cauchy_recovers_prior() {
    let priors = PriorSpec::with_variance(VariancePrior::HalfCauchy { scale: 1.0 });
    let data = toy_plate();
    let spec = SplineSpec::for_grid(&data.log_grid().unwrap(), 4, 4, 1.0).unwrap();
    let init = ParameterState::initial(&data.log_grid().unwrap(), &spec);
    let cfg = ChainConfig {
        n_iter: 2_000 + 100_000 * 10,
        burn_in: 2_000,
        thin: 10,
        adapt_start: 500,
        seed: 31,
        prior_only: true,
        fixed_blocks: Block::SWEEP.into_iter().filter(|b| *b != Block::Sigma2Eps).collect(),
        ..ChainConfig::default()
    };
    let chain = run_chain_from(&data, &priors, &spec, &cfg, init, 0).unwrap();
    let sd = chain.trace(|s| s.sigma2_eps.sqrt());
    assert_ks("sigma_eps", &sd, |s| 2.0 / std::f64::consts::PI * s.atan());
}

#[test]
fn block_ratios_match_full_density_differences() {
    let data = toy_plate();
    let grid = data.log_grid().unwrap();
    let spec = SplineSpec::for_grid(&grid, 4, 4, 1e-2).unwrap();
    let post = Posterior::new(&data, PriorSpec::default(), &spec, LinearScale::Log10, false).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    let random_state = |rng: &mut ChaCha20Rng| {
        let mut s = ParameterState::initial(&grid, &spec);
        (s.m1, s.m2) = (rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0));
        (s.lambda1, s.lambda2) = (rng.random_range(0.3..2.0), rng.random_range(0.3..2.0));
        (s.b1, s.b2) = (rng.random_range(0.3..3.0), rng.random_range(0.3..3.0));
        (s.gamma0, s.gamma1, s.gamma2) =
            (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        s.c = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        s.sigma2_phi = [0.5, 0.7, 1.1, 1.3, 1.7];
        s.sigma2_eps = 0.02;
        s
    };
    for block in Block::SWEEP.into_iter().filter(|b| !b.is_variance()) {
        for _ in 0..20 {
            let cur = random_state(&mut rng);
            let cache = post.cache(&cur).unwrap();
            let mut prop = cur.clone();
            let jitter: Vec<f64> = block
                .values(&cur)
                .iter()
                .map(|&v| match block.transform() {
                    synergy_core::mcmc::Transform::Log => v * rng.random_range(0.7..1.4),
                    synergy_core::mcmc::Transform::Identity => v + rng.random_range(-0.3..0.3),
                })
                .collect();
            block.set(&mut prop, &jitter);
            let (ratio, next) = post.block_log_ratio(block, &cur, &cache, &prop);
            let (a, b) = (post.log_density(&prop).unwrap(), post.log_density(&cur).unwrap());
            let tol = 1e-10 * a.abs().max(b.abs()).max(1.0);
            assert!((ratio - (a - b)).abs() < tol, "{block:?}: {ratio} vs {}", a - b);
            let fresh = post.cache(&prop).unwrap();
            assert!((next.rss - fresh.rss).abs() < 1e-10 * fresh.rss.max(1.0));
            assert!((next.quadratic - fresh.quadratic).abs() < 1e-10 * fresh.quadratic.max(1.0));
        }
    }
}

#[test]
fn two_parameter_chain_matches_quadrature() {
    let data = toy_plate();
    let grid = data.log_grid().unwrap();
    let spec = SplineSpec::for_grid(&grid, 4, 4, 1e-4).unwrap();
    let priors = PriorSpec::default();
    let mut init = ParameterState::initial(&grid, &spec);
    init.sigma2_phi[Phi::M1.index()] = 4.0;
    init.sigma2_eps = 0.05;
    let free = [Block::M1, Block::Lambda1];
    let cfg = ChainConfig {
        n_iter: 5_000 + 200_000 * 5,
        burn_in: 5_000,
        thin: 5,
        adapt_start: 1_000,
        seed: 43,
        fixed_blocks: Block::SWEEP.into_iter().filter(|b| !free.contains(b)).collect(),
        ..ChainConfig::default()
    };
    let chain = run_chain_from(&data, &priors, &spec, &cfg, init.clone(), 0).unwrap();
    let post = Posterior::new(&data, priors, &spec, LinearScale::Log10, false).unwrap();
    let log_post = |m: f64, l: f64| {
        let mut s = init.clone();
        (s.m1, s.lambda1) = (m, l);
        post.log_density(&s).unwrap()
    };

    // Box holding essentially all posterior mass, located on a coarse grid.
    let (coarse_m, coarse_l) = ((-6.0, 6.0), (1e-3, 6.0));
    let nc = 200;
    let mut pts = Vec::new();
    let mut max_lp = f64::NEG_INFINITY;
    for a in 0..nc {
        for b in 0..nc {
            let m = coarse_m.0 + (coarse_m.1 - coarse_m.0) * (a as f64 + 0.5) / nc as f64;
            let l = coarse_l.0 + (coarse_l.1 - coarse_l.0) * (b as f64 + 0.5) / nc as f64;
            let lp = log_post(m, l);
            max_lp = max_lp.max(lp);
            pts.push((m, l, lp));
        }
    }
    let keep: Vec<_> = pts.iter().filter(|p| p.2 > max_lp - 20.0).collect();
    let bm = (
        keep.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 0.1,
        keep.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 0.1,
    );
    let bl = (
        (keep.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - 0.05).max(1e-6),
        keep.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + 0.05,
    );

    let bins = 10;
    let bin_of = |m: f64, l: f64| -> Option<usize> {
        let a = ((m - bm.0) / (bm.1 - bm.0) * bins as f64).floor();
        let b = ((l - bl.0) / (bl.1 - bl.0) * bins as f64).floor();
        (a >= 0.0 && b >= 0.0 && a < bins as f64 && b < bins as f64).then(|| a as usize * bins + b as usize)
    };
    let mut quad = vec![0.0; bins * bins + 1];
    let nf = 400;
    for a in 0..nf {
        for b in 0..nf {
            let m = bm.0 + (bm.1 - bm.0) * (a as f64 + 0.5) / nf as f64;
            let l = bl.0 + (bl.1 - bl.0) * (b as f64 + 0.5) / nf as f64;
            quad[bin_of(m, l).unwrap()] += (log_post(m, l) - max_lp).exp();
        }
    }
    let mut hist = vec![0.0; bins * bins + 1];
    for s in &chain.samples {
        hist[bin_of(s.m1, s.lambda1).unwrap_or(bins * bins)] += 1.0;
    }
    let tv = total_variation(&hist, &quad);
    assert!(tv < 0.03, "total variation {tv:.4}");
}

#[test]
fn parallel_chains_do_not_depend_on_thread_count() {
    let plate = sample_plate(&SimScenario::new(3, NoiseFamily::Normal, 1, 5).unwrap()).unwrap();
    let spec = SplineSpec::for_grid(&plate.data.log_grid().unwrap(), 6, 6, 1e-4).unwrap();
    let cfg = ChainConfig {
        n_iter: 2_000,
        burn_in: 1_000,
        thin: 5,
        adapt_start: 200,
        seed: 9,
        ..ChainConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_chains(&plate.data, &PriorSpec::default(), &spec, &cfg, 3).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one, four);
    assert_eq!(one.chain_indices, vec![0, 1, 2]);
    assert_eq!(one.len(), 3 * cfg.n_retained());

    // Every retained state gives a mean surface inside the unit square.
    let model = ResponseModel::new(plate.data.log_grid().unwrap(), spec, LinearScale::Log10).unwrap();
    for s in &one.samples {
        let p = model.surfaces(s).unwrap().p;
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
