//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Simulation criteria use full-length chains on seeds `1..=ACCEPTANCE_SEEDS`
//! (default 5) and compare medians across seeds. The process exits nonzero
//! on a failure only when `ACCEPTANCE_STRICT=1`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma, InverseGamma, StudentsT};

use synergy_core::baselines::{fit_2ll, loewe_cell, monotherapy_points};
use synergy_core::diagnostics::{ks_p_value, ks_statistic, total_variation};
use synergy_core::mcmc::{run_chain_from, update_variance, Posterior};
use synergy_core::model::{link_g, GammaPrior};
use synergy_core::simgen::{default_grid, delta_at, sample_plate};
use synergy_core::splines::AxisSpline;
use synergy_core::summaries::{dss, lpml, mse_surface, posterior_mean_surfaces, rvus};
use synergy_core::{
    baseline, run_chain, BaselineMethod, Block, ChainConfig, LinearScale, LpmlScope, MonoFit,
    NoiseFamily, ParameterState, Phi, PlateDataset, PriorSpec, ResponseModel, SimScenario,
    SplineSpec, SurfaceGrid, SurfaceKind, VariancePrior,
};

const HC1: VariancePrior = VariancePrior::HalfCauchy { scale: 1.0 };
const IG32: VariancePrior = VariancePrior::InverseGamma { shape: 3.0, rate: 2.0 };

struct Outcome {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u8, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PriorKind {
    Hc,
    Ig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Job {
    scenario: u8,
    n_rep: usize,
    prior: PriorKind,
    seed: u64,
}

#[derive(Debug, Clone)]
struct FitResult {
    mse_delta: f64,
    lpml_all: f64,
    lpml_combination: f64,
    baseline_mse: BTreeMap<&'static str, f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn fmt_e3(v: &[f64]) -> String {
    v.iter().map(|x| format!("{:.3}", x * 1e3)).collect::<Vec<_>>().join(", ")
}

fn run_job(job: Job) -> FitResult {
    let plate = sample_plate(&SimScenario::new(job.scenario, NoiseFamily::Normal, job.n_rep, job.seed).unwrap()).unwrap();
    let grid = plate.data.log_grid().unwrap();
    let spec = SplineSpec::for_grid(&grid, 6, 6, 1e-4).unwrap();
    let prior = match job.prior {
        PriorKind::Hc => HC1,
        PriorKind::Ig => IG32,
    };
    let cfg = ChainConfig { seed: job.seed, ..ChainConfig::default() };
    let chain = run_chain(&plate.data, &PriorSpec::with_variance(prior), &spec, &cfg).unwrap();
    let model = ResponseModel::new(grid, spec, LinearScale::Log10).unwrap();
    let [_, delta, _] = posterior_mean_surfaces(&chain, &model).unwrap();
    let mut baseline_mse = BTreeMap::new();
    if job.n_rep == 3 && job.prior == PriorKind::Hc {
        for m in BaselineMethod::ALL {
            let b = baseline(m, &plate.data).unwrap();
            baseline_mse.insert(m.name(), mse_surface(&b.delta, &plate.delta).unwrap());
        }
    }
    FitResult {
        mse_delta: mse_surface(&delta, &plate.delta).unwrap(),
        lpml_all: lpml(&chain, &plate.data, LpmlScope::AllWells).unwrap(),
        lpml_combination: lpml(&chain, &plate.data, LpmlScope::CombinationWells).unwrap(),
        baseline_mse,
    }
}

struct Fits {
    seeds: Vec<u64>,
    results: BTreeMap<Job, FitResult>,
}

impl Fits {
    fn collect(&self, scenario: u8, n_rep: usize, prior: PriorKind, f: impl Fn(&FitResult) -> f64) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|&seed| f(&self.results[&Job { scenario, n_rep, prior, seed }]))
            .collect()
    }
}

fn simulation_fits(seeds: Vec<u64>) -> Fits {
    let mut jobs = Vec::new();
    for &seed in &seeds {
        for (scenario, n_rep, prior) in [
            (3, 3, PriorKind::Hc),
            (2, 3, PriorKind::Hc),
            (1, 1, PriorKind::Hc),
            (1, 3, PriorKind::Hc),
            (1, 5, PriorKind::Hc),
            (1, 1, PriorKind::Ig),
        ] {
            jobs.push(Job { scenario, n_rep, prior, seed });
        }
    }
    let results = jobs.par_iter().map(|&j| (j, run_job(j))).collect();
    Fits { seeds, results }
}

fn criterion_1(f: &Fits) -> Outcome {
    let v = f.collect(3, 3, PriorKind::Hc, |r| r.mse_delta);
    let m = median(&v);
    outcome(
        1,
        "headline MSE_delta, scenario 3, n_rep 3, HC(1)",
        (0.19e-3..=0.77e-3).contains(&m),
        format!("median {:.3}e-3 in [0.19, 0.77]e-3 (seeds: {})", m * 1e3, fmt_e3(&v)),
    )
}

fn criterion_2(f: &Fits) -> Outcome {
    let comb = f.collect(3, 3, PriorKind::Hc, |r| r.lpml_combination);
    let all = f.collect(3, 3, PriorKind::Hc, |r| r.lpml_all);
    let m = median(&comb);
    let target = 421.0;
    outcome(
        2,
        "LPML, scenario 3, n_rep 3, HC(1)",
        (m - target).abs() <= 0.1 * target,
        format!(
            "median over combination wells {m:.1} vs {target} +/- 10% (seeds: {}); all wells median {:.1}",
            comb.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(", "),
            median(&all)
        ),
    )
}

fn criterion_3(f: &Fits) -> Outcome {
    let meds: Vec<(usize, f64)> = [1, 3, 5]
        .iter()
        .map(|&n| (n, median(&f.collect(1, n, PriorKind::Hc, |r| r.mse_delta))))
        .collect();
    let pass = meds.windows(2).all(|w| w[1].1 < w[0].1);
    outcome(
        3,
        "replicate trend, scenario 1, HC(1)",
        pass,
        meds.iter()
            .map(|(n, m)| format!("n_rep {n}: {:.3}e-3 (seeds: {})", m * 1e3, fmt_e3(&f.collect(1, *n, PriorKind::Hc, |r| r.mse_delta))))
            .collect::<Vec<_>>()
            .join(" > "),
    )
}

fn criterion_4(f: &Fits) -> Outcome {
    let ig = f.collect(1, 1, PriorKind::Ig, |r| r.mse_delta);
    let hc = f.collect(1, 1, PriorKind::Hc, |r| r.mse_delta);
    let ratio = median(&ig) / median(&hc);
    outcome(
        4,
        "prior sensitivity, IG(3,2) vs HC(1), scenario 1, n_rep 1",
        ratio >= 10.0,
        format!("median ratio {ratio:.2} (need >= 10); IG seeds: {}; HC seeds: {}", fmt_e3(&ig), fmt_e3(&hc)),
    )
}

fn criterion_5(f: &Fits) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for scenario in 1..=3u8 {
        let bayes = median(&f.collect(scenario, 3, PriorKind::Hc, |r| r.mse_delta));
        let mut line = format!("scenario {scenario}: model {:.3}e-3", bayes * 1e3);
        for m in BaselineMethod::ALL {
            let b = median(&f.collect(scenario, 3, PriorKind::Hc, |r| r.baseline_mse[m.name()]));
            let ok = bayes < b;
            pass &= ok;
            line += &format!(", {} {:.3}e-3{}", m.name(), b * 1e3, if ok { "" } else { " (not beaten)" });
        }
        parts.push(line);
    }
    outcome(5, "baseline dominance, n_rep 3", pass, parts.join("; "))
}

fn ks_ok(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    ks_p_value(ks_statistic(draws, cdf), draws.len())
}

fn toy_plate() -> PlateDataset {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    PlateDataset::from_fn(
        vec![0.0, 0.01, 0.1, 1.0, 10.0],
        vec![0.0, 0.01, 0.1, 1.0, 10.0],
        2,
        ["a".into(), "b".into()],
        |i, j, _| 1.0 / (1.0 + 0.3 * i as f64) / (1.0 + 0.5 * j as f64) + 0.05 * (rng.random::<f64>() - 0.5),
    )
    .unwrap()
}

/// Prior recovery, conjugate draws and a two-parameter quadrature check.
fn criterion_6() -> Outcome {
    let mut worst = (String::new(), 1.0f64);
    let mut note = |name: String, p: f64| {
        if p < worst.1 {
            worst = (name, p);
        }
    };

    let data = toy_plate();
    let grid = data.log_grid().unwrap();
    let g = GammaPrior { shape: 2.0, rate: 1.0 };
    let (a, b) = (3.0, 2.0);
    let priors = PriorSpec { lambda1: g, lambda2: g, b1: g, b2: g, variance: VariancePrior::InverseGamma { shape: a, rate: b } };
    let spec = SplineSpec::for_grid(&grid, 4, 4, 1.0).unwrap();
    let cfg = ChainConfig {
        n_iter: 5_000 + 100_000 * 100,
        burn_in: 5_000,
        thin: 100,
        adapt_start: 1_000,
        seed: 17,
        prior_only: true,
        ..ChainConfig::default()
    };
    let init = ParameterState::initial(&grid, &spec);
    let chain = run_chain_from(&data, &priors, &spec, &cfg, init.clone(), 0).unwrap();
    let t = StudentsT::new(0.0, (b / a).sqrt(), 2.0 * a).unwrap();
    let gamma = Gamma::new(2.0, 1.0).unwrap();
    let ig = InverseGamma::new(a, b).unwrap();
    for phi in Phi::ALL {
        note(phi.name().into(), ks_ok(&chain.trace(|s| s.phi(phi)), |x| t.cdf(x)));
        note(format!("sigma2_{}", phi.name()), ks_ok(&chain.trace(|s| s.sigma2(phi)), |x| ig.cdf(x)));
    }
    note("sigma2_eps".into(), ks_ok(&chain.trace(|s| s.sigma2_eps), |x| ig.cdf(x)));
    note("lambda1".into(), ks_ok(&chain.trace(|s| s.lambda1), |x| gamma.cdf(x)));
    note("lambda2".into(), ks_ok(&chain.trace(|s| s.lambda2), |x| gamma.cdf(x)));
    note("b1".into(), ks_ok(&chain.trace(|s| s.b1), |x| gamma.cdf(x)));
    note("b2".into(), ks_ok(&chain.trace(|s| s.b2), |x| gamma.cdf(x)));
    // The coefficient block is tested as a whole: under vec(C) ~ N(0, Σ) the
    // form vec(C)ᵀ Σ⁻¹ vec(C) is chi-squared with K1·K2 degrees of freedom.
    let (pr, pc) = spec.precisions().unwrap();
    let quad = chain.trace(|s| (&pr * &s.c * &pc).dot(&s.c));
    let chi = ChiSquared::new((pr.nrows() * pc.nrows()) as f64).unwrap();
    note("C".into(), ks_ok(&quad, |x| chi.cdf(x)));
    let prior_ok = worst.1 > 0.01;

    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let prior = VariancePrior::InverseGamma { shape: 1.0, rate: 1.0 };
    let draws: Vec<f64> = (0..100_000).map(|_| update_variance(1.0, 0.0, 1, &prior, 0.1, &mut rng).value).collect();
    let want = InverseGamma::new(1.5, 1.0).unwrap();
    let p_conj = ks_ok(&draws, |x| want.cdf(x));

    let tv = detailed_balance_tv(&data);
    outcome(
        6,
        "sampler correctness",
        prior_ok && p_conj > 0.01 && tv < 0.03,
        format!(
            "prior recovery over {} draws, smallest KS p = {:.3} ({}); conjugate IG p = {p_conj:.3}; two-parameter TV = {:.2}%",
            chain.len(),
            worst.1,
            worst.0,
            tv * 100.0
        ),
    )
}

fn detailed_balance_tv(data: &PlateDataset) -> f64 {
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
    let chain = run_chain_from(data, &priors, &spec, &cfg, init.clone(), 0).unwrap();
    let post = Posterior::new(data, priors, &spec, LinearScale::Log10, false).unwrap();
    let log_post = |m: f64, l: f64| {
        let mut s = init.clone();
        (s.m1, s.lambda1) = (m, l);
        post.log_density(&s).unwrap()
    };
    let nc = 200;
    let mut pts = Vec::with_capacity(nc * nc);
    for a in 0..nc {
        for b in 0..nc {
            let m = -6.0 + 12.0 * (a as f64 + 0.5) / nc as f64;
            let l = 1e-3 + 6.0 * (b as f64 + 0.5) / nc as f64;
            pts.push((m, l, log_post(m, l)));
        }
    }
    let max_lp = pts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<_> = pts.iter().filter(|p| p.2 > max_lp - 20.0).collect();
    let lo_hi = |f: fn(&(f64, f64, f64)) -> f64| {
        (keep.iter().map(|p| f(p)).fold(f64::INFINITY, f64::min), keep.iter().map(|p| f(p)).fold(f64::NEG_INFINITY, f64::max))
    };
    let (m0, m1) = lo_hi(|p| p.0);
    let (l0, l1) = lo_hi(|p| p.1);
    let (bm, bl) = ((m0 - 0.1, m1 + 0.1), ((l0 - 0.05).max(1e-6), l1 + 0.05));
    let bins = 10;
    let bin_of = |m: f64, l: f64| -> usize {
        let a = ((m - bm.0) / (bm.1 - bm.0) * bins as f64).floor();
        let b = ((l - bl.0) / (bl.1 - bl.0) * bins as f64).floor();
        if a >= 0.0 && b >= 0.0 && a < bins as f64 && b < bins as f64 {
            a as usize * bins + b as usize
        } else {
            bins * bins
        }
    };
    let mut quad = vec![0.0; bins * bins + 1];
    let nf = 400;
    for a in 0..nf {
        for b in 0..nf {
            let m = bm.0 + (bm.1 - bm.0) * (a as f64 + 0.5) / nf as f64;
            let l = bl.0 + (bl.1 - bl.0) * (b as f64 + 0.5) / nf as f64;
            quad[bin_of(m, l)] += (log_post(m, l) - max_lp).exp();
        }
    }
    let mut hist = vec![0.0; bins * bins + 1];
    for s in &chain.samples {
        hist[bin_of(s.m1, s.lambda1)] += 1.0;
    }
    total_variation(&hist, &quad)
}

fn criterion_7() -> Outcome {
    let mut fails = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut link_ok = true;
    for _ in 0..1_000_000 {
        let p0: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        let b1 = 10f64.powf(rng.random_range(-3.0..2.0));
        let b2 = 10f64.powf(rng.random_range(-3.0..2.0));
        let bb: f64 = rng.random_range(-50.0..50.0);
        let g = link_g(bb, p0, b1, b2);
        link_ok &= g >= -p0 && g <= 1.0 - p0;
    }
    if !link_ok {
        fails.push("link range");
    }

    let axis = AxisSpline::new(-4.0, 5.0, 6).unwrap();
    let pou = (0..=1000).all(|k| {
        let x = -4.0 + 9.0 * k as f64 / 1000.0;
        (axis.eval(x).unwrap().sum() - 1.0).abs() < 1e-12
    });
    if !pou {
        fails.push("partition of unity");
    }

    let unit = MonoFit { m: 0.0, lambda: 1.0, rss: 0.0, lambda_at_boundary: false, iterations: 0 };
    if (loewe_cell(1.0, 1.0, &unit, &unit).y - 1.0 / 3.0).abs() > 1e-9 {
        fails.push("Loewe hand case");
    }

    let rv_ok = [0.0, 0.3, 1.0].iter().all(|&c| {
        let s = SurfaceGrid::new(
            synergy_core::nalgebra::DMatrix::from_element(5, 4, c),
            vec![0.0, 1.0, 2.5, 3.0, 4.0],
            vec![-1.0, 0.0, 2.0, 3.0],
            SurfaceKind::Other,
        )
        .unwrap();
        (rvus(&s, 0.0, 1.0).unwrap() - c).abs() < 1e-15
    });
    if !rv_ok {
        fails.push("rVUS of constants");
    }

    let sym = delta_at(0.0, 0.0, 3).unwrap() == 0.0
        && (0..1000).all(|_| {
            let (x1, x2): (f64, f64) = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            (delta_at(x1, x2, 3).unwrap() + delta_at(-x1, -x2, 3).unwrap()).abs() < 1e-15
        });
    if !sym {
        fails.push("scenario 3 antisymmetry");
    }
    outcome(
        7,
        "analytic suite",
        fails.is_empty(),
        if fails.is_empty() {
            "link range on 1e6 points, partition of unity, Loewe y(1,1) = 1/3, constant rVUS, scenario 3 at origin".into()
        } else {
            format!("failed: {}", fails.join(", "))
        },
    )
}

fn criterion_8() -> Outcome {
    let grid = default_grid();
    let r1 = (grid.logc1[1], *grid.logc1.last().unwrap());
    let r2 = (grid.logc2[1], *grid.logc2.last().unwrap());
    let (d1, d2) = (dss(0.0, 0.33, r1, 0.1).unwrap(), dss(4.96, 0.31, r2, 0.1).unwrap());
    let plate = sample_plate(&SimScenario::new(1, NoiseFamily::Normal, 3, 1).unwrap()).unwrap();
    let (p1, p2) = monotherapy_points(&plate.data).unwrap();
    let (f1, f2) = (fit_2ll(&p1).unwrap(), fit_2ll(&p2).unwrap());
    let (e1, e2) = (dss(f1.m, f1.lambda, r1, 0.1).unwrap(), dss(f2.m, f2.lambda, r2, 0.1).unwrap());
    outcome(
        8,
        "DSS ordering of the simulation monotherapies",
        d1 > d2 && e1 > e2,
        format!(
            "(0, 0.33) vs (4.96, 0.31): {d1:.2} > {d2:.2}; fitted ({:.2}, {:.2}) vs ({:.2}, {:.2}): {e1:.2} > {e2:.2}",
            f1.m, f1.lambda, f2.m, f2.lambda
        ),
    )
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_synergy");
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str], out: &Path| {
        let st = Command::new(bin).args(args).arg("--out").arg(out).output().unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    };
    let sim = dir.path().join("sim");
    run(&["simulate", "--scenario", "3", "--nrep", "3", "--seed", "11"], &sim);
    let plate = sim.join("plate.csv");
    let mut bytes = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("fit{k}"));
        run(&["fit", "--data", plate.to_str().unwrap(), "--seed", "11", "--chains", "2"], &out);
        bytes.push(std::fs::read(out.join("samples.csv")).unwrap());
    }
    outcome(
        9,
        "end-to-end determinism",
        bytes[0] == bytes[1] && !bytes[0].is_empty(),
        format!("two `synergy fit` runs, seed 11, 2 chains: samples.csv {} bytes, identical = {}", bytes[0].len(), bytes[0] == bytes[1]),
    )
}

fn main() {
    let n_seeds: u64 = std::env::var("ACCEPTANCE_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(5);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let start = Instant::now();

    let fits = simulation_fits((1..=n_seeds).collect());
    let mut outcomes = vec![
        criterion_1(&fits),
        criterion_2(&fits),
        criterion_3(&fits),
        criterion_4(&fits),
        criterion_5(&fits),
    ];
    outcomes.push(criterion_6());
    outcomes.push(criterion_7());
    outcomes.push(criterion_8());
    outcomes.push(criterion_9());

    println!();
    for o in &outcomes {
        println!("{} [{}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("\nacceptance: {passed}/{} criteria passed in {:.0?}", outcomes.len(), start.elapsed());
    if strict && passed < outcomes.len() {
        std::process::exit(1);
    }
}
