use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use synergy_core::mcmc::PosteriorChain;
use synergy_core::model::normal_ln_pdf;
use synergy_core::simgen::sample_plate;
use synergy_core::summaries::{mse_surface, posterior_mean_surfaces, MseReport};
use synergy_core::{
    baseline, run_chains, summarize, BaselineMethod, Error, LinearScale, NoiseFamily, PlateDataset,
    ResponseModel, SimScenario, SurfaceGrid, VariancePrior,
};

use crate::config::RunConfig;
use crate::io::{self, Outputs};
use crate::{BaselineArgs, Cli, Command, FitArgs, ModelArgs, PriorFamily, Scale, SimulateArgs, SummarizeArgs};

/// Runs one parsed command; returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Fit(a) => fit(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Summarize(a) => summarize_cmd(&a),
        Command::Baseline(a) => baseline_cmd(&a),
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

fn apply_model_args(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(s) = m.linear_scale {
        cfg.chain.linear_scale = match s {
            Scale::Log10 => LinearScale::Log10,
            Scale::Raw => LinearScale::Raw,
        };
    }
    if let Some(k) = m.k1 {
        cfg.spline.k1 = k;
    }
    if let Some(k) = m.k2 {
        cfg.spline.k2 = k;
    }
}

/// Defaults, then the config file, then command-line flags.
pub fn fit_config(a: &FitArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(a.model.config.as_deref())?;
    apply_model_args(&mut cfg, &a.model);
    let c = &mut cfg.chain;
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.n_iter {
        c.n_iter = v;
    }
    if let Some(v) = a.burn_in {
        c.burn_in = v;
    }
    if let Some(v) = a.thin {
        c.thin = v;
    }
    if let Some(v) = a.adapt_start {
        c.adapt_start = v;
    }
    if let Some(v) = a.chains {
        cfg.n_chains = v;
    }
    if let Some(v) = a.ridge {
        cfg.spline.penalty_ridge = v;
    }
    let family = a.prior.or(match cfg.priors.variance {
        VariancePrior::HalfCauchy { .. } if a.ig_shape.is_some() || a.ig_rate.is_some() => Some(PriorFamily::Ig),
        VariancePrior::InverseGamma { .. } if a.hc_scale.is_some() => Some(PriorFamily::Hc),
        _ => None,
    });
    cfg.priors.variance = match (family, cfg.priors.variance) {
        (Some(PriorFamily::Hc), VariancePrior::HalfCauchy { scale }) | (None, VariancePrior::HalfCauchy { scale }) => {
            VariancePrior::HalfCauchy { scale: a.hc_scale.unwrap_or(scale) }
        }
        (Some(PriorFamily::Hc), _) => VariancePrior::HalfCauchy { scale: a.hc_scale.unwrap_or(1.0) },
        (Some(PriorFamily::Ig), VariancePrior::InverseGamma { shape, rate })
        | (None, VariancePrior::InverseGamma { shape, rate }) => VariancePrior::InverseGamma {
            shape: a.ig_shape.unwrap_or(shape),
            rate: a.ig_rate.unwrap_or(rate),
        },
        (Some(PriorFamily::Ig), _) => VariancePrior::InverseGamma {
            shape: a.ig_shape.unwrap_or(3.0),
            rate: a.ig_rate.unwrap_or(2.0),
        },
    };
    if a.prior == Some(PriorFamily::Hc) && (a.ig_shape.is_some() || a.ig_rate.is_some()) {
        return Err(invalid("--ig-shape/--ig-rate conflict with --prior hc"));
    }
    if a.prior == Some(PriorFamily::Ig) && a.hc_scale.is_some() {
        return Err(invalid("--hc-scale conflicts with --prior ig"));
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct AcceptanceRow {
    block: String,
    rate: f64,
    proposed: u64,
    accepted: u64,
    auto_rejected: u64,
}

fn mse_report(truth: &Path, data: &PlateDataset, delta: &SurfaceGrid, p: &SurfaceGrid) -> Result<MseReport> {
    let (td, tp) = io::read_truth(truth, data)?;
    Ok(MseReport { delta: mse_surface(delta, &td)?, p: mse_surface(p, &tp)? })
}

/// Posterior-mean surfaces, summary and optional MSE for a finished chain.
fn write_fit_outputs(
    out: &mut Outputs,
    chain: &PosteriorChain,
    data: &PlateDataset,
    model: &ResponseModel,
    cfg: &RunConfig,
    truth: Option<&Path>,
    data_path: &Path,
) -> Result<()> {
    let mut report = summarize(chain, data, model, &cfg.summary)?;
    let [p0, delta, p] = posterior_mean_surfaces(chain, model)?;
    if let Some(t) = truth {
        report.mse = Some(mse_report(t, data, &delta, &p)?);
    }
    let acceptance: Vec<AcceptanceRow> = chain
        .acceptance
        .iter()
        .map(|a| AcceptanceRow {
            block: a.block.name().to_string(),
            rate: a.rate(),
            proposed: a.proposed,
            accepted: a.accepted,
            auto_rejected: a.auto_rejected,
        })
        .collect();
    let summary = json!({
        "seed": cfg.chain.seed,
        "n_chains": chain.chain_indices.len(),
        "data": {
            "path": data_path.display().to_string(),
            "n1": data.n1(),
            "n2": data.n2(),
            "n_rep": data.n_rep(),
        },
        "summary": report,
        "acceptance": acceptance,
        "config": cfg,
    });
    io::ensure_finite(&summary, "summary")?;
    io::write_json(&out.file("summary.json"), &summary)?;
    io::write_surface(&out.file("surface_p.csv"), &p)?;
    io::write_surface(&out.file("surface_p0.csv"), &p0)?;
    io::write_surface(&out.file("surface_delta.csv"), &delta)?;
    if let Some(mse) = report.mse {
        io::write_json(&out.file("mse.json"), &mse)?;
    }
    Ok(())
}

fn fit(a: &FitArgs) -> Result<Vec<PathBuf>> {
    let cfg = fit_config(a)?;
    let data = io::read_plate(&a.data)?;
    let grid = data.log_grid()?;
    let spec = cfg.spline.spec(&grid)?;
    if let Some(t) = &a.truth {
        io::read_truth(t, &data)?;
    }
    let chain = run_chains(&data, &cfg.priors, &spec, &cfg.chain, cfg.n_chains)?;
    let model = ResponseModel::new(grid, spec, cfg.chain.linear_scale)?;

    let mut out = Outputs::new(&a.output.out)?;
    io::write_samples(&out.file("samples.csv"), &chain)?;
    write_fit_outputs(&mut out, &chain, &data, &model, &cfg, a.truth.as_deref(), &a.data)?;
    Ok(out.keep())
}

fn simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let noise: NoiseFamily = a.noise.parse()?;
    let mut s = SimScenario::new(a.scenario, noise, a.nrep, a.seed)?;
    s.sigma = a.sigma;
    s.validate()?;
    let plate = sample_plate(&s)?;
    let mut out = Outputs::new(&a.output.out)?;
    io::write_plate(&out.file("plate.csv"), &plate.data)?;
    io::write_truth(&out.file("truth.csv"), &plate)?;
    Ok(out.keep())
}

fn summarize_cmd(a: &SummarizeArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(a.model.config.as_deref())?;
    apply_model_args(&mut cfg, &a.model);
    let data = io::read_plate(&a.data)?;
    let samples = io::read_samples(&a.samples)?;
    let (k1, k2) = samples[0].c.shape();
    if a.model.k1.is_some_and(|k| k != k1) || a.model.k2.is_some_and(|k| k != k2) {
        return Err(invalid(format!("samples carry a {k1}x{k2} coefficient grid; --k1/--k2 disagree")));
    }
    cfg.spline.k1 = k1;
    cfg.spline.k2 = k2;
    cfg.validate()?;
    let grid = data.log_grid()?;
    let spec = cfg.spline.spec(&grid)?;
    for s in &samples {
        s.validate(&spec).with_context(|| format!("sample in {}", a.samples.display()))?;
    }
    let model = ResponseModel::new(grid, spec, cfg.chain.linear_scale)?;

    let mut dens = Vec::with_capacity(samples.len() * data.n_obs());
    for s in &samples {
        let p = model.surfaces(s)?.p;
        for i in 0..data.conc1.len() {
            for j in 0..data.conc2.len() {
                dens.extend(data.cell(i, j).iter().map(|&y| normal_ln_pdf(y, p[(i, j)], s.sigma2_eps)));
            }
        }
    }
    let chain = PosteriorChain::from_parts(samples, dens, data.n_obs(), cfg.chain.clone())?;
    let mut out = Outputs::new(&a.output.out)?;
    write_fit_outputs(&mut out, &chain, &data, &model, &cfg, a.truth.as_deref(), &a.data)?;
    Ok(out.keep())
}

fn baseline_cmd(a: &BaselineArgs) -> Result<Vec<PathBuf>> {
    let methods: Vec<BaselineMethod> = if a.method.is_empty() {
        BaselineMethod::ALL.to_vec()
    } else {
        a.method.iter().map(|m| m.parse()).collect::<synergy_core::Result<_>>()?
    };
    let data = io::read_plate(&a.data)?;
    let truth = a.truth.as_ref().map(|t| io::read_truth(t, &data)).transpose()?;
    let mut out = Outputs::new(&a.output.out)?;
    let mut report = serde_json::Map::new();
    for m in methods {
        let b = if a.per_replicate {
            synergy_core::baselines::baseline_replicate_averaged(m, &data)?
        } else {
            baseline(m, &data)?
        };
        io::write_surface(&out.file(&format!("baseline_{}_reference.csv", m.name())), &b.reference)?;
        io::write_surface(&out.file(&format!("baseline_{}_delta.csv", m.name())), &b.delta)?;
        let mut entry = json!({
            "fit1": { "m": b.fit1.m, "lambda": b.fit1.lambda, "rss": b.fit1.rss },
            "fit2": { "m": b.fit2.m, "lambda": b.fit2.lambda, "rss": b.fit2.rss },
            "flagged_wells": b.flagged,
        });
        if let Some((td, _)) = &truth {
            entry["mse_delta"] = json!(mse_surface(&b.delta, td)?);
        }
        report.insert(m.name().to_string(), entry);
    }
    let report = serde_json::Value::Object(report);
    io::ensure_finite(&report, "baseline")?;
    io::write_json(&out.file("baseline.json"), &report)?;
    Ok(out.keep())
}

/// Process exit code for an error: 2 for numerical breakdown, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_numeric() => 2,
        _ => 1,
    }
}
