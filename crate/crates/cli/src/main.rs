// SPDX-License-Identifier: Apache-2.0

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dpcate::accountant::{mu_from_eps_delta, PrivacyBudget};
use dpcate::harness::{run_experiment, workers_from_env, ExperimentConfig};
use dpcate::metalearn::{fit_cate, CateOptions, LearnerKind, Observation, ObservationSet};
use dpcate::synthdata::{generate, Setup, SetupSpec, DEFAULT_CORRELATION_SEED};
use dpcate::tradeoff::{compose_parallel, EpsDelta, TradeoffCurve};
use dpcate::FeatureSpec;
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "dpcate",
    version,
    about = "Differentially private CATE estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compose trade-off curves of modules run on disjoint data.
    Tradeoff(TradeoffArgs),
    /// Draw a synthetic data set from one of the setups A-E.
    Simulate(SimulateArgs),
    /// Fit a CATE learner on a CSV file.
    Fit(FitArgs),
    /// Run an experiment grid from a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct TradeoffArgs {
    /// An (ε, δ) module budget as `eps,delta`; repeatable.
    #[arg(long = "eps-delta", value_parser = parse_pair)]
    eps_delta: Vec<(f64, f64)>,
    /// A μ-GDP module; repeatable.
    #[arg(long)]
    gdp: Vec<f64>,
    /// Tangent count of each Gaussian curve.
    #[arg(long, default_value_t = 256)]
    grid: usize,
    /// δ at which the certified ε of the composed curve is reported.
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Print the Gaussian-DP level of every `--eps-delta` budget instead.
    #[arg(long)]
    to_gdp: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    setup: Setup,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CORRELATION_SEED)]
    correlation_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    learner: LearnerKind,
    /// CSV with header `y,t,x1,...,xd`; other columns are ignored.
    #[arg(long)]
    train: PathBuf,
    /// CSV with columns `x1,...,xd` to predict τ̂ for.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Per-module ε; omit to fit without noise.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = dpcate::harness::DEFAULT_NUM_BINS)]
    bins: usize,
    /// Public bounds of every feature as `lower,upper`.
    #[arg(long, value_parser = parse_pair, default_value = "-5,5")]
    bounds: (f64, f64),
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads; defaults to DPCATE_WORKERS, then to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Tradeoff(a) => tradeoff(a),
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn tradeoff(a: TradeoffArgs) -> Result<()> {
    let mut out = std::io::stdout().lock();
    if a.to_gdp {
        writeln!(out, "epsilon,delta,mu")?;
        for &(e, d) in &a.eps_delta {
            let mu = mu_from_eps_delta(EpsDelta::new(e, d)?)?;
            writeln!(out, "{e},{d},{mu}")?;
        }
        return Ok(());
    }
    let mut curves = Vec::new();
    for &(e, d) in &a.eps_delta {
        curves.push(TradeoffCurve::eps_delta(EpsDelta::new(e, d)?));
    }
    for &mu in &a.gdp {
        curves.push(TradeoffCurve::gaussian(mu, a.grid)?);
    }
    if curves.is_empty() {
        bail!("give at least one --eps-delta or --gdp");
    }
    let composed = compose_parallel(&curves)?;
    writeln!(out, "alpha,beta")?;
    for (x, y) in composed.breakpoints() {
        writeln!(out, "{x},{y}")?;
    }
    match composed.certified_epsilon(a.delta) {
        Some(e) => eprintln!("certified: ({e}, {})-DP", a.delta),
        None => eprintln!("certified: no finite epsilon at delta = {}", a.delta),
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = SetupSpec {
        setup: a.setup,
        correlation_seed: a.correlation_seed,
    };
    let sim = generate(&spec, a.n, a.seed)?;
    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let d = sim.data.dim();
    let mut header = vec!["y".to_string(), "t".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.push("tau_true".into());
    w.write_record(&header)?;
    for (z, tau) in sim.data.rows.iter().zip(&sim.tau_true) {
        let mut rec = vec![z.y.to_string(), u8::from(z.t).to_string()];
        rec.extend(z.x.iter().map(|v| v.to_string()));
        rec.push(tau.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Column indices of `x1, x2, …` in header order, stopping at the first gap.
fn feature_columns(header: &csv::StringRecord) -> Vec<usize> {
    let mut cols = Vec::new();
    while let Some(i) = header
        .iter()
        .position(|h| h.trim() == format!("x{}", cols.len() + 1))
    {
        cols.push(i);
    }
    cols
}

fn column(header: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .with_context(|| format!("{}: no column {name:?}", path.display()))
}

fn read_features(rec: &csv::StringRecord, cols: &[usize]) -> Result<Vec<f64>> {
    cols.iter()
        .map(|&c| Ok(rec[c].trim().parse::<f64>()?))
        .collect()
}

fn read_train(
    path: &Path,
    specs: impl Fn(usize) -> Result<Vec<FeatureSpec>>,
) -> Result<ObservationSet> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let (yc, tc) = (column(&header, "y", path)?, column(&header, "t", path)?);
    let xc = feature_columns(&header);
    if xc.is_empty() {
        bail!("{}: no feature columns x1, x2, ...", path.display());
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let t = match rec[tc].trim() {
            "0" | "0.0" => false,
            "1" | "1.0" => true,
            other => bail!(
                "{}: row {}: t must be 0 or 1, got {other:?}",
                path.display(),
                line + 1
            ),
        };
        rows.push(Observation {
            y: rec[yc].trim().parse()?,
            t,
            x: read_features(&rec, &xc)?,
        });
    }
    Ok(ObservationSet::new(rows, specs(xc.len())?)?)
}

fn read_test(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let xc = feature_columns(&r.headers()?.clone());
    if xc.len() < dim {
        bail!(
            "{}: expected {dim} feature columns, found {}",
            path.display(),
            xc.len()
        );
    }
    r.records()
        .map(|rec| read_features(&rec?, &xc[..dim]))
        .collect()
}

fn fit(a: FitArgs) -> Result<()> {
    let (lo, hi) = a.bounds;
    let data = read_train(&a.train, |d| Ok(vec![FeatureSpec::new(lo, hi, a.bins)?; d]))?;
    let budget = a
        .epsilon
        .map(|e| PrivacyBudget::new(e, a.delta))
        .transpose()?;
    let model = fit_cate(&data, &CateOptions::uniform(a.learner, budget), a.seed)?;

    fs::create_dir_all(&a.out_dir)?;
    for (name, doc) in model.module_documents()? {
        fs::write(a.out_dir.join(format!("{name}.json")), doc)?;
    }
    let modules: Vec<_> = a
        .learner
        .module_names()
        .iter()
        .zip(&model.audit)
        .map(|(name, audit)| {
            json!({
                "module": name,
                "rows": audit.rows_read.len(),
                "releases": audit.releases,
                "epsilon": budget.map(|b| b.eps_delta.epsilon),
                "delta": budget.map(|b| b.eps_delta.delta),
                "mu": budget.map(|b| b.mu),
            })
        })
        .collect();
    let report = json!({
        "learner": a.learner,
        "modules": modules,
        "composed_breakpoints": model.composed_privacy.breakpoints(),
        "delta": a.delta,
        "certified_epsilon": model.composed_privacy.certified_epsilon(a.delta),
    });
    fs::write(
        a.out_dir.join("privacy.json"),
        serde_json::to_string_pretty(&report)?,
    )?;

    if let Some(test) = &a.test {
        let xs = read_test(test, data.dim())?;
        let mut w = csv::Writer::from_path(a.out_dir.join("predictions.csv"))?;
        w.write_record(["tau_hat"])?;
        for p in model.predict_many(&xs)? {
            w.write_record([p.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)
        .with_context(|| format!("loading {}", a.config.display()))?;
    if cfg.cells().is_empty() {
        eprintln!("warning: the config selects no cells; nothing to run");
    }
    let out = run_experiment(&cfg, a.workers.or_else(workers_from_env))?;
    out.write(&a.out_dir)?;
    eprintln!(
        "{} cells written to {}, {} failed",
        out.records.len(),
        a.out_dir.display(),
        out.failures.len()
    );
    Ok(())
}
