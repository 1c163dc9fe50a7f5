// SPDX-License-Identifier: Apache-2.0

//! Experiment runner: grids over setup × learner × n × ε × repetition.
//!
//! Each cell trains the learner twice, on two independent fresh draws of
//! size `n`, and evaluates both predictors and their average on a fixed test
//! sample per setup. With `m₁, m₂` the two test MSEs and `m̄` the MSE of
//! the averaged predictor,
//!
//! ```text
//! mse  = (m₁ + m₂)/2          E = B + V
//! bias = 2 m̄ − mse            E[m̄] = B + V/2
//! var  = 2 (mse − m̄)
//! ```
//!
//! where `B` is the integrated squared bias and `V` the integrated variance
//! of one predictor. Both estimates are unbiased and may come out negative;
//! such rows carry a flag.
//!
//! Seeds are derived from cell coordinates, so output does not depend on
//! the number of workers or on scheduling.

use crate::accountant::PrivacyBudget;
use crate::error::{Error, Result};
use crate::metalearn::{fit_cate, CateOptions, LearnerHyper, LearnerKind};
use crate::rng;
use crate::synthdata::{self, Setup, SetupSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const WORKERS_ENV: &str = "DPCATE_WORKERS";
const TEST_STREAM: u64 = 0x7E57;
/// Bin count the default learner settings were calibrated with.
pub const DEFAULT_NUM_BINS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setups: Vec<Setup>,
    pub learners: Vec<LearnerKind>,
    pub sample_sizes: Vec<usize>,
    /// `inf` trains without noise.
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub ratios: Vec<f64>,
    pub reps: usize,
    pub test_size: usize,
    pub seed: u64,
    pub num_bins: usize,
    pub correlation_seed: u64,
    /// Train both models of a cell on the same draw with the same seed.
    pub identical_training: bool,
    pub hyper: LearnerHyper,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setups: vec![Setup::A, Setup::B, Setup::C],
            learners: LearnerKind::ALL.to_vec(),
            sample_sizes: vec![500, 2000, 8000],
            epsilons: vec![1.0, 4.0, 16.0],
            delta: 1e-5,
            ratios: vec![0.25, 0.25, 0.5],
            reps: 5,
            test_size: 50_000,
            seed: 20_240_601,
            num_bins: DEFAULT_NUM_BINS,
            correlation_seed: synthdata::DEFAULT_CORRELATION_SEED,
            identical_training: false,
            hyper: LearnerHyper::default(),
        }
    }
}

impl ExperimentConfig {
    /// All setups, learners, `n ∈ {500, …, 32000}` and `ε ∈ {1, 2, 4, 8, 16}`.
    pub fn full_grid() -> Self {
        Self {
            setups: Setup::ALL.to_vec(),
            sample_sizes: vec![500, 1000, 2000, 4000, 8000, 16000, 32000],
            epsilons: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            test_size: 250_000,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if self.reps == 0 || self.test_size == 0 {
            return bad("reps and test_size must be positive");
        }
        if self.sample_sizes.contains(&0) {
            return bad("sample sizes must be positive");
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0) || e.is_nan()) {
            return bad("epsilons must be positive (inf for non-private)");
        }
        if self.num_bins < 2 {
            return bad("num_bins must be at least 2");
        }
        Ok(())
    }

    /// Cells in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &setup in &self.setups {
            for &learner in &self.learners {
                for &n in &self.sample_sizes {
                    for &epsilon in &self.epsilons {
                        for rep in 0..self.reps {
                            out.push(Cell {
                                setup,
                                learner,
                                n,
                                epsilon,
                                rep,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub setup: Setup,
    pub learner: LearnerKind,
    pub n: usize,
    pub epsilon: f64,
    pub rep: usize,
}

impl Cell {
    pub fn seed(&self, root: u64) -> u64 {
        rng::derive(
            root,
            &[
                self.setup as u64,
                self.learner as u64,
                self.n as u64,
                self.epsilon.to_bits(),
                self.rep as u64,
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub setup: Setup,
    pub learner: LearnerKind,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rep: usize,
    pub mse: f64,
    pub bias: f64,
    pub variance: f64,
    pub flag: String,
    pub seed: u64,
}

/// `(mse, bias, variance)` from the two single-model MSEs and the MSE of
/// their average.
pub fn mse_bias_var(mse1: f64, mse2: f64, mse_avg: f64) -> (f64, f64, f64) {
    let mse = 0.5 * (mse1 + mse2);
    let bias = 2.0 * mse_avg - mse;
    let variance = 2.0 * (mse - mse_avg);
    (mse, bias, variance)
}

fn flag_for(bias: f64, variance: f64) -> String {
    match (bias < 0.0, variance < 0.0) {
        (true, true) => "negative_bias_variance",
        (true, false) => "negative_bias",
        (false, true) => "negative_variance",
        (false, false) => "",
    }
    .to_string()
}

/// Fixed evaluation sample of one setup: covariates and true effects.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub x: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
}

impl TestSet {
    pub fn draw(spec: &SetupSpec, size: usize, root: u64) -> Result<Self> {
        let x = synthdata::covariates(
            spec,
            size,
            rng::derive(root, &[TEST_STREAM, spec.setup as u64]),
        )?;
        let tau = x.iter().map(|v| spec.setup.effect(v)).collect();
        Ok(Self { x, tau })
    }
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truth.len() as f64
}

pub fn run_cell(cfg: &ExperimentConfig, test: &TestSet, cell: &Cell) -> Result<MetricsRecord> {
    let seed = cell.seed(cfg.seed);
    let spec = SetupSpec {
        setup: cell.setup,
        correlation_seed: cfg.correlation_seed,
    };
    let budget = if cell.epsilon.is_finite() {
        Some(PrivacyBudget::new(cell.epsilon, cfg.delta)?)
    } else {
        None
    };
    let opts = CateOptions {
        ratios: cfg.ratios.clone(),
        hyper: cfg.hyper,
        ..CateOptions::uniform(cell.learner, budget)
    };
    let second = if cfg.identical_training { 1 } else { 2 };
    let mut preds = Vec::with_capacity(2);
    for k in [1, second] {
        let train = synthdata::generate(&spec, cell.n, rng::derive(seed, &[k]))?;
        let data = train.data.with_num_bins(cfg.num_bins)?;
        let model = fit_cate(&data, &opts, rng::derive(seed, &[k + 2]))?;
        preds.push(model.predict_many(&test.x)?);
    }
    let avg: Vec<f64> = preds[0]
        .iter()
        .zip(&preds[1])
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let (m, bias, variance) = mse_bias_var(
        mse(&preds[0], &test.tau),
        mse(&preds[1], &test.tau),
        mse(&avg, &test.tau),
    );
    Ok(MetricsRecord {
        setup: cell.setup,
        learner: cell.learner,
        n: cell.n,
        epsilon: cell.epsilon,
        delta: cfg.delta,
        rep: cell.rep,
        mse: m,
        bias,
        variance,
        flag: flag_for(bias, variance),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setup: Setup,
    pub learner: LearnerKind,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub reps: usize,
    pub mse_mean: f64,
    pub bias_mean: f64,
    pub variance_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub setup: Setup,
    pub learner: LearnerKind,
    pub n: usize,
    pub epsilon: f64,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
}

/// Worker count from `DPCATE_WORKERS`, if set and positive.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&w| w > 0)
}

pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cells = cfg.cells();
    if cells.is_empty() {
        return Ok(ExperimentOutput::default());
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers.or_else(workers_from_env) {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let tests: BTreeMap<Setup, TestSet> = cfg
            .setups
            .par_iter()
            .map(|&s| {
                let spec = SetupSpec {
                    setup: s,
                    correlation_seed: cfg.correlation_seed,
                };
                TestSet::draw(&spec, cfg.test_size, cfg.seed).map(|t| (s, t))
            })
            .collect::<Result<_>>()?;
        let results: Vec<Result<MetricsRecord>> = cells
            .par_iter()
            .map(|c| run_cell(cfg, &tests[&c.setup], c))
            .collect();
        let mut out = ExperimentOutput::default();
        for (cell, r) in cells.iter().zip(results) {
            match r {
                Ok(rec) => out.records.push(rec),
                Err(e) => out.failures.push(CellFailure {
                    setup: cell.setup,
                    learner: cell.learner,
                    n: cell.n,
                    epsilon: cell.epsilon,
                    rep: cell.rep,
                    message: e.to_string(),
                }),
            }
        }
        out.summary = summarize(&out.records);
        Ok(out)
    })
}

/// Per-(setup, learner, n, ε) means, in first-appearance order.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut groups: Vec<Vec<&MetricsRecord>> = Vec::new();
    for r in records {
        let pos = rows.iter().position(|s| {
            s.setup == r.setup
                && s.learner == r.learner
                && s.n == r.n
                && s.epsilon.to_bits() == r.epsilon.to_bits()
        });
        match pos {
            Some(i) => groups[i].push(r),
            None => {
                rows.push(SummaryRow {
                    setup: r.setup,
                    learner: r.learner,
                    n: r.n,
                    epsilon: r.epsilon,
                    delta: r.delta,
                    reps: 0,
                    mse_mean: 0.0,
                    bias_mean: 0.0,
                    variance_mean: 0.0,
                });
                groups.push(vec![r]);
            }
        }
    }
    for (row, g) in rows.iter_mut().zip(&groups) {
        let k = g.len() as f64;
        row.reps = g.len();
        row.mse_mean = g.iter().map(|r| r.mse).sum::<f64>() / k;
        row.bias_mean = g.iter().map(|r| r.bias).sum::<f64>() / k;
        row.variance_mean = g.iter().map(|r| r.variance).sum::<f64>() / k;
    }
    rows
}

#[derive(Serialize)]
struct PlotRow<'a> {
    setup: Setup,
    learner: LearnerKind,
    n: usize,
    epsilon: f64,
    metric: &'a str,
    value: f64,
}

impl ExperimentOutput {
    pub fn results_csv(&self) -> Result<String> {
        to_csv(&self.records)
    }

    pub fn summary_csv(&self) -> Result<String> {
        to_csv(&self.summary)
    }

    /// Long format: one row per (group, metric).
    pub fn plot_csv(&self) -> Result<String> {
        let mut rows = Vec::new();
        for s in &self.summary {
            for (metric, value) in [
                ("mse", s.mse_mean),
                ("bias", s.bias_mean),
                ("variance", s.variance_mean),
            ] {
                rows.push(PlotRow {
                    setup: s.setup,
                    learner: s.learner,
                    n: s.n,
                    epsilon: s.epsilon,
                    metric,
                    value,
                });
            }
        }
        to_csv(&rows)
    }

    pub fn failures_text(&self) -> String {
        self.failures
            .iter()
            .map(|f| {
                format!(
                    "setup={} learner={} n={} epsilon={} rep={}: {}\n",
                    f.setup, f.learner, f.n, f.epsilon, f.rep, f.message
                )
            })
            .collect()
    }

    /// Writes `results.csv`, `summary.csv`, `plot_data.csv` and
    /// `failures.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.results_csv()?)?;
        fs::write(dir.join("summary.csv"), self.summary_csv()?)?;
        fs::write(dir.join("plot_data.csv"), self.plot_csv()?)?;
        fs::write(dir.join("failures.txt"), self.failures_text())?;
        Ok(())
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}
