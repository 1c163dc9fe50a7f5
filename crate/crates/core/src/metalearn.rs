// SPDX-License-Identifier: Apache-2.0

//! Sample-split CATE meta-learners.
//!
//! A learner partitions the data into `k + 1` disjoint parts, fits one
//! first-stage nuisance model per part `S₁,ᵢ`, transforms the rows of the
//! last part `S₂` with those nuisances and regresses the transformed
//! outcome on `x`. Every module sees its own rows only, so the privacy of
//! the whole pipeline is the parallel composition of the module curves.
//!
//! - DR: `ê` on `S₁,₁`, `μ̂(t, x)` on `S₁,₂`, doubly robust score `ψ̂` on `S₂`.
//! - R: `ê` on `S₁,₁`, `η̂(x)` on `S₁,₂`, weighted regression on `S₂` with
//!   weights `(T − ê)²` and targets `(Y − η̂)/(T − ê)`.
//! - S: one `μ̂(t, x)` on all rows; `τ̂ = f̂_T(1) − f̂_T(0)` is a constant.

use crate::accountant::PrivacyBudget;
use crate::dpgam::{self, AdditiveModel, FeatureSpec, FitOptions, FittedModel, HyperParams, Link};
use crate::error::{Error, Result};
use crate::rng;
use crate::tradeoff::{compose_parallel, TradeoffCurve};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub t: bool,
    pub x: Vec<f64>,
}

impl Observation {
    pub fn t_value(&self) -> f64 {
        if self.t {
            1.0
        } else {
            0.0
        }
    }

    /// `(t, x₁, …, x_d)`.
    pub fn tx(&self, t: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.x.len() + 1);
        v.push(t);
        v.extend_from_slice(&self.x);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub rows: Vec<Observation>,
    pub feature_specs: Vec<FeatureSpec>,
}

impl ObservationSet {
    pub fn new(rows: Vec<Observation>, feature_specs: Vec<FeatureSpec>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let d = feature_specs.len();
        for o in &rows {
            if o.x.len() != d {
                return Err(Error::ArityMismatch {
                    expected: d,
                    got: o.x.len(),
                });
            }
            if !o.y.is_finite() || o.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("observations must be finite".into()));
            }
        }
        Ok(Self {
            rows,
            feature_specs,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_specs.len()
    }

    pub fn with_num_bins(mut self, num_bins: usize) -> Result<Self> {
        for s in &mut self.feature_specs {
            *s = FeatureSpec::new(s.lower, s.upper, num_bins)?;
        }
        Ok(self)
    }
}

/// Random partition of row indices into parts with sizes `≈ λᵢ n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub ratios: Vec<f64>,
    /// Part index of every row.
    pub assignment: Vec<usize>,
    /// Row indices of every part, ascending.
    pub parts: Vec<Vec<usize>>,
}

/// Largest-remainder rounding of `λᵢ n`; ties go to the earlier part.
pub fn part_sizes(n: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidInput("ratios must be positive".into()));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("ratios sum to {total}, not 1")));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    if let Some(part) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::PartTooSmall {
            part,
            rows: 0,
            needed: 1,
        });
    }
    Ok(sizes)
}

/// Seeded uniform shuffle followed by contiguous slicing, which is uniform
/// over all partitions with the given part sizes.
pub fn partition(n: usize, ratios: &[f64], seed: u64) -> Result<SplitPlan> {
    let sizes = part_sizes(n, ratios)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(seed));
    let mut assignment = vec![0; n];
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (p, &s) in sizes.iter().enumerate() {
        let mut part = idx[start..start + s].to_vec();
        part.sort_unstable();
        for &i in &part {
            assignment[i] = p;
        }
        parts.push(part);
        start += s;
    }
    Ok(SplitPlan {
        ratios: ratios.to_vec(),
        assignment,
        parts,
    })
}

/// Doubly robust score
/// `μ̂₁ − μ̂₀ + 1{T=1}(Y − μ̂₁)/ê − 1{T=0}(Y − μ̂₀)/(1 − ê)`.
pub fn dr_pseudo_outcome(z: &Observation, e: f64, mu1: f64, mu0: f64) -> f64 {
    let correction = if z.t {
        (z.y - mu1) / e
    } else {
        -(z.y - mu0) / (1.0 - e)
    };
    mu1 - mu0 + correction
}

/// `(Y − η̂, T − ê)`.
pub fn r_transform(z: &Observation, eta: f64, e: f64) -> (f64, f64) {
    (z.y - eta, z.t_value() - e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "R")]
    R,
    #[serde(rename = "S")]
    S,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Dr, LearnerKind::R, LearnerKind::S];

    /// Fitted modules, first stages and second stage together.
    pub fn num_modules(self) -> usize {
        match self {
            LearnerKind::Dr | LearnerKind::R => 3,
            LearnerKind::S => 1,
        }
    }

    pub fn module_names(self) -> &'static [&'static str] {
        match self {
            LearnerKind::Dr => &["propensity", "response", "second_stage"],
            LearnerKind::R => &["propensity", "outcome", "second_stage"],
            LearnerKind::S => &["response"],
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Dr => "DR",
            LearnerKind::R => "R",
            LearnerKind::S => "S",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DR" => Ok(LearnerKind::Dr),
            "R" => Ok(LearnerKind::R),
            "S" => Ok(LearnerKind::S),
            other => Err(Error::InvalidInput(format!("unknown learner {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerHyper {
    /// Booster settings of the identity-link nuisances `μ̂` and `η̂`.
    pub nuisance: HyperParams,
    /// Booster settings of the propensity model `ê`.
    pub propensity: HyperParams,
    pub second_stage: HyperParams,
    /// `ê` is clamped into this interval before any transformation.
    pub propensity_trim: (f64, f64),
}

impl Default for LearnerHyper {
    /// Calibrated on setups A–D with 8 bins per feature.
    fn default() -> Self {
        let base = HyperParams {
            learning_rate: 0.1,
            count_floor_sigmas: 1.0,
            ..HyperParams::default()
        };
        Self {
            nuisance: HyperParams {
                rounds: 100,
                clip: Some(4.0),
                ..base
            },
            propensity: HyperParams {
                rounds: 50,
                target_range: (0.0, 1.0),
                ..base
            },
            second_stage: HyperParams {
                rounds: 10,
                clip: Some(8.0),
                ..base
            },
            propensity_trim: (0.05, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CateOptions {
    pub kind: LearnerKind,
    /// One entry per module in [`LearnerKind::module_names`] order;
    /// `None` fits that module without noise.
    pub budgets: Vec<Option<PrivacyBudget>>,
    pub ratios: Vec<f64>,
    pub hyper: LearnerHyper,
}

impl CateOptions {
    /// Every module gets the same budget; ratios `(0.25, 0.25, 0.5)`.
    pub fn uniform(kind: LearnerKind, budget: Option<PrivacyBudget>) -> Self {
        Self {
            kind,
            budgets: vec![budget; kind.num_modules()],
            ratios: vec![0.25, 0.25, 0.5],
            hyper: LearnerHyper::default(),
        }
    }
}

/// What one module read and released.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleAudit {
    pub module: String,
    pub part: usize,
    /// Row indices handed to the module, in the order read.
    pub rows_read: Vec<usize>,
    pub releases: usize,
    pub planned_releases: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NuisanceSet {
    pub propensity: Option<AdditiveModel>,
    /// `μ̂(t, x)`, features `(t, x₁, …, x_d)`.
    pub response: Option<AdditiveModel>,
    /// `η̂(x)`.
    pub outcome: Option<AdditiveModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SecondStage {
    Additive(AdditiveModel),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CateModel {
    pub kind: LearnerKind,
    pub second_stage: SecondStage,
    pub nuisances: NuisanceSet,
    pub composed_privacy: TradeoffCurve,
    pub module_curves: Vec<TradeoffCurve>,
    pub split: SplitPlan,
    pub audit: Vec<ModuleAudit>,
    pub dim: usize,
}

impl CateModel {
    pub fn predict_cate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::ArityMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match &self.second_stage {
            SecondStage::Additive(m) => m.predict(x),
            SecondStage::Constant(c) => Ok(*c),
        }
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_cate(x)).collect()
    }

    /// JSON shape document of every fitted module, keyed by module name.
    pub fn module_documents(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let n = &self.nuisances;
        for (name, m) in [
            ("propensity", &n.propensity),
            ("response", &n.response),
            ("outcome", &n.outcome),
        ] {
            if let Some(m) = m {
                out.push((name.to_string(), m.export_shapes()?));
            }
        }
        match &self.second_stage {
            SecondStage::Additive(m) => out.push(("second_stage".into(), m.export_shapes()?)),
            SecondStage::Constant(c) => out.push((
                "second_stage".into(),
                serde_json::to_string_pretty(&serde_json::json!({ "constant": c }))?,
            )),
        }
        Ok(out)
    }
}

/// Trade-off curve a module's budget guarantees; no budget gives the zero
/// curve.
pub fn module_curve(budget: &Option<PrivacyBudget>) -> TradeoffCurve {
    match budget {
        Some(b) => b.curve(),
        None => TradeoffCurve::zero(),
    }
}

struct Module {
    model: AdditiveModel,
    audit: ModuleAudit,
}

struct ModuleInput {
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
    weights: Option<Vec<f64>>,
}

fn run_module(
    name: &str,
    part: usize,
    rows_read: Vec<usize>,
    input: ModuleInput,
    specs: &[FeatureSpec],
    opts: FitOptions,
    seed: u64,
) -> Result<Module> {
    let fitted: FittedModel = match &input.weights {
        Some(w) => dpgam::fit_weighted(&input.features, &input.targets, w, specs, &opts, seed)?,
        None => dpgam::fit(&input.features, &input.targets, specs, &opts, seed)?,
    };
    Ok(Module {
        audit: ModuleAudit {
            module: name.to_string(),
            part,
            rows_read,
            releases: fitted.releases,
            planned_releases: fitted.plan.map_or(0, |p| p.num_releases()),
        },
        model: fitted.model,
    })
}

fn rows_of<'a>(data: &'a ObservationSet, idx: &[usize]) -> Vec<&'a Observation> {
    idx.iter().map(|&i| &data.rows[i]).collect()
}

fn tx_specs(data: &ObservationSet) -> Result<Vec<FeatureSpec>> {
    let mut specs = vec![FeatureSpec::new(0.0, 1.0, 2)?];
    specs.extend_from_slice(&data.feature_specs);
    Ok(specs)
}

fn propensity_input(rows: &[&Observation]) -> ModuleInput {
    ModuleInput {
        features: rows.iter().map(|o| o.x.clone()).collect(),
        targets: rows.iter().map(|o| o.t_value()).collect(),
        weights: None,
    }
}

fn response_input(rows: &[&Observation]) -> ModuleInput {
    ModuleInput {
        features: rows.iter().map(|o| o.tx(o.t_value())).collect(),
        targets: rows.iter().map(|o| o.y).collect(),
        weights: None,
    }
}

fn outcome_input(rows: &[&Observation]) -> ModuleInput {
    ModuleInput {
        features: rows.iter().map(|o| o.x.clone()).collect(),
        targets: rows.iter().map(|o| o.y).collect(),
        weights: None,
    }
}

pub fn fit_cate(data: &ObservationSet, opts: &CateOptions, seed: u64) -> Result<CateModel> {
    let kind = opts.kind;
    if opts.budgets.len() != kind.num_modules() {
        return Err(Error::InvalidInput(format!(
            "{kind} learner needs {} module budgets, got {}",
            kind.num_modules(),
            opts.budgets.len()
        )));
    }
    let (lo, hi) = opts.hyper.propensity_trim;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidInput(format!(
            "propensity trim [{lo}, {hi}] must lie inside (0, 1)"
        )));
    }
    let ratios: Vec<f64> = match kind {
        LearnerKind::S => vec![1.0],
        _ => {
            if opts.ratios.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "{kind} learner needs 3 split ratios, got {}",
                    opts.ratios.len()
                )));
            }
            opts.ratios.clone()
        }
    };
    let split = partition(data.len(), &ratios, rng::derive(seed, &[0]))?;
    let needed = data
        .feature_specs
        .iter()
        .map(|s| s.num_bins)
        .max()
        .unwrap_or(2);
    for (part, idx) in split.parts.iter().enumerate() {
        if idx.len() < needed {
            return Err(Error::PartTooSmall {
                part,
                rows: idx.len(),
                needed,
            });
        }
    }
    let module_seed = |m: u64| rng::derive(seed, &[1, m]);
    let fit_opts = |m: usize, hyper: HyperParams, link: Link| FitOptions {
        hyper,
        link,
        budget: opts.budgets[m],
    };
    let h = &opts.hyper;
    let names = kind.module_names();
    let x_specs = &data.feature_specs;
    let txs = tx_specs(data)?;
    let trim = |e: f64| e.clamp(lo, hi);

    let mut nuisances = NuisanceSet::default();
    let mut audit = Vec::new();
    let second_stage = match kind {
        LearnerKind::S => {
            let idx = split.parts[0].clone();
            let input = response_input(&rows_of(data, &idx));
            let m = run_module(
                names[0],
                0,
                idx,
                input,
                &txs,
                fit_opts(0, h.nuisance, Link::Identity),
                module_seed(0),
            )?;
            let t_shape = &m.model.shapes[0];
            let tau = t_shape.eval(1.0) - t_shape.eval(0.0);
            nuisances.response = Some(m.model);
            audit.push(m.audit);
            SecondStage::Constant(tau)
        }
        LearnerKind::Dr | LearnerKind::R => {
            let (p0, p1, p2) = (&split.parts[0], &split.parts[1], &split.parts[2]);
            let e_input = propensity_input(&rows_of(data, p0));
            let second_input = match kind {
                LearnerKind::Dr => response_input(&rows_of(data, p1)),
                _ => outcome_input(&rows_of(data, p1)),
            };
            let second_specs = if kind == LearnerKind::Dr {
                &txs
            } else {
                x_specs
            };
            let (e_mod, n_mod) = rayon::join(
                || {
                    run_module(
                        names[0],
                        0,
                        p0.clone(),
                        e_input,
                        x_specs,
                        fit_opts(0, h.propensity, Link::Logistic),
                        module_seed(0),
                    )
                },
                || {
                    run_module(
                        names[1],
                        1,
                        p1.clone(),
                        second_input,
                        second_specs,
                        fit_opts(1, h.nuisance, Link::Identity),
                        module_seed(1),
                    )
                },
            );
            let (e_mod, n_mod) = (e_mod?, n_mod?);
            let rows2 = rows_of(data, p2);
            let e_hat: Vec<f64> = rows2
                .iter()
                .map(|o| e_mod.model.predict(&o.x).map(trim))
                .collect::<Result<_>>()?;
            let (plo, phi) = h.second_stage.target_range;
            let input = match kind {
                LearnerKind::Dr => {
                    let mut psi = Vec::with_capacity(rows2.len());
                    for (o, &e) in rows2.iter().zip(&e_hat) {
                        let mu1 = n_mod.model.predict(&o.tx(1.0))?;
                        let mu0 = n_mod.model.predict(&o.tx(0.0))?;
                        psi.push(dr_pseudo_outcome(o, e, mu1, mu0).clamp(plo, phi));
                    }
                    ModuleInput {
                        features: rows2.iter().map(|o| o.x.clone()).collect(),
                        targets: psi,
                        weights: None,
                    }
                }
                _ => {
                    let mut targets = Vec::with_capacity(rows2.len());
                    let mut weights = Vec::with_capacity(rows2.len());
                    for (o, &e) in rows2.iter().zip(&e_hat) {
                        let (ry, rt) = r_transform(o, n_mod.model.predict(&o.x)?, e);
                        targets.push((ry / rt).clamp(plo, phi));
                        weights.push(rt * rt);
                    }
                    ModuleInput {
                        features: rows2.iter().map(|o| o.x.clone()).collect(),
                        targets,
                        weights: Some(weights),
                    }
                }
            };
            let s_mod = run_module(
                names[2],
                2,
                p2.clone(),
                input,
                x_specs,
                fit_opts(2, h.second_stage, Link::Identity),
                module_seed(2),
            )?;
            nuisances.propensity = Some(e_mod.model);
            if kind == LearnerKind::Dr {
                nuisances.response = Some(n_mod.model);
            } else {
                nuisances.outcome = Some(n_mod.model);
            }
            audit.extend([e_mod.audit, n_mod.audit, s_mod.audit]);
            SecondStage::Additive(s_mod.model)
        }
    };

    let module_curves: Vec<TradeoffCurve> = opts.budgets.iter().map(module_curve).collect();
    let composed_privacy = compose_parallel(&module_curves)?;
    Ok(CateModel {
        kind,
        second_stage,
        nuisances,
        composed_privacy,
        module_curves,
        split,
        audit,
        dim: data.dim(),
    })
}
