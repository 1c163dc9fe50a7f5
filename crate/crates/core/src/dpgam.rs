// SPDX-License-Identifier: Apache-2.0

//! Differentially private generalized additive models.
//!
//! The model is `g(E[y | x]) = intercept + Σ_j f_j(x_j)` with one
//! piecewise-constant shape per feature over equal-width bins taken from
//! public bounds. Training is cyclic histogram boosting: every round visits
//! every feature, sums clipped residuals per bin, perturbs the sums with
//! Gaussian noise and moves the shape by a damped bin mean.
//!
//! Budget use per fit, in Gaussian-DP terms:
//!
//! - 10% of `μ²` for one noisy (weighted) bin-count vector per feature,
//!   reused by every round;
//! - 90% of `μ²` spread evenly over the `rounds × features` residual-sum
//!   releases.
//!
//! Binning, clipping bounds and the private-mode starting intercept are all
//! public, so nothing else touches the data.

use crate::accountant::{plan_releases, PrivacyBudget, ReleasePlan};
use crate::error::{Error, Result};
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const DEFAULT_NUM_BINS: usize = 32;
const COUNT_SHARE: f64 = 0.1;
const PROBA_FLOOR: f64 = 1e-6;
/// Inverse of the largest logistic curvature `p(1 − p) ≤ 1/4`.
const LOGIT_STEP_SCALE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub lower: f64,
    pub upper: f64,
    pub num_bins: usize,
}

impl FeatureSpec {
    pub fn new(lower: f64, upper: f64, num_bins: usize) -> Result<Self> {
        let spec = Self {
            lower,
            upper,
            num_bins,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::InvalidInput(format!(
                "feature bounds must satisfy lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if self.num_bins < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 bins, got {}",
                self.num_bins
            )));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = (self.upper - self.lower) / self.num_bins as f64;
        (0..=self.num_bins)
            .map(|i| {
                if i == self.num_bins {
                    self.upper
                } else {
                    self.lower + w * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    pub fn inverse(self, score: f64) -> f64 {
        match self {
            Link::Identity => score,
            Link::Logistic => {
                let p = 1.0 / (1.0 + (-score).exp());
                p.clamp(PROBA_FLOOR, 1.0 - PROBA_FLOOR)
            }
        }
    }
}

/// Piecewise-constant function over ascending bin edges. Inputs outside the
/// edges fall into the boundary bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
}

impl ShapeFunction {
    pub fn zeros(spec: &FeatureSpec) -> Self {
        Self {
            edges: spec.edges(),
            values: vec![0.0; spec.num_bins],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.edges.len() != self.values.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "shape with {} values needs {} edges, got {}",
                self.values.len(),
                self.values.len() + 1,
                self.edges.len()
            )));
        }
        if self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "shape edges must be strictly ascending".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("shape values must be finite".into()));
        }
        Ok(())
    }

    pub fn bin_of(&self, x: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.bin_of(x)]
    }
}

/// Fitted additive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub link: Link,
    pub intercept: f64,
    pub shapes: Vec<ShapeFunction>,
}

impl AdditiveModel {
    pub fn arity(&self) -> usize {
        self.shapes.len()
    }

    fn check_arity(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shapes.len() {
            return Err(Error::ArityMismatch {
                expected: self.shapes.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-feature terms `f_j(x_j)`.
    pub fn contributions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_arity(x)?;
        Ok(self.shapes.iter().zip(x).map(|(s, &v)| s.eval(v)).collect())
    }

    /// Pre-link score `intercept + Σ f_j(x_j)`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_arity(x)?;
        Ok(self
            .shapes
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (s, &v)| acc + s.eval(v)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.link.inverse(self.score(x)?))
    }

    /// JSON shape document: link, intercept, and `{edges, values}` per feature.
    pub fn export_shapes(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn import_shapes(doc: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(doc)?;
        if !model.intercept.is_finite() {
            return Err(Error::InvalidInput("intercept must be finite".into()));
        }
        for s in &model.shapes {
            s.validate()?;
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub rounds: usize,
    pub learning_rate: f64,
    /// Residual clip `C`; `None` means half the width of `target_range`.
    pub clip: Option<f64>,
    /// Public range targets are clipped into before training (identity link).
    pub target_range: (f64, f64),
    /// Noisy counts are floored at `max(1, count_floor_sigmas · σ_count)`.
    pub count_floor_sigmas: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            rounds: 50,
            learning_rate: 0.1,
            clip: None,
            target_range: (-15.0, 15.0),
            count_floor_sigmas: 0.0,
        }
    }
}

impl HyperParams {
    pub fn effective_clip(&self, link: Link) -> f64 {
        match link {
            Link::Logistic => 1.0,
            Link::Identity => self
                .clip
                .unwrap_or(0.5 * (self.target_range.1 - self.target_range.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub hyper: HyperParams,
    pub link: Link,
    /// `None` trains without noise.
    pub budget: Option<PrivacyBudget>,
}

/// Noise schedule of one private fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub counts: ReleasePlan,
    pub sums: ReleasePlan,
}

impl TrainingPlan {
    pub fn new(
        budget: &PrivacyBudget,
        num_features: usize,
        rounds: usize,
        clip: f64,
    ) -> Result<Self> {
        Ok(Self {
            counts: plan_releases(budget.mu_share(COUNT_SHARE), num_features, 1.0)?,
            sums: plan_releases(
                budget.mu_share(1.0 - COUNT_SHARE),
                rounds * num_features,
                clip,
            )?,
        })
    }

    pub fn num_releases(&self) -> usize {
        self.counts.num_releases + self.sums.num_releases
    }

    /// Gaussian-DP level of the whole fit, `√(Σ μ_r²)`.
    pub fn total_mu(&self) -> f64 {
        let c = self.counts.mu_per_release();
        let s = self.sums.mu_per_release();
        (self.counts.num_releases as f64 * c * c + self.sums.num_releases as f64 * s * s).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: AdditiveModel,
    /// Noisy vector releases actually made, counted at the noise source.
    pub releases: usize,
    pub plan: Option<TrainingPlan>,
}

struct NoiseSource {
    rng: rng::Rng,
    releases: usize,
}

impl NoiseSource {
    fn release(&mut self, values: &mut [f64], sigma: f64) {
        self.releases += 1;
        for v in values.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v += sigma * z;
        }
    }
}

pub fn fit(
    rows: &[Vec<f64>],
    target: &[f64],
    specs: &[FeatureSpec],
    opts: &FitOptions,
    seed: u64,
) -> Result<FittedModel> {
    train(rows, target, None, specs, opts, seed)
}

/// Weighted variant: bins accumulate `clip(w · residual)` and `Σ w`.
///
/// Under a budget every weight must lie in `[0, 1]` so that one row moves a
/// weighted count by at most 1.
pub fn fit_weighted(
    rows: &[Vec<f64>],
    target: &[f64],
    weights: &[f64],
    specs: &[FeatureSpec],
    opts: &FitOptions,
    seed: u64,
) -> Result<FittedModel> {
    if weights.len() != rows.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} rows",
            weights.len(),
            rows.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput(
            "weights must be finite and >= 0".into(),
        ));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidInput("all weights are zero".into()));
    }
    if opts.budget.is_some() && weights.iter().any(|&w| w > 1.0) {
        return Err(Error::InvalidInput(
            "private weighted fits need weights in [0, 1]".into(),
        ));
    }
    train(rows, target, Some(weights), specs, opts, seed)
}

fn train(
    rows: &[Vec<f64>],
    target: &[f64],
    weights: Option<&[f64]>,
    specs: &[FeatureSpec],
    opts: &FitOptions,
    seed: u64,
) -> Result<FittedModel> {
    let n = rows.len();
    let d = specs.len();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if target.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} targets for {n} rows",
            target.len()
        )));
    }
    for s in specs {
        s.validate()?;
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::ArityMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite target".into()));
    }
    let hyper = &opts.hyper;
    if hyper.rounds == 0 || !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) {
        return Err(Error::InvalidInput(
            "rounds and learning_rate must be positive".into(),
        ));
    }
    let (lo, hi) = hyper.target_range;
    if !(lo < hi) {
        return Err(Error::InvalidInput(
            "target_range must satisfy lo < hi".into(),
        ));
    }
    if !(hyper.count_floor_sigmas >= 0.0 && hyper.count_floor_sigmas.is_finite()) {
        return Err(Error::InvalidInput(
            "count_floor_sigmas must be finite and >= 0".into(),
        ));
    }
    let y: Vec<f64> = match opts.link {
        Link::Identity => target.iter().map(|&v| v.clamp(lo, hi)).collect(),
        Link::Logistic => {
            if target.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidInput(
                    "logistic targets must be 0 or 1".into(),
                ));
            }
            target.to_vec()
        }
    };
    let clip = hyper.effective_clip(opts.link);
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "clip must be positive, got {clip}"
        )));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut shapes: Vec<ShapeFunction> = specs.iter().map(ShapeFunction::zeros).collect();
    let bins: Vec<Vec<usize>> = shapes
        .iter()
        .enumerate()
        .map(|(j, s)| rows.iter().map(|r| s.bin_of(r[j])).collect())
        .collect();

    let plan = match &opts.budget {
        Some(b) => Some(TrainingPlan::new(b, d, hyper.rounds, clip)?),
        None => None,
    };
    let mut noise = NoiseSource {
        rng: rng::rng(seed),
        releases: 0,
    };

    // Denominators: exact weighted counts, or one noisy release per feature
    // floored at 1.
    let denominators: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut c = vec![0.0; specs[j].num_bins];
            for (i, &b) in bins[j].iter().enumerate() {
                c[b] += w(i);
            }
            if let Some(p) = &plan {
                noise.release(&mut c, p.counts.sigma);
                let floor = (hyper.count_floor_sigmas * p.counts.sigma).max(1.0);
                c.iter_mut().for_each(|v| *v = v.max(floor));
            }
            c
        })
        .collect();

    let mut intercept = match (&plan, opts.link) {
        (Some(_), Link::Identity) => 0.5 * (lo + hi),
        (Some(_), Link::Logistic) => 0.0,
        (None, link) => {
            let total: f64 = (0..n).map(w).sum();
            let mean = (0..n).map(|i| w(i) * y[i]).sum::<f64>() / total;
            match link {
                Link::Identity => mean,
                Link::Logistic => {
                    let p = mean.clamp(PROBA_FLOOR, 1.0 - PROBA_FLOOR);
                    (p / (1.0 - p)).ln()
                }
            }
        }
    };
    let step_scale = match opts.link {
        Link::Identity => hyper.learning_rate,
        Link::Logistic => hyper.learning_rate * LOGIT_STEP_SCALE,
    };

    let mut scores = vec![intercept; n];
    let mut sums: Vec<f64> = Vec::new();
    for _round in 0..hyper.rounds {
        for j in 0..d {
            sums.clear();
            sums.resize(specs[j].num_bins, 0.0);
            for i in 0..n {
                let r = y[i] - opts.link.inverse(scores[i]);
                sums[bins[j][i]] += (w(i) * r).clamp(-clip, clip);
            }
            if let Some(p) = &plan {
                noise.release(&mut sums, p.sums.sigma);
            }
            let den = &denominators[j];
            let shape = &mut shapes[j].values;
            for (b, s) in sums.iter_mut().enumerate() {
                *s = if den[b] > 0.0 {
                    step_scale * *s / den[b]
                } else {
                    0.0
                };
                shape[b] += *s;
            }
            for i in 0..n {
                scores[i] += sums[bins[j][i]];
            }
            // Centering moves the weighted mean of the shape into the
            // intercept; scores are unchanged.
            let mass: f64 = den.iter().sum();
            if mass > 0.0 {
                let mean = shape.iter().zip(den).map(|(v, c)| v * c).sum::<f64>() / mass;
                shape.iter_mut().for_each(|v| *v -= mean);
                intercept += mean;
            }
        }
    }

    Ok(FittedModel {
        model: AdditiveModel {
            link: opts.link,
            intercept,
            shapes,
        },
        releases: noise.releases,
        plan,
    })
}
