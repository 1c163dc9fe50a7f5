// SPDX-License-Identifier: Apache-2.0

//! Simulation setups A–E.
//!
//! Every setup draws `X ~ P_X`, `T | X ~ Bernoulli(e(X))`, `ε ~ N(0, 1)` and
//! sets `Y = b(X) + T·τ(X) + ε`, with `d = 6`.
//!
//! | setup | `P_X`        | `b`                                    | `e`                         | `τ`                         |
//! |-------|--------------|----------------------------------------|-----------------------------|-----------------------------|
//! | A     | `U(0,1)^d`   | `sin(π x1 x2) + 2(x3 − ½)² + x4 + ½x5` | `trim(sin(π x1 x2))`        | `(x1 + x2)/2`               |
//! | B     | `N(0, I)`    | `max(x1+x2, x3, 0) + max(x4+x5, 0)`    | `½`                         | `x1 + softplus(x2)`         |
//! | C     | `N(0, I)`    | `2 softplus(x1+x2+x3)`                 | `1/(1+e^{x2+x3})`           | `1`                         |
//! | D     | `N(0, I)`    | `max(x1+x2+x3, 0) + max(x4+x5, 0)`     | `1/(1+e^{−x1}+e^{−x2})`     | `max(x1+x2+x3,0) − max(x4+x5,0)` |
//! | E     | `N(0, Σ)`    | `Σ i·xi + x1 x6 + 1(−½ < x3 < ½)`      | `1/(1+e^{x1+x6})`           | `1/(1+e^{x1}) − x2 + Σ_{i≥3} xi` |
//!
//! Normal covariates are not truncated; learners see public bounds `±5`
//! and clamp at binning time.

use crate::dpgam::FeatureSpec;
use crate::error::{Error, Result};
use crate::metalearn::{Observation, ObservationSet};
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub const DIM: usize = 6;
pub const NORMAL_BOUND: f64 = 5.0;
pub const DEFAULT_CORRELATION_SEED: u64 = 0x5EED_000E;
const MAX_CORRELATION_RETRIES: u64 = 10;

pub fn trim(x: f64, lo: f64) -> f64 {
    x.max(lo).min(1.0 - lo)
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setup {
    A,
    B,
    C,
    D,
    E,
}

impl Setup {
    pub const ALL: [Setup; 5] = [Setup::A, Setup::B, Setup::C, Setup::D, Setup::E];

    pub fn baseline(self, x: &[f64]) -> f64 {
        match self {
            Setup::A => (PI * x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2) + x[3] + 0.5 * x[4],
            Setup::B => (x[0] + x[1]).max(x[2]).max(0.0) + (x[3] + x[4]).max(0.0),
            Setup::C => 2.0 * softplus(x[0] + x[1] + x[2]),
            Setup::D => (x[0] + x[1] + x[2]).max(0.0) + (x[3] + x[4]).max(0.0),
            Setup::E => {
                let linear: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
                let band = if x[2] > -0.5 && x[2] < 0.5 { 1.0 } else { 0.0 };
                linear + x[0] * x[5] + band
            }
        }
    }

    pub fn propensity(self, x: &[f64]) -> f64 {
        match self {
            Setup::A => trim((PI * x[0] * x[1]).sin(), 0.1),
            Setup::B => 0.5,
            Setup::C => logistic(-(x[1] + x[2])),
            Setup::D => 1.0 / (1.0 + (-x[0]).exp() + (-x[1]).exp()),
            Setup::E => logistic(-(x[0] + x[5])),
        }
    }

    pub fn effect(self, x: &[f64]) -> f64 {
        match self {
            Setup::A => 0.5 * (x[0] + x[1]),
            Setup::B => x[0] + softplus(x[1]),
            Setup::C => 1.0,
            Setup::D => (x[0] + x[1] + x[2]).max(0.0) - (x[3] + x[4]).max(0.0),
            Setup::E => logistic(-x[0]) - x[1] + x[2..].iter().sum::<f64>(),
        }
    }

    /// Public per-feature bounds.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Setup::A => (0.0, 1.0),
            _ => (-NORMAL_BOUND, NORMAL_BOUND),
        }
    }

    pub fn feature_specs(self, num_bins: usize) -> Result<Vec<FeatureSpec>> {
        let (lo, hi) = self.bounds();
        Ok(vec![FeatureSpec::new(lo, hi, num_bins)?; DIM])
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setup::A => "A",
            Setup::B => "B",
            Setup::C => "C",
            Setup::D => "D",
            Setup::E => "E",
        };
        f.write_str(s)
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Setup::A),
            "B" => Ok(Setup::B),
            "C" => Ok(Setup::C),
            "D" => Ok(Setup::D),
            "E" => Ok(Setup::E),
            other => Err(Error::InvalidInput(format!("unknown setup {other:?}"))),
        }
    }
}

/// Random correlation matrix: the Gram matrix `A Aᵀ` of a `d × d` standard
/// normal matrix, scaled to unit diagonal. Near-singular draws are redrawn
/// from the next substream.
pub fn random_correlation(d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "correlation needs d >= 2, got {d}"
        )));
    }
    for attempt in 0..=MAX_CORRELATION_RETRIES {
        let mut r = rng::rng(rng::derive(seed, &[attempt]));
        let a = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut r));
        let gram = &a * a.transpose();
        let scale = DVector::from_iterator(d, gram.diagonal().iter().map(|v| 1.0 / v.sqrt()));
        let sigma = DMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => gram[(i, j)] * scale[i] * scale[j],
            std::cmp::Ordering::Greater => gram[(j, i)] * scale[j] * scale[i],
        });
        let min_eig = sigma.clone().symmetric_eigenvalues().min();
        if min_eig > 1e-8 && sigma.clone().cholesky().is_some() {
            return Ok(sigma);
        }
    }
    Err(Error::InvalidInput(format!(
        "no well-conditioned correlation after {MAX_CORRELATION_RETRIES} retries"
    )))
}

/// A setup together with the seed of its covariance (Setup E only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupSpec {
    pub setup: Setup,
    pub correlation_seed: u64,
}

impl SetupSpec {
    pub fn new(setup: Setup) -> Self {
        Self {
            setup,
            correlation_seed: DEFAULT_CORRELATION_SEED,
        }
    }

    pub fn correlation(&self) -> Result<Option<DMatrix<f64>>> {
        match self.setup {
            Setup::E => random_correlation(DIM, self.correlation_seed).map(Some),
            _ => Ok(None),
        }
    }
}

/// Generated rows with the true effect of each row, kept for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: ObservationSet,
    pub tau_true: Vec<f64>,
}

struct Sampler {
    setup: Setup,
    chol: Option<DMatrix<f64>>,
}

impl Sampler {
    fn new(spec: &SetupSpec) -> Result<Self> {
        let chol = match spec.correlation()? {
            Some(s) => Some(
                s.cholesky()
                    .ok_or_else(|| {
                        Error::InvalidInput("correlation is not positive definite".into())
                    })?
                    .l(),
            ),
            None => None,
        };
        Ok(Self {
            setup: spec.setup,
            chol,
        })
    }

    fn covariates(&self, r: &mut rng::Rng) -> Vec<f64> {
        match (self.setup, &self.chol) {
            (Setup::A, _) => (0..DIM).map(|_| r.random::<f64>()).collect(),
            (_, None) => (0..DIM).map(|_| StandardNormal.sample(r)).collect(),
            (_, Some(l)) => {
                let z = DVector::from_iterator(DIM, (0..DIM).map(|_| StandardNormal.sample(r)));
                (l * z).iter().copied().collect()
            }
        }
    }
}

/// Covariates only, e.g. for a fixed evaluation sample.
pub fn covariates(spec: &SetupSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = Sampler::new(spec)?;
    let mut r = rng::rng(seed);
    Ok((0..n).map(|_| sampler.covariates(&mut r)).collect())
}

pub fn generate(spec: &SetupSpec, n: usize, seed: u64) -> Result<Simulated> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let sampler = Sampler::new(spec)?;
    let setup = spec.setup;
    let mut r = rng::rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut tau_true = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sampler.covariates(&mut r);
        let t = r.random::<f64>() < setup.propensity(&x);
        let noise: f64 = StandardNormal.sample(&mut r);
        let tau = setup.effect(&x);
        let y = setup.baseline(&x) + if t { tau } else { 0.0 } + noise;
        rows.push(Observation { y, t, x });
        tau_true.push(tau);
    }
    let data = ObservationSet::new(rows, setup.feature_specs(crate::dpgam::DEFAULT_NUM_BINS)?)?;
    Ok(Simulated { data, tau_true })
}
