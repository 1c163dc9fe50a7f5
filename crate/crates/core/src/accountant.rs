// SPDX-License-Identifier: Apache-2.0

//! Gaussian-DP calibration of `(ε, δ)` budgets.
//!
//! A budget is converted once into the Gaussian-DP level `μ` that certifies
//! it, and that `μ` is then spread over the `K` noisy releases a learner
//! makes. Gaussian mechanisms compose as `μ_total = √(Σ μ_r²)`, so equal
//! shares give `μ_r = μ / √K`.

use crate::error::{Error, Result};
use crate::normal;
use crate::tradeoff::{EpsDelta, TradeoffCurve};

const MU_LO: f64 = 1e-6;
const MU_HI: f64 = 100.0;
const MAX_BISECTIONS: usize = 200;
const REL_TOL: f64 = 1e-6;

/// `δ(ε; μ) = Φ(−ε/μ + μ/2) − e^ε Φ(−ε/μ − μ/2)`, the smallest δ such that
/// `μ`-GDP implies `(ε, δ)`-DP.
pub fn delta_of(epsilon: f64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let a = normal::cdf(-epsilon / mu + mu / 2.0);
    let b = normal::cdf(-epsilon / mu - mu / 2.0);
    (a - epsilon.exp() * b).max(0.0)
}

/// The Gaussian-DP level `μ` with `δ(ε; μ) ∈ [δ(1 − 10⁻⁶), δ]`, by bisection
/// on `μ ∈ [10⁻⁶, 100]`.
pub fn mu_from_eps_delta(b: EpsDelta) -> Result<f64> {
    let (eps, delta) = (b.epsilon, b.delta);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidPrivacy(format!(
            "Gaussian calibration needs 0 < delta < 1, got {delta}"
        )));
    }
    if delta_of(eps, MU_LO) > delta {
        return Err(Error::UnsatisfiableBudget(format!(
            "delta = {delta} is below delta(eps = {eps}; mu = {MU_LO})"
        )));
    }
    if delta_of(eps, MU_HI) < delta * (1.0 - REL_TOL) {
        return Err(Error::UnsatisfiableBudget(format!(
            "delta = {delta} exceeds delta(eps = {eps}; mu = {MU_HI})"
        )));
    }
    let (mut lo, mut hi) = (MU_LO, MU_HI);
    for _ in 0..MAX_BISECTIONS {
        if delta_of(eps, lo) >= delta * (1.0 - REL_TOL) {
            return Ok(lo);
        }
        let mid = 0.5 * (lo + hi);
        if delta_of(eps, mid) <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::UnsatisfiableBudget(format!(
        "bisection did not reach tolerance for eps = {eps}, delta = {delta}"
    )))
}

/// An `(ε, δ)` budget together with its Gaussian-DP equivalent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrivacyBudget {
    pub eps_delta: EpsDelta,
    pub mu: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let eps_delta = EpsDelta::new(epsilon, delta)?;
        let mu = mu_from_eps_delta(eps_delta)?;
        Ok(Self { eps_delta, mu })
    }

    /// The Gaussian-DP level of a `fraction` of this budget's `μ²`.
    pub fn mu_share(&self, fraction: f64) -> f64 {
        self.mu * fraction.sqrt()
    }

    /// Closed-form `(ε, δ)` trade-off curve this budget guarantees.
    pub fn curve(&self) -> TradeoffCurve {
        TradeoffCurve::eps_delta(self.eps_delta)
    }

    pub fn plan_releases(&self, num_releases: usize, clip: f64) -> Result<ReleasePlan> {
        plan_releases(self.mu, num_releases, clip)
    }
}

/// Noise schedule for `num_releases` equally-budgeted Gaussian releases.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReleasePlan {
    pub num_releases: usize,
    pub l2_sensitivity: f64,
    pub sigma: f64,
}

impl ReleasePlan {
    /// Per-release Gaussian-DP level.
    pub fn mu_per_release(&self) -> f64 {
        self.l2_sensitivity / self.sigma
    }
}

/// Splits a total Gaussian-DP level `mu` over `num_releases` releases of a
/// vector whose entries each move by at most `clip` when one observation is
/// substituted. One substituted observation leaves one bin and enters
/// another, so the L2 sensitivity is `√2 · clip`.
pub fn plan_releases(mu: f64, num_releases: usize, clip: f64) -> Result<ReleasePlan> {
    if num_releases == 0 {
        return Err(Error::InvalidInput(
            "at least one release is required".into(),
        ));
    }
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "clip must be positive, got {clip}"
        )));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidPrivacy(format!(
            "mu must be positive, got {mu}"
        )));
    }
    let mu_r = mu / (num_releases as f64).sqrt();
    let l2_sensitivity = std::f64::consts::SQRT_2 * clip;
    let sigma = l2_sensitivity / mu_r;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidPrivacy(format!(
            "noise scale is not finite for mu = {mu}, releases = {num_releases}"
        )));
    }
    Ok(ReleasePlan {
        num_releases,
        l2_sensitivity,
        sigma,
    })
}
