// SPDX-License-Identifier: Apache-2.0

//! Standard normal distribution helpers.
//!
//! Tail probabilities go through `erfc` so that `Φ(-x)` keeps full relative
//! precision far into the tail; the Gaussian accountant multiplies such tails
//! by `e^ε` with ε up to 16. The quantile starts from statrs' `erfc_inv`
//! and takes one Newton step against that CDF.

use statrs::function::erf;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse standard normal CDF, refined by one Newton step.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    let d = pdf(x);
    if d > 0.0 && d.is_finite() {
        x - (cdf(x) - p) / d
    } else {
        x
    }
}
