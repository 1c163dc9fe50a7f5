// SPDX-License-Identifier: Apache-2.0

//! Differentially private estimation of conditional average treatment
//! effects with sample-split meta-learners.
//!
//! The crate is organised bottom-up:
//!
//! - [`tradeoff`]: f-DP trade-off curves, exact convex conjugates and the
//!   parallel composition rule `min{f_1, …, f_k}**`.
//! - [`accountant`]: Gaussian-DP calibration of `(ε, δ)` budgets into noise
//!   scales.
//! - [`dpgam`]: a noisy cyclic histogram booster fitting additive models.
//! - [`metalearn`]: DR-, R- and S-learners built on sample splitting.
//! - [`synthdata`]: the simulation setups A–E.
//! - [`harness`]: the two-training-set MSE / bias / variance protocol.
//!
//! The trade-off machinery is generic over the float type; the aliases below
//! fix it to `f64`, which is what the learners use.

pub mod accountant;
pub mod dpgam;
pub mod error;
pub mod harness;
pub mod metalearn;
pub mod normal;
pub mod rng;
pub mod scalar;
pub mod synthdata;
pub mod tradeoff;

pub use accountant::{PrivacyBudget, ReleasePlan};
pub use dpgam::{AdditiveModel, FeatureSpec, HyperParams, Link, ShapeFunction};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, MetricsRecord};
pub use metalearn::{CateModel, CateOptions, LearnerKind, Observation, ObservationSet};
pub use scalar::Real;
pub use synthdata::{Setup, SetupSpec};

pub type TradeoffCurve = tradeoff::TradeoffCurve<f64>;
pub type TradeoffCurve32 = tradeoff::TradeoffCurve<f32>;
pub type PiecewiseLinear = tradeoff::PiecewiseLinear<f64>;
pub type EpsDelta = tradeoff::EpsDelta<f64>;
