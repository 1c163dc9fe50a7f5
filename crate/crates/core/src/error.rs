// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trade-off curve: {0}")]
    InvalidCurve(String),
    #[error("invalid privacy parameters: {0}")]
    InvalidPrivacy(String),
    #[error("unsatisfiable budget: {0}")]
    UnsatisfiableBudget(String),
    #[error("empty data")]
    EmptyData,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("arity mismatch: expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("part {part} has {rows} rows but needs at least {needed}; try fewer bins")]
    PartTooSmall {
        part: usize,
        rows: usize,
        needed: usize,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
