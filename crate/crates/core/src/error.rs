// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("unphysical parameters: {0}")]
    Unphysical(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} did not converge after {iterations} iterations ({detail})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("integrator step underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    StepUnderflow { t: f64, h: f64 },

    #[error("no oscillation detected: {0}")]
    NoOscillation(String),

    #[error("rank-deficient tomography record (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Unphysical(_) | Error::InvalidInput(_) => 2,
            Error::Io(_) | Error::Serialization(_) => 1,
            _ => 3,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NotHermitian(_) => "not_hermitian",
            Error::Unphysical(_) => "unphysical",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Convergence { .. } => "convergence",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::NoOscillation(_) => "no_oscillation",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Serialization(_) => "serialization",
        }
    }
}
