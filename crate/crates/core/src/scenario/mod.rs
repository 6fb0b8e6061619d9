//! Deterministic scenario runner: configs in, JSON reports out.
//!
//! A report carries its config, the tables it claims and the intermediates needed to
//! recompute them; [`verify`] does that recomputation.

mod config;
mod report;
mod run;
mod verify;

pub use config::{
    parse_config, preset, resolve_group, validate, ActionConfig, CircleConfig, GroupNode, InclusionConfig,
    LeafNode, LiftConfig, LiftKind, LimitsConfig, ModelConfig, Moved, Pipeline, Resolved, ScenarioConfig,
    Tolerances, PRESETS,
};
pub use report::*;
pub use run::{preset_config, run};
pub use verify::{verify, Mismatch};

use thiserror::Error;

use crate::actions::ActionError;
use crate::almost::AlmostError;
use crate::group::GroupError;
use crate::lifting::LiftError;
use crate::limits::LimitError;
use crate::solver::SolveError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Almost(#[from] AlmostError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error("bundle is missing {0}")]
    MissingIntermediate(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    /// Count mismatch or gap violation: the input is too far from any action.
    pub const PRECONDITION: i32 = 3;
    pub const LABELLING: i32 = 4;
    pub const STABILIZER: i32 = 5;
    pub const INSUFFICIENT_DATA: i32 = 6;
    pub const CERTIFICATE: i32 = 7;
    pub const VERIFY_MISMATCH: i32 = 8;
    pub const LIFTING: i32 = 9;
    pub const STRICT_WARNINGS: i32 = 10;
}

impl ScenarioError {
    /// `(status, kind)` for the verdict.
    pub fn verdict_kind(&self) -> (&'static str, &'static str) {
        match self {
            ScenarioError::Config { .. } => ("error", "config"),
            ScenarioError::Solve(e) | ScenarioError::Limit(LimitError::Solve(e)) => match e {
                SolveError::CountMismatch { .. }
                | SolveError::GapViolation { .. }
                | SolveError::LabellingObstruction { .. }
                | SolveError::StabilizerObstruction { .. } => ("obstruction", e.kind()),
                _ => ("error", e.kind()),
            },
            ScenarioError::Limit(LimitError::InsufficientData { .. }) => ("insufficient_data", "insufficient_data"),
            ScenarioError::Limit(LimitError::NotEquicontinuous { .. }) => ("insufficient_data", "not_equicontinuous"),
            ScenarioError::Limit(_) => ("error", "limit"),
            ScenarioError::Lift(_) => ("error", "lifting"),
            ScenarioError::MissingIntermediate(_) => ("error", "missing_intermediate"),
            _ => ("error", "error"),
        }
    }

    pub fn exit_code(&self) -> i32 {
        let solve = match self {
            ScenarioError::Solve(e) | ScenarioError::Limit(LimitError::Solve(e)) => Some(e),
            _ => None,
        };
        if let Some(e) = solve {
            return match e {
                SolveError::CountMismatch { .. } | SolveError::GapViolation { .. } => exit::PRECONDITION,
                SolveError::LabellingObstruction { .. } => exit::LABELLING,
                SolveError::StabilizerObstruction { .. } => exit::STABILIZER,
                SolveError::CertificateFailure { .. } => exit::CERTIFICATE,
                _ => exit::OTHER,
            };
        }
        match self {
            ScenarioError::Config { .. } => exit::CONFIG,
            ScenarioError::Limit(LimitError::InsufficientData { .. } | LimitError::NotEquicontinuous { .. }) => {
                exit::INSUFFICIENT_DATA
            }
            ScenarioError::Lift(_) => exit::LIFTING,
            _ => exit::OTHER,
        }
    }
}
