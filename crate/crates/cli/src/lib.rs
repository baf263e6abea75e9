//! Experiment runner behind the `tailfl` binary.

// NaN-rejecting range checks read clearer negated.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod spec;

use thiserror::Error;

pub use commands::{cmd_compare, cmd_generate, cmd_quantile_bench, cmd_train, CompareRow, MeanStd, TrainSummary};
pub use spec::{CompareConfig, ExperimentSpec, SweepAxes};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Runtime(m) => m,
        }
    }
}

impl From<tailfl::fed::FedError> for CliError {
    fn from(e: tailfl::fed::FedError) -> Self {
        match e {
            tailfl::fed::FedError::InvalidConfig(m) => Self::Config(m),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<tailfl::synth::DataError> for CliError {
    fn from(e: tailfl::synth::DataError) -> Self {
        match e {
            tailfl::synth::DataError::InvalidConfig(m) => Self::Config(m),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}
