//! Federated training of a linear multinomial-logistic model.
//!
//! The server samples a cohort each round, clients run local gradient steps
//! from the current model and the server combines the returned models with
//! weights chosen by the algorithm: tail filtering against a loss quantile,
//! dual or entropically smoothed superquantile weights, plain averaging, or
//! softmax tilting.

mod config;
mod model;
mod server;

use thiserror::Error;

use crate::dp::DpError;
use crate::quantile::QuantileError;
use crate::risk::RiskError;

pub use config::{Algorithm, DpQuantileConfig, FedConfig, RoundMode};
pub use model::{client_gradient, client_loss, local_update, ModelParams};
pub use server::{
    run_round, run_round_delta_fl, run_round_fedavg, run_round_tilted, tail_count, train, train_objective,
    write_history, EvalPoint, FedState, IterateAverage, RoundRecord, SplitReport, TrainReport,
};

#[derive(Debug, Error)]
pub enum FedError {
    #[error("dimension mismatch: model expects {expected}, data has {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model parameter {0} is not finite")]
    NonFinite(usize),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
}
