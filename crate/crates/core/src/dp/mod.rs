//! Distributed differential privacy primitives: the discrete Gaussian
//! sampler, a simulated secure modular summation oracle, and zCDP accounting.

mod discrete_gaussian;
mod ledger;
mod secure_sum;

use thiserror::Error;

pub use discrete_gaussian::{sample_discrete_gaussian, DiscreteGaussian};
pub use ledger::{gaussian_update_rho, rho_for_epsilon, LedgerEntry, PrivacyLedger};
pub use secure_sum::{secure_sum, ModRing};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sampler stuck after {0} trials")]
    SamplerStuck(u64),
    #[error("contribution {index} has length {found}, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, found: usize },
    #[error("no contributions to sum")]
    NoContributions,
    #[error("privacy parameter rho must be nonnegative, got {0}")]
    NegativeRho(f64),
}
