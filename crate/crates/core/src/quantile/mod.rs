//! Quantiles of client losses under distributed differential privacy.
//!
//! Each client encodes its (clipped) loss as a one-hot hierarchical histogram,
//! perturbs the scaled counts with discrete Gaussian noise in `Z_M`, and the
//! server only sees the modular sum. Cumulative counts are read off a maximal
//! dyadic partition of the prefix, and the returned quantile is the bin edge
//! whose cumulative count is closest to the target `(1 - theta) m`.

mod accounting;
pub mod bench;
mod histogram;
mod protocol;

use thiserror::Error;

use crate::dp::DpError;

pub use accounting::{calibrate_sigma2, privacy_epsilon, required_modulus, utility_bound, PrivacyCost};
pub use histogram::{cumulative, dyadic_partition, encode_client, sum_exact, BinEdges, HierHistogram, NodeRange};
pub use protocol::{
    best_quantile_error, dp_aggregate, dp_aggregate_unchecked, quantile_error, quantile_from_histogram,
    AggregationParams, QuantileEstimate,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantileError {
    #[error("invalid bin edges: {0}")]
    InvalidEdges(String),
    #[error("bin index {index} out of range 1..={bins}")]
    IndexOutOfRange { index: usize, bins: usize },
    #[error("histograms do not share the same bin edges")]
    EdgeMismatch,
    #[error("no histograms to aggregate")]
    Empty,
    #[error("modulus underspecified: need M >= {required:.0}, got {modulus}")]
    ModulusUnderspecified { required: f64, modulus: u64 },
    #[error("theorem precondition violated: need sigma >= 1/2, got sigma^2 = {0}")]
    PreconditionViolated(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dp(#[from] DpError),
}
