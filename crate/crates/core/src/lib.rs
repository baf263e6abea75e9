//! Tail-risk federated learning simulation.
//!
//! The crate is organised around the pieces of a superquantile-driven
//! federated training pipeline:
//!
//! - [`risk`]: quantiles, superquantiles, dual tail weights, entropic smoothing
//!   and the entropic risk measure over per-client losses.
//! - [`dp`]: discrete Gaussian sampling, simulated secure modular summation and
//!   zCDP accounting.
//! - [`quantile`]: hierarchical histograms and the distributed-DP quantile
//!   protocol, plus its privacy and utility calculators.
//! - [`synth`]: synthetic label-shift federated datasets and their on-disk format.
//! - [`fed`]: the linear multinomial-logistic model and the server loop
//!   (tail-filtered averaging, dual/smoothed reweighting, FedAvg, tilted ERM,
//!   end-to-end DP).
//! - [`eval`]: per-client error distributions and summary statistics.

// NaN-rejecting range checks read clearer negated.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dp;
pub mod eval;
pub mod fed;
pub mod quantile;
pub mod risk;
pub mod rng;
pub mod synth;

pub use dp::{DiscreteGaussian, ModRing, PrivacyLedger};
pub use eval::{ErrorDistribution, SummaryStats};
pub use fed::{Algorithm, FedConfig, FedState, ModelParams, RoundMode};
pub use quantile::{BinEdges, HierHistogram, QuantileEstimate};
pub use risk::{LossVector, SmoothingParam, TailThreshold, TailWeights};
pub use synth::{ClientDataset, FederatedDataset, SynthConfig};
