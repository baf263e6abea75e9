use serde::{Deserialize, Serialize};

use super::FedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Average the models of clients whose loss reaches the cohort quantile.
    DeltaFl,
    /// Aggregate with the maximizing capped-simplex weights.
    DeltaFlDual,
    /// Aggregate with entropically smoothed tail weights.
    DeltaFlSmoothed,
    /// Tail filtering against a distributed-DP quantile, with clipped and
    /// noised updates.
    DeltaFlDp,
    FedAvg,
    /// FedAvg with `ceil(theta m)` clients per round.
    FedAvgSub,
    /// FedAvg with clipped and noised updates.
    FedAvgDp,
    TiltedErm,
}

/// How a tail-risk round chooses its aggregation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundMode {
    ExactQuantile,
    DualWeights,
    Smoothed,
    Dp,
}

impl Algorithm {
    pub fn round_mode(self) -> Option<RoundMode> {
        match self {
            Algorithm::DeltaFl => Some(RoundMode::ExactQuantile),
            Algorithm::DeltaFlDual => Some(RoundMode::DualWeights),
            Algorithm::DeltaFlSmoothed => Some(RoundMode::Smoothed),
            Algorithm::DeltaFlDp => Some(RoundMode::Dp),
            _ => None,
        }
    }

    pub fn is_private(self) -> bool {
        matches!(self, Algorithm::DeltaFlDp | Algorithm::FedAvgDp)
    }
}

/// Knobs of the private loss quantile used by [`Algorithm::DeltaFlDp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpQuantileConfig {
    /// Number of histogram bins, a power of two.
    pub bins: usize,
    /// Losses are clipped to `[0, loss_bound]` before encoding.
    pub loss_bound: f64,
    /// Per-client discrete Gaussian variance `sigma_q^2`.
    pub sigma2: f64,
    /// Count scaling `c`.
    pub scale: u64,
    /// Ring size `M = 2^bit_width`.
    pub bit_width: u32,
    /// Allowed wraparound probability.
    pub delta: f64,
}

impl Default for DpQuantileConfig {
    fn default() -> Self {
        Self { bins: 64, loss_bound: 1.5, sigma2: 1.0, scale: 64, bit_width: 32, delta: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedConfig {
    pub algorithm: Algorithm,
    pub theta: f64,
    /// Smoothing for `delta_fl_smoothed`, tilt for `tilted_erm`.
    pub nu: f64,
    pub lambda: f64,
    pub rounds: usize,
    pub clients_per_round: usize,
    pub local_steps: usize,
    /// `None` means full local gradients.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    /// Step decay `gamma_t = gamma_0 * factor^(-floor(t / period))`; a period
    /// of zero keeps the rate constant.
    pub lr_decay_factor: f64,
    pub lr_decay_period: usize,
    /// Weight clients by their sample share (ignored in DP rounds).
    pub weighted_aggregation: bool,
    /// Update norm bound `C`; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub noise_sigma_w: f64,
    pub quantile: DpQuantileConfig,
    /// Evaluate on the validation and test splits every this many rounds
    /// (0 evaluates only at the end).
    pub eval_every: usize,
    /// Track the weighted iterate average used in the strongly convex analysis.
    pub average_iterates: bool,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::DeltaFl,
            theta: 0.5,
            nu: 1.0,
            lambda: 1e-4,
            rounds: 200,
            clients_per_round: 100,
            local_steps: 1,
            batch_size: None,
            learning_rate: 0.1,
            lr_decay_factor: 1.0,
            lr_decay_period: 0,
            weighted_aggregation: true,
            clip_norm: None,
            noise_sigma_w: 0.0,
            quantile: DpQuantileConfig::default(),
            eval_every: 0,
            average_iterates: false,
            seed: 0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self, n_clients: usize) -> Result<(), FedError> {
        let fail = |m: String| Err(FedError::InvalidConfig(m));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return fail(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if self.clients_per_round == 0 || self.clients_per_round > n_clients {
            return fail(format!("clients_per_round {} not in 1..={n_clients}", self.clients_per_round));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.local_steps == 0 {
            return fail("local_steps must be >= 1".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if self.batch_size == Some(0) {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.lr_decay_factor >= 1.0) {
            return fail(format!("lr_decay_factor must be >= 1, got {}", self.lr_decay_factor));
        }
        if matches!(self.algorithm, Algorithm::DeltaFlSmoothed | Algorithm::TiltedErm) && !(self.nu > 0.0) {
            return fail(format!("nu must be positive, got {}", self.nu));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return fail(format!("clip_norm must be positive, got {c}"));
            }
        }
        if self.algorithm.is_private() && !(self.noise_sigma_w > 0.0) {
            return fail("private algorithms need noise_sigma_w > 0".into());
        }
        if self.algorithm == Algorithm::DeltaFlDp {
            let q = &self.quantile;
            if !q.bins.is_power_of_two() || q.bins < 2 {
                return fail(format!("quantile.bins must be a power of two >= 2, got {}", q.bins));
            }
            if !(q.loss_bound > 0.0) || q.scale == 0 || !(1..=63).contains(&q.bit_width) {
                return fail("quantile needs loss_bound > 0, scale >= 1 and bit_width in 1..=63".into());
            }
            if !(q.delta > 0.0 && q.delta < 1.0) {
                return fail(format!("quantile.delta must lie in (0, 1), got {}", q.delta));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, round: usize) -> f64 {
        if self.lr_decay_period == 0 {
            return self.learning_rate;
        }
        self.learning_rate * self.lr_decay_factor.powi(-((round / self.lr_decay_period) as i32))
    }
}
