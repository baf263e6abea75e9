//! Risk functionals over empirical per-client loss distributions.
//!
//! A [`LossVector`] is a discrete distribution: atom `i` carries loss
//! `values[i]` with probability `weights[i]` (uniform `1/n` by default).
//! The tail threshold `theta` is the probability mass treated as the tail, so
//! `theta = 1` recovers the (weighted) mean and `theta -> 0` the maximum.
//!
//! The superquantile is computed in its dual form as the support function of
//! the capped simplex `{pi : 0 <= pi_i <= w_i / theta, sum pi = 1}`; the
//! maximizing weights are found greedily by filling caps from the largest loss
//! downwards. The entropically smoothed variant penalises the KL divergence of
//! `pi` from `w` and is solved exactly by a sort-and-scan capped softmax.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when comparing accumulated probability mass against `theta`.
const MASS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("empty distribution")]
    Empty,
    #[error("loss at index {0} is not finite")]
    NonFinite(usize),
    #[error("invalid client weights: {0}")]
    InvalidWeights(String),
    #[error("tail threshold must lie in (0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("smoothing parameter must be positive (use dual_weights for nu = 0), got {0}")]
    NonPositiveSmoothing(f64),
    #[error("entropic risk needs nu > 0, got {0}")]
    InvalidTilt(f64),
}

/// Per-client losses with optional probability weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl LossVector {
    /// Uniformly weighted losses.
    pub fn new(values: Vec<f64>) -> Result<Self, RiskError> {
        if values.is_empty() {
            return Err(RiskError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(RiskError::NonFinite(i));
        }
        Ok(Self { values, weights: None })
    }

    /// Losses with explicit weights; the weights must be nonnegative and sum to one.
    pub fn with_weights(values: Vec<f64>, weights: Vec<f64>) -> Result<Self, RiskError> {
        let mut lv = Self::new(values)?;
        if weights.len() != lv.values.len() {
            return Err(RiskError::InvalidWeights(format!("{} weights for {} losses", weights.len(), lv.values.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RiskError::InvalidWeights("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(RiskError::InvalidWeights(format!("weights sum to {total}")));
        }
        lv.weights = Some(weights);
        Ok(lv)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.values.len() as f64,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| self.weight(i) * v).sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices sorted by decreasing loss; ties keep index order.
    fn descending_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    /// Runs of equal loss in `order`, as half-open ranges into `order`.
    fn tie_groups(&self, order: &[usize]) -> Vec<std::ops::Range<usize>> {
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || self.values[order[k]] != self.values[order[start]] {
                groups.push(start..k);
                start = k;
            }
        }
        groups
    }
}

/// Tail probability mass, `0 < theta <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TailThreshold(f64);

impl TailThreshold {
    pub fn new(theta: f64) -> Result<Self, RiskError> {
        if theta > 0.0 && theta <= 1.0 {
            Ok(Self(theta))
        } else {
            Err(RiskError::InvalidTheta(theta))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Entropic smoothing strength; zero means no smoothing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SmoothingParam(f64);

impl SmoothingParam {
    pub fn new(nu: f64) -> Result<Self, RiskError> {
        if nu >= 0.0 && nu.is_finite() {
            Ok(Self(nu))
        } else {
            Err(RiskError::NonPositiveSmoothing(nu))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A point of the capped simplex, aligned with the losses it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailWeights {
    pub pi: Vec<f64>,
}

impl TailWeights {
    /// `sum_i pi_i * values_i`.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.pi.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    /// Number of atoms with nonzero weight.
    pub fn support_size(&self) -> usize {
        self.pi.iter().filter(|&&p| p > 0.0).count()
    }
}

/// `inf { eta : P(Z > eta) <= theta }`, always one of the atoms.
pub fn quantile(losses: &LossVector, theta: TailThreshold) -> f64 {
    let order = losses.descending_order();
    let mut above = 0.0;
    let mut result = losses.values[order[0]];
    for group in losses.tie_groups(&order) {
        if above > theta.0 + MASS_EPS {
            break;
        }
        result = losses.values[order[group.start]];
        above += order[group].iter().map(|&i| losses.weight(i)).sum::<f64>();
    }
    result
}

/// Mean of the worst `theta` fraction of the distribution.
pub fn superquantile(losses: &LossVector, theta: TailThreshold) -> f64 {
    dual_weights(losses, theta).expectation(&losses.values)
}

/// Maximizer of `sum_i pi_i F_i` over the capped simplex with caps `w_i / theta`.
///
/// Caps are filled in order of decreasing loss. When the boundary falls on a
/// run of tied losses, the residual mass is split among the run in proportion
/// to the caps (equally, for uniform weights).
pub fn dual_weights(losses: &LossVector, theta: TailThreshold) -> TailWeights {
    let order = losses.descending_order();
    let mut pi = vec![0.0; losses.len()];
    let mut remaining = 1.0;
    for group in losses.tie_groups(&order) {
        // leftovers at rounding level (e.g. 1 - 3 * (1/3)) do not open a new atom
        if remaining <= MASS_EPS {
            break;
        }
        let members = &order[group];
        let group_cap: f64 = members.iter().map(|&i| losses.weight(i) / theta.0).sum();
        if group_cap <= remaining + MASS_EPS {
            for &i in members {
                pi[i] = losses.weight(i) / theta.0;
            }
            remaining -= group_cap;
        } else {
            for &i in members {
                pi[i] = losses.weight(i) / theta.0 * (remaining / group_cap);
            }
            remaining = 0.0;
        }
    }
    TailWeights { pi }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Maximizer of `sum_i pi_i F_i - nu * KL(pi || w)` over the capped simplex.
///
/// The solution is a softmax of `F / nu` clipped at the caps. Capped atoms
/// form a prefix of the decreasing-loss order, so scanning the prefix length
/// and checking the largest uncapped coordinate against its cap yields the
/// exact solution.
pub fn smoothed_weights(
    losses: &LossVector,
    theta: TailThreshold,
    nu: SmoothingParam,
) -> Result<TailWeights, RiskError> {
    let nu = nu.0;
    if nu <= 0.0 {
        return Err(RiskError::NonPositiveSmoothing(nu));
    }
    let n = losses.len();
    let order = losses.descending_order();
    let logits: Vec<f64> = order.iter().map(|&i| losses.weight(i).ln() + losses.values[i] / nu).collect();
    // suffix_lse[k] = log sum_{j >= k} exp(logits[j])
    let mut suffix_lse = vec![f64::NEG_INFINITY; n + 1];
    for k in (0..n).rev() {
        suffix_lse[k] = log_sum_exp(suffix_lse[k + 1], logits[k]);
    }

    let cap = |i: usize| losses.weight(i) / theta.0;
    let mut pi = vec![0.0; n];
    let mut capped_mass = 0.0;
    for k in 0..=n {
        let residual = 1.0 - capped_mass;
        if k == n || residual <= 0.0 {
            for &i in &order[..k] {
                pi[i] = cap(i);
            }
            break;
        }
        let top = residual * (logits[k] - suffix_lse[k]).exp();
        if top <= cap(order[k]) {
            for &i in &order[..k] {
                pi[i] = cap(i);
            }
            for (j, &i) in order.iter().enumerate().skip(k) {
                pi[i] = residual * (logits[j] - suffix_lse[k]).exp();
            }
            break;
        }
        capped_mass += cap(order[k]);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(TailWeights { pi })
}

/// `KL(pi || w) = sum_i pi_i log(pi_i / w_i)` with `0 log 0 = 0`.
pub fn kl_to_weights(pi: &TailWeights, losses: &LossVector) -> f64 {
    pi.pi.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| p * (p / losses.weight(i)).ln()).sum()
}

/// Value of the smoothed objective `sum_i pi_i F_i - nu * KL(pi || w)` at `pi`.
pub fn smoothed_objective(losses: &LossVector, pi: &TailWeights, nu: f64) -> f64 {
    pi.expectation(&losses.values) - nu * kl_to_weights(pi, losses)
}

/// Entropically smoothed superquantile, evaluated at its maximizer.
pub fn smoothed_superquantile(losses: &LossVector, theta: TailThreshold, nu: SmoothingParam) -> Result<f64, RiskError> {
    let pi = smoothed_weights(losses, theta, nu)?;
    Ok(smoothed_objective(losses, &pi, nu.0))
}

/// `(1/nu) log sum_i w_i exp(nu F_i)`, evaluated with a max shift.
pub fn entropic_risk(losses: &LossVector, nu: f64) -> Result<f64, RiskError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(RiskError::InvalidTilt(nu));
    }
    let shift = losses.max();
    let sum: f64 = losses.values.iter().enumerate().map(|(i, v)| losses.weight(i) * (nu * (v - shift)).exp()).sum();
    Ok(shift + sum.ln() / nu)
}

/// Softmax weights `w_i exp(nu F_i) / sum_j w_j exp(nu F_j)`, the gradient
/// weights of the entropic risk.
pub fn tilted_weights(losses: &LossVector, nu: f64) -> Result<TailWeights, RiskError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(RiskError::InvalidTilt(nu));
    }
    let shift = losses.max();
    let raw: Vec<f64> = (0..losses.len()).map(|i| losses.weight(i) * (nu * (losses.values[i] - shift)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(TailWeights { pi: raw.into_iter().map(|r| r / total).collect() })
}
