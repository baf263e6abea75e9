use rand::Rng;
use serde::{Deserialize, Serialize};

use super::accounting::required_modulus;
use super::histogram::{cumulative, BinEdges, HierHistogram};
use super::QuantileError;
use crate::dp::{secure_sum, DiscreteGaussian, ModRing};
use crate::risk::TailThreshold;

/// Parameters of one distributed-DP aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationParams {
    /// Discrete Gaussian variance proxy per client and node; `0` disables
    /// noise (only meaningful for exactness tests).
    pub sigma2: f64,
    /// Integer scaling `c` applied to counts before noising.
    pub scale: u64,
    pub ring: ModRing,
    /// Target probability of any modular wraparound.
    pub delta: f64,
}

/// A bin edge chosen as quantile estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    /// `l_index`.
    pub value: f64,
    /// One-based bin index `j*` in `1..=b`.
    pub index: usize,
    /// Cumulative count `H(j*)`.
    pub achieved_mass: f64,
}

/// Noisy aggregation after checking that the modulus leaves room for the
/// scaled counts and noise with probability `1 - delta`.
pub fn dp_aggregate<R: Rng + ?Sized>(
    histograms: &[HierHistogram],
    params: &AggregationParams,
    rng: &mut R,
) -> Result<HierHistogram, QuantileError> {
    let first = histograms.first().ok_or(QuantileError::Empty)?;
    let required = required_modulus(params.sigma2, params.scale, histograms.len(), first.edges().bins(), params.delta)?;
    if (params.ring.modulus() as f64) < required {
        return Err(QuantileError::ModulusUnderspecified { required, modulus: params.ring.modulus() });
    }
    dp_aggregate_unchecked(histograms, params, rng)
}

/// Noisy aggregation without the wraparound check.
///
/// Each client adds fresh discrete Gaussian noise to its scaled counts and
/// reduces mod `M`; the modular sum is decoded to its centered
/// representative and divided by the scale.
pub fn dp_aggregate_unchecked<R: Rng + ?Sized>(
    histograms: &[HierHistogram],
    params: &AggregationParams,
    rng: &mut R,
) -> Result<HierHistogram, QuantileError> {
    let first = histograms.first().ok_or(QuantileError::Empty)?;
    if params.scale == 0 {
        return Err(QuantileError::InvalidParameter("scale must be a positive integer".into()));
    }
    if !(params.sigma2 >= 0.0) {
        return Err(QuantileError::InvalidParameter(format!("sigma2 must be >= 0, got {}", params.sigma2)));
    }
    let noise = if params.sigma2 > 0.0 { Some(DiscreteGaussian::new(params.sigma2)?) } else { None };
    let ring = params.ring;
    let scale = i128::from(params.scale);

    let mut contributions = Vec::with_capacity(histograms.len());
    for h in histograms {
        if h.edges() != first.edges() {
            return Err(QuantileError::EdgeMismatch);
        }
        let mut masked = Vec::with_capacity(h.num_nodes());
        for count in h.flatten() {
            let xi = match &noise {
                Some(dg) => i128::from(dg.sample(rng)?),
                None => 0,
            };
            masked.push(ring.reduce(scale * count.round() as i128 + xi));
        }
        contributions.push(masked);
    }
    let n: usize = histograms.iter().map(HierHistogram::n_contributors).sum();
    let sum = secure_sum(contributions, ring)?;
    let decoded: Vec<f64> = sum.into_iter().map(|s| ring.centered(s) as f64 / params.scale as f64).collect();
    Ok(HierHistogram::from_flat(first.edges(), &decoded, n))
}

fn cumulative_all(hist: &HierHistogram) -> Vec<f64> {
    (1..=hist.edges().bins()).map(|j| cumulative(hist, j).expect("j within 1..=b")).collect()
}

/// Bin edge `l_j` with `H(j)` closest to `(1 - theta) m`; ties go to the smaller `j`.
pub fn quantile_from_histogram(hist: &HierHistogram, theta: TailThreshold) -> QuantileEstimate {
    let target = (1.0 - theta.get()) * hist.n_contributors() as f64;
    let mut best = (f64::INFINITY, 0, 0.0);
    for (k, h) in cumulative_all(hist).into_iter().enumerate() {
        let dist = (h - target).abs();
        if dist < best.0 {
            best = (dist, k + 1, h);
        }
    }
    let edges: &BinEdges = hist.edges();
    QuantileEstimate { value: edges.edge(best.1), index: best.1, achieved_mass: best.2 }
}

/// `R_theta(H, j) = |H(j)/n - (1 - theta)|` on the exact histogram.
pub fn quantile_error(index: usize, exact: &HierHistogram, theta: TailThreshold) -> Result<f64, QuantileError> {
    let n = exact.n_contributors() as f64;
    Ok((cumulative(exact, index)? / n - (1.0 - theta.get())).abs())
}

/// `min_j R_theta(H, j)`: the error of the best bin edge.
pub fn best_quantile_error(hist: &HierHistogram, theta: TailThreshold) -> f64 {
    let n = hist.n_contributors() as f64;
    cumulative_all(hist).into_iter().map(|h| (h / n - (1.0 - theta.get())).abs()).fold(f64::INFINITY, f64::min)
}
