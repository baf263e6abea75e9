//! Privacy/utility sweep of the distributed quantile protocol.
//!
//! For every grid point `(distribution, n, b, bit width, epsilon)` the sweep
//! draws `n` losses on `[0, upper]`, runs the protocol once per tail level in
//! `thetas`, and records the quantile error `R_theta(H, j*)` of the returned
//! index against the exact histogram. A run's error is the average over the
//! tail levels; rows report the mean and standard deviation over runs.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    best_quantile_error, calibrate_sigma2, dp_aggregate_unchecked, encode_client, quantile_error,
    quantile_from_histogram, required_modulus, sum_exact, AggregationParams, BinEdges, QuantileError,
};
use crate::dp::{rho_for_epsilon, ModRing};
use crate::risk::TailThreshold;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossDistribution {
    Uniform,
    /// Chi-squared with 4 degrees of freedom, clipped to `[0, upper]`.
    ChiSquared4,
}

impl LossDistribution {
    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::ChiSquared4 => "chi_squared4",
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, upper: f64, rng: &mut R) -> f64 {
        match self {
            Self::Uniform => rng.random_range(0.0..upper),
            Self::ChiSquared4 => ChiSquared::<f64>::new(4.0).expect("valid dof").sample(rng).min(upper),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantileBenchConfig {
    pub distributions: Vec<LossDistribution>,
    pub n_values: Vec<usize>,
    pub bins: Vec<usize>,
    pub bit_widths: Vec<u32>,
    /// Target `(epsilon, delta)`-DP of one protocol run.
    pub epsilons: Vec<f64>,
    pub thetas: Vec<f64>,
    pub runs: usize,
    pub upper: f64,
    pub delta: f64,
    pub seed: u64,
    /// Skip the noise entirely (`sigma^2 = 0`, `c = 1`).
    pub noiseless: bool,
}

impl Default for QuantileBenchConfig {
    fn default() -> Self {
        Self {
            distributions: vec![LossDistribution::Uniform, LossDistribution::ChiSquared4],
            n_values: vec![256],
            bins: vec![16, 64, 256],
            bit_widths: vec![10, 12, 16, 20, 24],
            epsilons: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            thetas: (1..=9).map(|k| k as f64 / 10.0).collect(),
            runs: 10,
            upper: 10.0,
            delta: 1e-5,
            seed: 0,
            noiseless: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub distribution: String,
    pub n: usize,
    pub b: usize,
    pub bit_width: u32,
    pub epsilon: f64,
    pub mean_quantile_error: f64,
    pub std: f64,
    /// Mean of `R_theta(H, j*) - min_j R_theta(H, j)`; zero without noise.
    pub mean_excess_error: f64,
}

/// Errors of one repetition, averaged over the tail levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunError {
    pub error: f64,
    /// Error above the best bin edge of the exact histogram.
    pub excess: f64,
}

/// Noise parameters chosen for one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCalibration {
    pub scale: u64,
    pub sigma2: f64,
    /// Whether the modulus satisfies the no-wraparound requirement.
    pub modulus_ok: bool,
}

/// Picks the largest scale `c` whose calibrated noise still fits in
/// `2^bit_width` without wraparound, and the `sigma^2` meeting the
/// `(epsilon, delta)` target at that scale. Falls back to `c = 1` (with
/// `modulus_ok = false`) when no scale fits.
pub fn calibrate_point(
    epsilon: f64,
    delta: f64,
    n: usize,
    bins: usize,
    bit_width: u32,
) -> Result<PointCalibration, QuantileError> {
    let rho = rho_for_epsilon(epsilon, delta)?;
    let modulus = ModRing::with_bit_width(bit_width)?.modulus() as f64;
    let reference = 1024u64;
    let ratio = calibrate_sigma2(rho, reference, n, bins)?.sqrt() / reference as f64;
    let root = (2.0 * (16.0 * n as f64 * bins as f64 / delta).ln()).sqrt();
    let mut scale = ((modulus - 2.0) / (2.0 * n as f64 * (1.0 + ratio * root))).floor().max(1.0) as u64;
    loop {
        let sigma2 = calibrate_sigma2(rho, scale, n, bins)?;
        let modulus_ok = required_modulus(sigma2, scale, n, bins, delta)? <= modulus;
        if modulus_ok || scale == 1 {
            return Ok(PointCalibration { scale, sigma2, modulus_ok });
        }
        scale -= (scale / 100).max(1);
    }
}

fn point_key(dist: LossDistribution, n: usize, b: usize, bit_width: u32, epsilon: f64) -> Vec<u64> {
    vec![dist as u64, n as u64, b as u64, u64::from(bit_width), epsilon.to_bits()]
}

/// Runs every repetition of one grid point.
pub fn run_point_errors(
    dist: LossDistribution,
    n: usize,
    bins: usize,
    bit_width: u32,
    epsilon: f64,
    cfg: &QuantileBenchConfig,
) -> Result<Vec<RunError>, QuantileError> {
    let edges = BinEdges::uniform(cfg.upper, bins)?;
    let ring = ModRing::with_bit_width(bit_width)?;
    let params = if cfg.noiseless {
        AggregationParams { sigma2: 0.0, scale: 1, ring, delta: cfg.delta }
    } else {
        let cal = calibrate_point(epsilon, cfg.delta, n, bins, bit_width)?;
        AggregationParams { sigma2: cal.sigma2, scale: cal.scale, ring, delta: cfg.delta }
    };
    let thetas: Vec<TailThreshold> = cfg
        .thetas
        .iter()
        .map(|&t| TailThreshold::new(t))
        .collect::<Result<_, _>>()
        .map_err(|e| QuantileError::InvalidParameter(e.to_string()))?;
    let key = point_key(dist, n, bins, bit_width, epsilon);

    (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut idx = key.clone();
            idx.push(run as u64);
            let mut data_rng = rng::derive(cfg.seed, "qbench-data", &idx);
            let hists: Vec<_> = (0..n).map(|_| encode_client(dist.sample(cfg.upper, &mut data_rng), &edges)).collect();
            let exact = sum_exact(&hists)?;
            let (mut total, mut excess) = (0.0, 0.0);
            for (k, &theta) in thetas.iter().enumerate() {
                let mut noise_idx = idx.clone();
                noise_idx.push(k as u64);
                let mut noise_rng = rng::derive(cfg.seed, "qbench-noise", &noise_idx);
                let noisy = dp_aggregate_unchecked(&hists, &params, &mut noise_rng)?;
                let est = quantile_from_histogram(&noisy, theta);
                let err = quantile_error(est.index, &exact, theta)?;
                total += err;
                excess += err - best_quantile_error(&exact, theta);
            }
            let k = thetas.len() as f64;
            Ok(RunError { error: total / k, excess: (excess / k).max(0.0) })
        })
        .collect()
}

pub fn run_point(
    dist: LossDistribution,
    n: usize,
    bins: usize,
    bit_width: u32,
    epsilon: f64,
    cfg: &QuantileBenchConfig,
) -> Result<BenchRow, QuantileError> {
    let runs = run_point_errors(dist, n, bins, bit_width, epsilon, cfg)?;
    let k = runs.len() as f64;
    let mean = runs.iter().map(|r| r.error).sum::<f64>() / k;
    let std = (runs.iter().map(|r| (r.error - mean).powi(2)).sum::<f64>() / k).sqrt();
    Ok(BenchRow {
        distribution: dist.name().to_string(),
        n,
        b: bins,
        bit_width,
        epsilon,
        mean_quantile_error: mean,
        std,
        mean_excess_error: runs.iter().map(|r| r.excess).sum::<f64>() / k,
    })
}

/// Runs the full grid in a fixed order.
pub fn run(cfg: &QuantileBenchConfig) -> Result<Vec<BenchRow>, QuantileError> {
    if cfg.runs == 0 || cfg.thetas.is_empty() {
        return Err(QuantileError::InvalidParameter("need at least one run and one theta".into()));
    }
    let mut rows = Vec::new();
    for &dist in &cfg.distributions {
        for &n in &cfg.n_values {
            for &b in &cfg.bins {
                for &w in &cfg.bit_widths {
                    for &eps in &cfg.epsilons {
                        rows.push(run_point(dist, n, b, w, eps, cfg)?);
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], mut out: W) -> io::Result<()> {
    writeln!(out, "distribution,n,b,bit_width,epsilon,mean_quantile_error,std,mean_excess_error")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.distribution, r.n, r.b, r.bit_width, r.epsilon, r.mean_quantile_error, r.std, r.mean_excess_error
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_respects_modulus() {
        let cal = calibrate_point(1.0, 1e-5, 256, 64, 20).unwrap();
        assert!(cal.modulus_ok && cal.scale > 1);
        let req = required_modulus(cal.sigma2, cal.scale, 256, 64, 1e-5).unwrap();
        assert!(req <= (1u64 << 20) as f64);
        let tight = calibrate_point(5.0, 1e-5, 256, 64, 8).unwrap();
        assert!(!tight.modulus_ok && tight.scale == 1);
    }

    #[test]
    fn noiseless_rows_equal_best_error() {
        let cfg = QuantileBenchConfig {
            distributions: vec![LossDistribution::Uniform],
            n_values: vec![64],
            bins: vec![16],
            bit_widths: vec![16],
            epsilons: vec![1.0],
            runs: 3,
            noiseless: true,
            ..Default::default()
        };
        let errors = run_point_errors(LossDistribution::Uniform, 64, 16, 16, 1.0, &cfg).unwrap();
        let edges = BinEdges::uniform(cfg.upper, 16).unwrap();
        for (run, r) in errors.iter().enumerate() {
            let mut idx = point_key(LossDistribution::Uniform, 64, 16, 16, 1.0);
            idx.push(run as u64);
            let mut data_rng = rng::derive(cfg.seed, "qbench-data", &idx);
            let hists: Vec<_> = (0..64)
                .map(|_| encode_client(LossDistribution::Uniform.sample(cfg.upper, &mut data_rng), &edges))
                .collect();
            let exact = sum_exact(&hists).unwrap();
            let best: f64 =
                cfg.thetas.iter().map(|&t| best_quantile_error(&exact, TailThreshold::new(t).unwrap())).sum::<f64>()
                    / cfg.thetas.len() as f64;
            assert!((r.error - best).abs() < 1e-12);
            assert_eq!(r.excess, 0.0);
        }
    }

    #[test]
    fn csv_layout() {
        let row = BenchRow {
            distribution: "uniform".into(),
            n: 256,
            b: 64,
            bit_width: 16,
            epsilon: 1.0,
            mean_quantile_error: 0.125,
            std: 0.5,
            mean_excess_error: 0.0,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "distribution,n,b,bit_width,epsilon,mean_quantile_error,std,mean_excess_error\nuniform,256,64,16,1,0.125,0.5,0\n"
        );
    }
}
