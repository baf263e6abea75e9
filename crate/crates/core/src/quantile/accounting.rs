//! Closed-form privacy and utility of the distributed quantile protocol.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::QuantileError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyCost {
    /// The protocol is `epsilon^2 / 2`-zCDP.
    pub epsilon: f64,
    pub rho: f64,
}

fn check_common(sigma2: f64, n: usize, bins: usize) -> Result<(), QuantileError> {
    if n == 0 {
        return Err(QuantileError::InvalidParameter("need at least one client".into()));
    }
    if bins < 2 || !bins.is_power_of_two() {
        return Err(QuantileError::InvalidParameter(format!("bins must be a power of two >= 2, got {bins}")));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(QuantileError::InvalidParameter(format!("invalid sigma2 {sigma2}")));
    }
    Ok(())
}

/// zCDP of one protocol run with `n` clients, `b` bins, noise `sigma2` and scale `c`:
///
/// `epsilon = min( sqrt(c^2 log2(b)^2 / (n sigma^2) + psi b),
///                 c log2(b) / (sqrt(n) sigma) + psi sqrt(2b) )`,
/// `psi = 10 sum_{i=1}^{n-1} exp(-2 pi^2 sigma^2 i / (i+1))`.
pub fn privacy_epsilon(sigma2: f64, scale: u64, n: usize, bins: usize) -> Result<PrivacyCost, QuantileError> {
    check_common(sigma2, n, bins)?;
    if sigma2 < 0.25 {
        return Err(QuantileError::PreconditionViolated(sigma2));
    }
    let c = scale as f64;
    let log_b = (bins as f64).log2();
    let nf = n as f64;
    let psi = 10.0
        * (1..n)
            .map(|i| {
                let i = i as f64;
                (-2.0 * PI * PI * sigma2 * i / (i + 1.0)).exp()
            })
            .sum::<f64>();
    let b = bins as f64;
    let first = (c * c * log_b * log_b / (nf * sigma2) + psi * b).sqrt();
    let second = c * log_b / (nf.sqrt() * sigma2.sqrt()) + psi * (2.0 * b).sqrt();
    let epsilon = first.min(second);
    Ok(PrivacyCost { epsilon, rho: epsilon * epsilon / 2.0 })
}

/// High-probability additive quantile error,
/// `sqrt(4 sigma^2 / (c^2 n) log2(b) log(4b / delta))`.
pub fn utility_bound(sigma2: f64, scale: u64, n: usize, bins: usize, delta: f64) -> Result<f64, QuantileError> {
    check_common(sigma2, n, bins)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(QuantileError::InvalidParameter(format!("delta must be in (0, 1), got {delta}")));
    }
    let c = scale as f64;
    let b = bins as f64;
    Ok((4.0 * sigma2 / (c * c * n as f64) * b.log2() * (4.0 * b / delta).ln()).sqrt())
}

/// Smallest modulus ruling out wraparound w.p. `1 - delta`:
/// `2 + 2cn + 2n sqrt(2 sigma^2 log(16 n b / delta))`.
pub fn required_modulus(sigma2: f64, scale: u64, n: usize, bins: usize, delta: f64) -> Result<f64, QuantileError> {
    check_common(sigma2, n, bins)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(QuantileError::InvalidParameter(format!("delta must be in (0, 1), got {delta}")));
    }
    let nf = n as f64;
    Ok(2.0 + 2.0 * scale as f64 * nf + 2.0 * nf * (2.0 * sigma2 * (16.0 * nf * bins as f64 / delta).ln()).sqrt())
}

/// Smallest `sigma^2 >= 1/4` whose protocol cost is at most `target_rho`.
///
/// When even `sigma^2 = 1/4` is cheaper than the target, returns `1/4`.
pub fn calibrate_sigma2(target_rho: f64, scale: u64, n: usize, bins: usize) -> Result<f64, QuantileError> {
    if !(target_rho > 0.0) {
        return Err(QuantileError::InvalidParameter(format!("target rho must be positive, got {target_rho}")));
    }
    let rho_at = |s2: f64| privacy_epsilon(s2, scale, n, bins).map(|p| p.rho);
    let mut lo = 0.25;
    if rho_at(lo)? <= target_rho {
        return Ok(lo);
    }
    let mut hi = 1.0;
    while rho_at(hi)? > target_rho {
        lo = hi;
        hi *= 4.0;
        if hi > 1e30 {
            return Err(QuantileError::InvalidParameter("cannot reach target rho".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rho_at(mid)? > target_rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(hi)
}
