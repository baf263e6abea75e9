//! zCDP accounting with plain additive composition.

use serde::{Deserialize, Serialize};

use super::DpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub rho: f64,
}

/// Running total of zCDP charges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    entries: Vec<LedgerEntry>,
    rho_total: f64,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, label: impl Into<String>, rho: f64) -> Result<(), DpError> {
        if !(rho >= 0.0) {
            return Err(DpError::NegativeRho(rho));
        }
        self.entries.push(LedgerEntry { label: label.into(), rho });
        self.rho_total += rho;
        Ok(())
    }

    pub fn rho_total(&self) -> f64 {
        self.rho_total
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// `(epsilon, delta)`-DP implied by the accumulated zCDP,
    /// `epsilon = rho + 2 sqrt(rho log(1/delta))`.
    pub fn epsilon_delta(&self, delta: f64) -> Result<(f64, f64), DpError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DpError::InvalidParameter(format!("delta must be in (0, 1), got {delta}")));
        }
        let rho = self.rho_total;
        Ok((rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt(), delta))
    }
}

/// Largest `rho` whose `(epsilon, delta)` conversion does not exceed `epsilon`.
pub fn rho_for_epsilon(epsilon: f64, delta: f64) -> Result<f64, DpError> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::InvalidParameter(format!(
            "need epsilon > 0 and delta in (0, 1), got ({epsilon}, {delta})"
        )));
    }
    let l = (1.0 / delta).ln();
    Ok(((epsilon + l).sqrt() - l.sqrt()).powi(2))
}

/// zCDP of adding `N(0, sigma_w^2 I)` to a quantity of L2 sensitivity `clip_norm`.
pub fn gaussian_update_rho(clip_norm: f64, noise_sigma: f64) -> Result<f64, DpError> {
    if !(clip_norm > 0.0) || !(noise_sigma > 0.0) {
        return Err(DpError::InvalidParameter(format!(
            "clip norm and noise scale must be positive, got ({clip_norm}, {noise_sigma})"
        )));
    }
    Ok(clip_norm * clip_norm / (2.0 * noise_sigma * noise_sigma))
}
