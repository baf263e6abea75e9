//! In-process stand-in for a secure summation oracle over `Z_M`.

use serde::{Deserialize, Serialize};

use super::DpError;

/// The ring of integers modulo `modulus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModRing {
    modulus: u64,
}

impl ModRing {
    pub fn new(modulus: u64) -> Result<Self, DpError> {
        if modulus < 2 {
            return Err(DpError::InvalidParameter(format!("modulus must be >= 2, got {modulus}")));
        }
        Ok(Self { modulus })
    }

    /// Ring of size `2^bits`, `1 <= bits <= 63`.
    pub fn with_bit_width(bits: u32) -> Result<Self, DpError> {
        if !(1..=63).contains(&bits) {
            return Err(DpError::InvalidParameter(format!("bit width must be in 1..=63, got {bits}")));
        }
        Self::new(1u64 << bits)
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Representative of `x` in `[0, M)`.
    pub fn reduce(&self, x: i128) -> u64 {
        x.rem_euclid(i128::from(self.modulus)) as u64
    }

    /// Centered representative of `x` in `(-M/2, M/2]`.
    pub fn centered(&self, x: u64) -> i64 {
        let x = x % self.modulus;
        if x > self.modulus / 2 {
            (i128::from(x) - i128::from(self.modulus)) as i64
        } else {
            x as i64
        }
    }
}

/// Componentwise `(sum_v x_v) mod M`.
///
/// The contributions are consumed; only the modular sum leaves this function.
pub fn secure_sum(contributions: Vec<Vec<u64>>, ring: ModRing) -> Result<Vec<u64>, DpError> {
    let mut iter = contributions.into_iter();
    let first = iter.next().ok_or(DpError::NoContributions)?;
    let m = u128::from(ring.modulus);
    let mut acc: Vec<u128> = first.iter().map(|&x| u128::from(x) % m).collect();
    for (index, v) in iter.enumerate() {
        if v.len() != acc.len() {
            return Err(DpError::LengthMismatch { index: index + 1, expected: acc.len(), found: v.len() });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a = (*a + u128::from(x)) % m;
        }
    }
    Ok(acc.into_iter().map(|a| a as u64).collect())
}
