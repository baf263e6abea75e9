//! Exact sampling from the discrete Gaussian `N_Z(0, sigma^2)`, with pmf
//! proportional to `exp(-k^2 / (2 sigma^2))` on the integers.
//!
//! The sampler is the rejection scheme from a discrete Laplace proposal
//! (Canonne, Kamath, Steinke 2020). All acceptance tests are Bernoulli trials
//! with rational parameters evaluated in integer arithmetic, so the output
//! distribution is exact for the rational value of `sigma^2` stored in the
//! parameters (the input `f64` rounded to at least 40 significant bits).

use rand::Rng;

use super::DpError;

const MAX_TRIALS: u64 = 1_000_000;

/// Discrete Gaussian with variance proxy `sigma2 = num / den`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteGaussian {
    sigma2: f64,
    num: u128,
    den: u128,
    /// Discrete Laplace scale of the proposal, `floor(sigma) + 1`.
    scale: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl DiscreteGaussian {
    pub fn new(sigma2: f64) -> Result<Self, DpError> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() || sigma2 > 1e15 {
            return Err(DpError::InvalidParameter(format!("discrete Gaussian needs 0 < sigma2 <= 1e15, got {sigma2}")));
        }
        let shift = (40 - sigma2.log2().ceil() as i32).clamp(0, 40);
        let den = 1u128 << shift;
        let num = (sigma2 * den as f64).round().max(1.0) as u128;
        let g = gcd(num, den);
        Ok(Self { sigma2, num: num / g, den: den / g, scale: sigma2.sqrt().floor() as u128 + 1 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// The rational `sigma^2` the sampler is exact for.
    pub fn exact_sigma2(&self) -> (u128, u128) {
        (self.num, self.den)
    }

    /// Unnormalised pmf `exp(-k^2 / (2 sigma^2))`.
    pub fn weight(&self, k: i64) -> f64 {
        let k = k as f64;
        (-k * k / (2.0 * self.sigma2)).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<i64, DpError> {
        let t = self.scale;
        // accept Y w.p. exp(-(|Y| - sigma2/t)^2 / (2 sigma2))
        //   = exp(-(|Y| q t - p)^2 / (2 p q t^2)) with sigma2 = p/q
        let denom = 2 * self.num * self.den * t * t;
        for _ in 0..MAX_TRIALS {
            let y = discrete_laplace(rng, t);
            let scaled = match (y.unsigned_abs() as u128).checked_mul(self.den * t) {
                Some(v) => v,
                // |Y| beyond 2^64 / (q t): acceptance probability underflows anyway
                None => continue,
            };
            let diff = scaled.abs_diff(self.num);
            let Some(numer) = diff.checked_mul(diff) else {
                continue;
            };
            if bernoulli_exp(rng, numer, denom) {
                return Ok(y);
            }
        }
        Err(DpError::SamplerStuck(MAX_TRIALS))
    }
}

/// Draws one `N_Z(0, sigma2)` sample.
pub fn sample_discrete_gaussian<R: Rng + ?Sized>(params: &DiscreteGaussian, rng: &mut R) -> Result<i64, DpError> {
    params.sample(rng)
}

/// Bernoulli(n / d), `n <= d`.
fn bernoulli_frac<R: Rng + ?Sized>(rng: &mut R, n: u128, d: u128) -> bool {
    rng.random_range(0..d) < n
}

/// Bernoulli(exp(-n / d)) for `n <= d`.
fn bernoulli_exp_unit<R: Rng + ?Sized>(rng: &mut R, n: u128, d: u128) -> bool {
    let mut k: u128 = 1;
    loop {
        match d.checked_mul(k) {
            Some(dk) if bernoulli_frac(rng, n, dk) => k += 1,
            _ => return k % 2 == 1,
        }
    }
}

/// Bernoulli(exp(-n / d)) for any `n`.
fn bernoulli_exp<R: Rng + ?Sized>(rng: &mut R, mut n: u128, d: u128) -> bool {
    while n > d {
        if bernoulli_exp_unit(rng, 1, 1) {
            n -= d;
        } else {
            return false;
        }
    }
    bernoulli_exp_unit(rng, n, d)
}

/// Number of successes of Bernoulli(exp(-1)) before the first failure.
fn geometric_exp_one<R: Rng + ?Sized>(rng: &mut R) -> u128 {
    let mut k = 0;
    while bernoulli_exp_unit(rng, 1, 1) {
        k += 1;
    }
    k
}

/// Geometric with success probability `1 - exp(-1/t)`.
fn geometric_exp_scale<R: Rng + ?Sized>(rng: &mut R, t: u128) -> u128 {
    let mut u = rng.random_range(0..t);
    while !bernoulli_exp(rng, u, t) {
        u = rng.random_range(0..t);
    }
    geometric_exp_one(rng) * t + u
}

/// Discrete Laplace with pmf proportional to `exp(-|k| / t)`.
fn discrete_laplace<R: Rng + ?Sized>(rng: &mut R, t: u128) -> i64 {
    loop {
        let positive = rng.random::<bool>();
        let magnitude = geometric_exp_scale(rng, t).min(i64::MAX as u128) as i64;
        if positive || magnitude != 0 {
            return if positive { magnitude } else { -magnitude };
        }
    }
}
