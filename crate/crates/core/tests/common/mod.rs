//! Reference implementations used as test oracles. Each one is written
//! against a different characterisation than the library code it checks.
#![allow(dead_code)]

use rand::Rng;
use tailfl::rng::{self, StreamRng};
use tailfl::synth::{self, ClientDataset, SynthConfig};

/// Random losses with optional random weights; roughly one instance in four
/// has repeated values.
pub fn random_instance(r: &mut StreamRng, max_n: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = r.random_range(1..=max_n);
    let ties = r.random_bool(0.25);
    let values: Vec<f64> =
        (0..n).map(|_| if ties { r.random_range(0..5) as f64 } else { r.random_range(-3.0..7.0) }).collect();
    let weights = if r.random_bool(0.5) {
        let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        Some(raw.into_iter().map(|w| w / s).collect())
    } else {
        None
    };
    (values, weights)
}

pub fn weights_or_uniform(n: usize, w: &Option<Vec<f64>>) -> Vec<f64> {
    w.clone().unwrap_or_else(|| vec![1.0 / n as f64; n])
}

/// Atoms sorted ascending with their cumulative distribution.
fn ascending_cdf(values: &[f64], weights: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cdf = 0.0;
    idx.into_iter()
        .map(|i| {
            let lo = cdf;
            cdf += weights[i];
            (values[i], lo, cdf)
        })
        .collect()
}

/// Smallest atom `eta` with `F(eta) >= 1 - theta`.
pub fn inverse_cdf_quantile(values: &[f64], weights: &[f64], theta: f64) -> f64 {
    let atoms = ascending_cdf(values, weights);
    // compare against a total mass of one to absorb rounding in the cumulative sum
    let total = atoms.last().unwrap().2;
    for &(v, _, hi) in &atoms {
        if hi >= total - theta - 1e-12 {
            return v;
        }
    }
    atoms.last().unwrap().0
}

/// `(1/theta) int_{1-theta}^{1} F^{-1}(u) du`, integrated exactly over the
/// piecewise-constant quantile function.
pub fn integrated_superquantile(values: &[f64], weights: &[f64], theta: f64) -> f64 {
    let atoms = ascending_cdf(values, weights);
    let total = atoms.last().unwrap().2;
    let start = total - theta;
    let mut acc = 0.0;
    for &(v, lo, hi) in &atoms {
        let overlap = (hi.min(total) - lo.max(start)).max(0.0);
        acc += v * overlap;
    }
    acc / theta
}

/// Midpoint-rule quadrature of the same integral on `points` nodes.
pub fn quadrature_superquantile(values: &[f64], weights: &[f64], theta: f64, points: usize) -> f64 {
    let atoms = ascending_cdf(values, weights);
    let total = atoms.last().unwrap().2;
    let h = theta / points as f64;
    let mut k = 0;
    let mut acc = 0.0;
    for p in 0..points {
        let u = total - theta + (p as f64 + 0.5) * h;
        while k + 1 < atoms.len() && atoms[k].2 <= u {
            k += 1;
        }
        acc += atoms[k].0;
    }
    acc * h / theta
}

/// `min_eta eta + (1/theta) E (Z - eta)_+`, minimised over the atoms.
pub fn rockafellar_uryasev(values: &[f64], weights: &[f64], theta: f64) -> f64 {
    values
        .iter()
        .map(|&eta| eta + values.iter().zip(weights).map(|(v, w)| w * (v - eta).max(0.0)).sum::<f64>() / theta)
        .fold(f64::INFINITY, f64::min)
}

/// Optimal value of `max pi . z` over `{0 <= pi_i <= w_i / theta, sum pi = 1}`
/// by enumerating every vertex: all coordinates at a bound except possibly one.
pub fn lp_vertex_value(values: &[f64], weights: &[f64], theta: f64) -> f64 {
    let n = values.len();
    assert!(n <= 14, "vertex enumeration is exponential");
    let caps: Vec<f64> = weights.iter().map(|w| w / theta).collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let at_cap: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| caps[i]).sum();
        let base: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| caps[i] * values[i]).sum();
        if (at_cap - 1.0).abs() < 1e-12 {
            best = best.max(base);
        }
        for free in (0..n).filter(|&i| mask >> i & 1 == 0) {
            let rest = 1.0 - at_cap;
            if rest >= -1e-12 && rest <= caps[free] + 1e-12 {
                best = best.max(base + rest * values[free]);
            }
        }
    }
    best
}

/// Checks the optimality certificate of a capped-simplex LP solution: some
/// `eta` has every atom above it at its cap and every atom below it at zero.
pub fn lp_certificate(values: &[f64], weights: &[f64], theta: f64, pi: &[f64], tol: f64) -> Result<(), String> {
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("weights sum to {sum}"));
    }
    for (i, (&p, &w)) in pi.iter().zip(weights).enumerate() {
        if p < -tol || p > w / theta + tol {
            return Err(format!("pi[{i}] = {p} outside [0, {}]", w / theta));
        }
    }
    let ok = values.iter().any(|&eta| {
        values
            .iter()
            .zip(pi)
            .zip(weights)
            .all(|((&v, &p), &w)| (v <= eta || (p - w / theta).abs() <= tol) && (v >= eta || p.abs() <= tol))
    });
    if ok {
        Ok(())
    } else {
        Err("no threshold separates capped and zero weights".into())
    }
}

/// Maximiser of `pi . z - nu KL(pi || w)` on the capped simplex, from the
/// KKT form `pi_i = min(cap_i, w_i exp((z_i - mu) / nu))` with `mu` found by
/// bisection.
pub fn smoothed_by_bisection(values: &[f64], weights: &[f64], theta: f64, nu: f64) -> Vec<f64> {
    let zmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pi_at = |mu: f64| -> Vec<f64> {
        values.iter().zip(weights).map(|(&z, &w)| (w / theta).min(w * ((z - zmax) / nu - mu).exp())).collect()
    };
    // total mass is decreasing in mu: every atom is capped at `lo`, and the
    // mass is at most one from `mu = 0` on
    let zmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = ((zmin - zmax) / nu + theta.ln() - 1.0, 0.0);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if pi_at(mid).iter().sum::<f64>() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pi = pi_at(0.5 * (lo + hi));
    let s: f64 = pi.iter().sum();
    pi.into_iter().map(|p| p / s).collect()
}

pub fn kl(pi: &[f64], w: &[f64]) -> f64 {
    pi.iter().zip(w).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q).ln()).sum()
}

/// Small synthetic federation for training tests.
pub fn small_federation(n_clients: usize, samples: usize, seed: u64) -> Vec<ClientDataset> {
    let cfg = SynthConfig {
        n_classes: 3,
        input_dim: 5,
        n_informative: 3,
        n_redundant: 1,
        class_sep: 1.0,
        n_train: n_clients,
        n_val: 0,
        n_test: 0,
        samples_per_client: samples,
        alpha_train: 0.5,
        alpha_eval: 0.5,
        seed,
    };
    synth::generate(&cfg).unwrap().train
}

/// Cross-entropy by direct summation, written without shared helpers.
pub fn scalar_loss(c: &ClientDataset, k: usize, w: &[f64], lambda: f64) -> f64 {
    let d = c.dim;
    let mut total = 0.0f64;
    for i in 0..c.rows() {
        let mut z = Vec::with_capacity(k);
        for class in 0..k {
            let mut s = w[class * (d + 1) + d];
            for j in 0..d {
                s += w[class * (d + 1) + j] * c.features[i * d + j] as f64;
            }
            z.push(s);
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[c.labels[i] as usize];
    }
    total / c.rows() as f64 + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Central differences of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_vector(seed: u64, len: usize, scale: f64) -> Vec<f64> {
    let mut r = rng::derive(seed, "vec", &[]);
    (0..len).map(|_| r.random_range(-scale..scale)).collect()
}
