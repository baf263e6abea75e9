//! Shared inputs for the criterion benchmarks.

use rand::Rng;
use tailfl::fed::FedConfig;
use tailfl::quantile::{encode_client, BinEdges, HierHistogram};
use tailfl::risk::LossVector;
use tailfl::rng;
use tailfl::synth::{self, FederatedDataset, SynthConfig};

/// `n` uniform losses on `[0, 10)` with random weights.
pub fn losses(n: usize, seed: u64) -> LossVector {
    let mut r = rng::derive(seed, "bench-losses", &[n as u64]);
    let values: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    LossVector::with_weights(values, raw.iter().map(|w| w / total).collect()).expect("valid weights")
}

/// One encoded histogram per client.
pub fn client_histograms(n: usize, bins: usize, seed: u64) -> Vec<HierHistogram> {
    let edges = BinEdges::uniform(10.0, bins).expect("power of two");
    let mut r = rng::derive(seed, "bench-hist", &[n as u64, bins as u64]);
    (0..n).map(|_| encode_client(r.random_range(0.0..10.0), &edges)).collect()
}

/// Default-shaped dataset with `n_train` clients and no evaluation splits.
pub fn federation(n_train: usize) -> FederatedDataset {
    let cfg = SynthConfig { n_train, n_val: 0, n_test: 0, class_sep: 1.0, seed: 11, ..Default::default() };
    synth::generate(&cfg).expect("valid config")
}

pub fn round_config(algorithm: tailfl::fed::Algorithm, clients_per_round: usize) -> FedConfig {
    FedConfig {
        algorithm,
        theta: 0.5,
        nu: 0.1,
        clients_per_round,
        clip_norm: Some(1.0),
        noise_sigma_w: 0.01,
        ..Default::default()
    }
}
