//! Synthetic label-shift federated classification data.
//!
//! Every client shares the class-conditional feature distribution (a unit
//! Gaussian around a per-class mean in the informative subspace) but draws
//! its own label distribution from a symmetric Dirichlet. Small
//! concentration parameters give clients dominated by one or two classes.

mod io;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, StreamRng};

pub use io::{load, save};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse { path: String, offset: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub input_dim: usize,
    pub n_informative: usize,
    /// Random linear combinations of the informative features.
    pub n_redundant: usize,
    pub class_sep: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub samples_per_client: usize,
    pub alpha_train: f64,
    pub alpha_eval: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            input_dim: 20,
            n_informative: 15,
            n_redundant: 2,
            class_sep: 5.0,
            n_train: 2500,
            n_val: 500,
            n_test: 500,
            samples_per_client: 100,
            alpha_train: 0.5,
            alpha_eval: 0.01,
            seed: 2345,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.n_classes < 2 {
            return fail("need at least two classes");
        }
        if self.n_informative == 0 {
            return fail("need at least one informative feature");
        }
        if self.input_dim < self.n_informative + self.n_redundant {
            return fail("input_dim smaller than informative + redundant features");
        }
        if self.samples_per_client == 0 {
            return fail("samples_per_client must be >= 1");
        }
        if self.n_train == 0 {
            return fail("need at least one training client");
        }
        if !(self.alpha_train > 0.0 && self.alpha_eval > 0.0) || !self.alpha_train.is_finite() {
            return fail("Dirichlet parameters must be positive");
        }
        if !(self.class_sep > 0.0) || !self.class_sep.is_finite() {
            return fail("class_sep must be positive");
        }
        Ok(())
    }

    pub fn n_noise(&self) -> usize {
        self.input_dim - self.n_informative - self.n_redundant
    }
}

/// Local data of one simulated client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub id: u32,
    pub dim: usize,
    /// Row-major `rows x dim`.
    pub features: Vec<f32>,
    pub labels: Vec<u32>,
    /// Share of the split's samples held by this client.
    pub weight: f64,
}

impl ClientDataset {
    pub fn new(id: u32, dim: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self, DataError> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(DataError::InvalidConfig(format!(
                "client {id}: {} features for {} rows of dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { id, dim, features, labels, weight: 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label_histogram(&self, n_classes: usize) -> Vec<usize> {
        let mut h = vec![0; n_classes];
        for &y in &self.labels {
            h[y as usize] += 1;
        }
        h
    }
}

/// Sets each client's weight to its share of the samples in `clients`.
pub fn assign_sample_weights(clients: &mut [ClientDataset]) {
    let total: usize = clients.iter().map(ClientDataset::rows).sum();
    for c in clients {
        c.weight = c.rows() as f64 / total as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedDataset {
    pub config: SynthConfig,
    pub train: Vec<ClientDataset>,
    pub val: Vec<ClientDataset>,
    pub test: Vec<ClientDataset>,
}

impl FederatedDataset {
    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    pub fn dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn splits(&self) -> [(&'static str, &[ClientDataset]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Symmetric Dirichlet sample, computed in log space so that tiny
/// concentrations do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("positive shape");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / alpha
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    means: Vec<Vec<f64>>,
    /// `n_informative x n_redundant`
    mixing: Vec<f64>,
}

impl Generator<'_> {
    fn client<R: Rng + ?Sized>(&self, id: u32, alpha: f64, rng: &mut R) -> ClientDataset {
        let cfg = self.cfg;
        let q = sample_dirichlet(alpha, cfg.n_classes, rng);
        let classes = WeightedIndex::new(&q).expect("Dirichlet sample has positive mass");
        let (ni, nr) = (cfg.n_informative, cfg.n_redundant);
        let mut features = Vec::with_capacity(cfg.samples_per_client * cfg.input_dim);
        let mut labels = Vec::with_capacity(cfg.samples_per_client);
        let mut informative = vec![0.0; ni];
        for _ in 0..cfg.samples_per_client {
            let y = classes.sample(rng);
            for (x, mu) in informative.iter_mut().zip(&self.means[y]) {
                let z: f64 = StandardNormal.sample(rng);
                *x = mu + z;
            }
            features.extend(informative.iter().map(|&x| x as f32));
            for r in 0..nr {
                let v: f64 = (0..ni).map(|i| informative[i] * self.mixing[i * nr + r]).sum();
                features.push(v as f32);
            }
            for _ in 0..cfg.n_noise() {
                let z: f64 = StandardNormal.sample(rng);
                features.push(z as f32);
            }
            labels.push(y as u32);
        }
        ClientDataset { id, dim: cfg.input_dim, features, labels, weight: 0.0 }
    }
}

/// Generates a dataset from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<FederatedDataset, DataError> {
    generate_with(config, &mut rng::derive(config.seed, "synth", &[]))
}

/// Generates a dataset from an explicit stream. Class geometry is drawn
/// first, then the train, validation and test clients in id order.
pub fn generate_with(config: &SynthConfig, rng: &mut StreamRng) -> Result<FederatedDataset, DataError> {
    config.validate()?;
    let sep = config.class_sep;
    let means = (0..config.n_classes)
        .map(|_| {
            (0..config.n_informative)
                .map(|_| {
                    let corner = if rng.random::<bool>() { sep } else { -sep };
                    corner + rng.random_range(-0.3..=0.3) * sep
                })
                .collect()
        })
        .collect();
    let mixing = (0..config.n_informative * config.n_redundant).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let generator = Generator { cfg: config, means, mixing };

    let mut next_id = 0u32;
    let mut split = |count: usize, alpha: f64, rng: &mut StreamRng| {
        let mut clients: Vec<_> = (0..count)
            .map(|_| {
                let c = generator.client(next_id, alpha, rng);
                next_id += 1;
                c
            })
            .collect();
        assign_sample_weights(&mut clients);
        clients
    };
    let train = split(config.n_train, config.alpha_train, rng);
    let val = split(config.n_val, config.alpha_eval, rng);
    let test = split(config.n_test, config.alpha_eval, rng);
    Ok(FederatedDataset { config: config.clone(), train, val, test })
}
