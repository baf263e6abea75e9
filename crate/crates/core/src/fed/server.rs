use std::io::{self, Write};

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, FedConfig, RoundMode};
use super::model::{client_loss, local_update, ModelParams};
use super::FedError;
use crate::dp::{gaussian_update_rho, ModRing, PrivacyLedger};
use crate::eval::{self, ErrorDistribution, SummaryStats};
use crate::quantile::{
    dp_aggregate, encode_client, privacy_epsilon, quantile_from_histogram, AggregationParams, BinEdges,
};
use crate::risk::{self, LossVector, SmoothingParam, TailThreshold};
use crate::rng;
use crate::synth::{ClientDataset, FederatedDataset};

/// One line of the round history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected_ids: Vec<u32>,
    /// Loss threshold used for tail filtering, if the round filtered.
    pub quantile: Option<f64>,
    /// Number of clients with nonzero aggregation weight.
    pub cohort_after_filter: usize,
    pub mean_train_loss: f64,
    pub superquantile_train_loss: f64,
    /// Cumulative zCDP after this round.
    pub rho_spent: f64,
    /// The private threshold kept no client and the round fell back to the
    /// whole cohort.
    #[serde(default)]
    pub fallback: bool,
}

/// Running weighted average `sum_j beta_j w_j / sum_j beta_j` with
/// `beta_j = r^-(1 + j)`, `r = 1 - gamma lambda tau / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateAverage {
    pub model: ModelParams,
    ratio: f64,
    count: usize,
}

impl IterateAverage {
    pub fn new(model: ModelParams, ratio: f64) -> Self {
        Self { model, ratio, count: 0 }
    }

    pub fn push(&mut self, w: &ModelParams) {
        let t = self.count as i32;
        let r = self.ratio;
        // beta_t / sum_{j <= t} beta_j, a geometric series in r
        let coef = if (1.0 - r).abs() < 1e-15 { 1.0 / (t + 1) as f64 } else { (1.0 - r) / (1.0 - r.powi(t + 1)) };
        for (a, b) in self.model.as_mut_slice().iter_mut().zip(w.as_slice()) {
            *a += coef * (b - *a);
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedState {
    pub model: ModelParams,
    pub round: usize,
    pub ledger: PrivacyLedger,
    /// Root of every random stream; streams are keyed by round and client id.
    pub seed: u64,
    pub history: Vec<RoundRecord>,
    pub average: Option<IterateAverage>,
}

impl FedState {
    pub fn new(model: ModelParams, seed: u64) -> Self {
        Self { model, round: 0, ledger: PrivacyLedger::new(), seed, history: Vec::new(), average: None }
    }
}

/// `ceil(theta m)`, guarded against rounding just above an integer.
pub fn tail_count(theta: f64, m: usize) -> usize {
    ((theta * m as f64 - 1e-9).ceil() as usize).clamp(1, m)
}

struct Cohort {
    idx: Vec<usize>,
    losses: Vec<f64>,
}

fn sample_cohort(state: &FedState, clients: &[ClientDataset], m: usize, lambda: f64) -> Result<Cohort, FedError> {
    let mut r = rng::derive(state.seed, "cohort", &[state.round as u64]);
    let mut idx = index::sample(&mut r, clients.len(), m).into_vec();
    idx.sort_unstable_by_key(|&i| clients[i].id);
    let losses =
        idx.par_iter().map(|&i| client_loss(&clients[i], &state.model, lambda)).collect::<Result<Vec<_>, _>>()?;
    Ok(Cohort { idx, losses })
}

/// Locally updated models for the clients with nonzero weight, in cohort order.
fn local_models(
    state: &FedState,
    cfg: &FedConfig,
    clients: &[ClientDataset],
    cohort: &Cohort,
    active: &[bool],
) -> Result<Vec<Option<ModelParams>>, FedError> {
    let gamma = cfg.learning_rate_at(state.round);
    cohort
        .idx
        .par_iter()
        .zip(active)
        .map(|(&i, &on)| {
            if !on {
                return Ok(None);
            }
            let c = &clients[i];
            let mut r = rng::derive(state.seed, "local", &[state.round as u64, c.id as u64]);
            local_update(c, &state.model, gamma, cfg.lambda, cfg.local_steps, cfg.batch_size, &mut r).map(Some)
        })
        .collect()
}

/// `sum_i a_i w_i / sum_i a_i`, summed in cohort order.
fn weighted_average(models: &[Option<ModelParams>], weights: &[f64], like: &ModelParams) -> ModelParams {
    let mut out = vec![0.0; like.len()];
    let mut total = 0.0;
    for (m, &a) in models.iter().zip(weights) {
        if let Some(m) = m {
            if a > 0.0 {
                total += a;
                for (o, v) in out.iter_mut().zip(m.as_slice()) {
                    *o += a * v;
                }
            }
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    ModelParams::from_vec(like.n_classes(), like.dim(), out).expect("average of finite models")
}

/// `w + (1/|kept|) sum clip(w_i - w) + N(0, sigma_w^2 I)`.
fn private_average(state: &FedState, cfg: &FedConfig, models: &[Option<ModelParams>]) -> ModelParams {
    let base = state.model.as_slice();
    let mut sum = vec![0.0; base.len()];
    let mut kept = 0usize;
    for m in models.iter().flatten() {
        let delta: Vec<f64> = m.as_slice().iter().zip(base).map(|(a, b)| a - b).collect();
        let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        let scale = match cfg.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        for (s, d) in sum.iter_mut().zip(&delta) {
            *s += scale * d;
        }
        kept += 1;
    }
    let mut r = rng::derive(state.seed, "update-noise", &[state.round as u64]);
    let out = base
        .iter()
        .zip(&sum)
        .map(|(w, s)| {
            let z: f64 = StandardNormal.sample(&mut r);
            w + s / kept as f64 + cfg.noise_sigma_w * z
        })
        .collect();
    ModelParams::from_vec(state.model.n_classes(), state.model.dim(), out).expect("finite update")
}

fn sample_shares(clients: &[ClientDataset], cohort: &Cohort, weighted: bool) -> Vec<f64> {
    if !weighted {
        return vec![1.0 / cohort.idx.len() as f64; cohort.idx.len()];
    }
    let raw: Vec<f64> = cohort.idx.iter().map(|&i| clients[i].weight).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|a| a / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_round(
    state: &mut FedState,
    cfg: &FedConfig,
    clients: &[ClientDataset],
    cohort: &Cohort,
    model: ModelParams,
    quantile: Option<f64>,
    kept: usize,
    fallback: bool,
) -> Result<(), FedError> {
    let lv = LossVector::new(cohort.losses.clone())?;
    let record = RoundRecord {
        round: state.round,
        selected_ids: cohort.idx.iter().map(|&i| clients[i].id).collect(),
        quantile,
        cohort_after_filter: kept,
        mean_train_loss: lv.mean(),
        superquantile_train_loss: risk::superquantile(&lv, TailThreshold::new(cfg.theta)?),
        rho_spent: state.ledger.rho_total(),
        fallback,
    };
    state.model = model;
    if let Some(avg) = state.average.as_mut() {
        avg.push(&state.model);
    }
    state.history.push(record);
    state.round += 1;
    Ok(())
}

/// One tail-risk round.
pub fn run_round_delta_fl(
    state: &mut FedState,
    cfg: &FedConfig,
    clients: &[ClientDataset],
    mode: RoundMode,
) -> Result<(), FedError> {
    let m = cfg.clients_per_round;
    let theta = TailThreshold::new(cfg.theta)?;
    let cohort = sample_cohort(state, clients, m, cfg.lambda)?;
    let shares = sample_shares(clients, &cohort, cfg.weighted_aggregation);

    let (weights, quantile, fallback) = match mode {
        RoundMode::ExactQuantile => {
            let mut sorted = cohort.losses.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let q = sorted[tail_count(cfg.theta, m) - 1];
            let w = cohort.losses.iter().zip(&shares).map(|(&l, &a)| if l >= q { a } else { 0.0 }).collect();
            (w, Some(q), false)
        }
        RoundMode::DualWeights | RoundMode::Smoothed => {
            let lv = if cfg.weighted_aggregation {
                LossVector::with_weights(cohort.losses.clone(), shares.clone())?
            } else {
                LossVector::new(cohort.losses.clone())?
            };
            let pi = if mode == RoundMode::DualWeights {
                risk::dual_weights(&lv, theta)
            } else {
                risk::smoothed_weights(&lv, theta, SmoothingParam::new(cfg.nu)?)?
            };
            (pi.pi, None, false)
        }
        RoundMode::Dp => {
            let q = &cfg.quantile;
            let edges = BinEdges::uniform(q.loss_bound, q.bins)?;
            let hists: Vec<_> =
                cohort.losses.iter().map(|&l| encode_client(l.clamp(0.0, q.loss_bound), &edges)).collect();
            let params = AggregationParams {
                sigma2: q.sigma2,
                scale: q.scale,
                ring: ModRing::with_bit_width(q.bit_width)?,
                delta: q.delta,
            };
            let mut r = rng::derive(state.seed, "quantile-noise", &[state.round as u64]);
            let noisy = dp_aggregate(&hists, &params, &mut r)?;
            let threshold = quantile_from_histogram(&noisy, theta).value;
            let rho_q = privacy_epsilon(q.sigma2, q.scale, m, q.bins)?.rho;
            let rho_w = gaussian_update_rho(cfg.clip_norm.unwrap_or(f64::INFINITY), cfg.noise_sigma_w)?;
            state.ledger.add(format!("round {} quantile", state.round), rho_q)?;
            state.ledger.add(format!("round {} update", state.round), rho_w)?;
            let mut w: Vec<f64> = cohort.losses.iter().map(|&l| if l >= threshold { 1.0 } else { 0.0 }).collect();
            let fallback = w.iter().all(|&a| a == 0.0);
            if fallback {
                w.iter_mut().for_each(|a| *a = 1.0);
            }
            (w, Some(threshold), fallback)
        }
    };

    let active: Vec<bool> = weights.iter().map(|&a| a > 0.0).collect();
    let kept = active.iter().filter(|&&a| a).count();
    let models = local_models(state, cfg, clients, &cohort, &active)?;
    let next = match mode {
        RoundMode::Dp => private_average(state, cfg, &models),
        _ => weighted_average(&models, &weights, &state.model),
    };
    finish_round(state, cfg, clients, &cohort, next, quantile, kept, fallback)
}

/// FedAvg over `ceil(fraction m)` sampled clients; clipped and noised when
/// the configured algorithm is private.
pub fn run_round_fedavg(
    state: &mut FedState,
    cfg: &FedConfig,
    clients: &[ClientDataset],
    fraction: f64,
) -> Result<(), FedError> {
    let m = tail_count(fraction, cfg.clients_per_round);
    let cohort = sample_cohort(state, clients, m, cfg.lambda)?;
    let active = vec![true; m];
    let models = local_models(state, cfg, clients, &cohort, &active)?;
    let next = if cfg.algorithm.is_private() {
        let rho_w = gaussian_update_rho(cfg.clip_norm.unwrap_or(f64::INFINITY), cfg.noise_sigma_w)?;
        state.ledger.add(format!("round {} update", state.round), rho_w)?;
        private_average(state, cfg, &models)
    } else {
        let shares = sample_shares(clients, &cohort, cfg.weighted_aggregation);
        weighted_average(&models, &shares, &state.model)
    };
    finish_round(state, cfg, clients, &cohort, next, None, m, false)
}

/// Aggregation with weights proportional to `exp(nu F_i)` over the cohort.
pub fn run_round_tilted(
    state: &mut FedState,
    cfg: &FedConfig,
    clients: &[ClientDataset],
    nu: f64,
) -> Result<(), FedError> {
    let cohort = sample_cohort(state, clients, cfg.clients_per_round, cfg.lambda)?;
    let lv = if cfg.weighted_aggregation {
        LossVector::with_weights(cohort.losses.clone(), sample_shares(clients, &cohort, true))?
    } else {
        LossVector::new(cohort.losses.clone())?
    };
    let pi = risk::tilted_weights(&lv, nu)?.pi;
    let active: Vec<bool> = pi.iter().map(|&p| p > 0.0).collect();
    let kept = active.iter().filter(|&&a| a).count();
    let models = local_models(state, cfg, clients, &cohort, &active)?;
    let next = weighted_average(&models, &pi, &state.model);
    finish_round(state, cfg, clients, &cohort, next, None, kept, false)
}

/// Dispatches one round according to `cfg.algorithm`.
pub fn run_round(state: &mut FedState, cfg: &FedConfig, clients: &[ClientDataset]) -> Result<(), FedError> {
    match cfg.algorithm {
        Algorithm::FedAvg | Algorithm::FedAvgDp => run_round_fedavg(state, cfg, clients, 1.0),
        Algorithm::FedAvgSub => run_round_fedavg(state, cfg, clients, cfg.theta),
        Algorithm::TiltedErm => run_round_tilted(state, cfg, clients, cfg.nu),
        a => run_round_delta_fl(state, cfg, clients, a.round_mode().expect("tail-risk algorithm")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub stats: SummaryStats,
    pub errors: ErrorDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub round: usize,
    pub val: Option<SummaryStats>,
    pub test: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: FedConfig,
    pub rounds: usize,
    /// Sample-weighted mean of the training client losses.
    pub train_mean_loss: f64,
    /// Sample-weighted superquantile of the training client losses at `theta`.
    pub train_superquantile_loss: f64,
    pub val: Option<SplitReport>,
    pub test: Option<SplitReport>,
    pub eval_history: Vec<EvalPoint>,
    pub rho: f64,
    /// `(epsilon, delta)` at `delta = quantile.delta` for private runs.
    pub epsilon: Option<f64>,
    pub fallback_rounds: usize,
}

fn split_report(model: &ModelParams, clients: &[ClientDataset], name: &str) -> Result<Option<SplitReport>, FedError> {
    if clients.is_empty() {
        return Ok(None);
    }
    let map = |e: eval::EvalError| FedError::InvalidConfig(e.to_string());
    let errors = eval::evaluate(model, clients, name).map_err(map)?;
    let stats = eval::summarize(&errors).map_err(map)?;
    Ok(Some(SplitReport { stats, errors }))
}

/// Sample-weighted mean and superquantile of the training losses.
pub fn train_objective(
    model: &ModelParams,
    clients: &[ClientDataset],
    cfg: &FedConfig,
) -> Result<(f64, f64), FedError> {
    let losses = clients.par_iter().map(|c| client_loss(c, model, cfg.lambda)).collect::<Result<Vec<_>, _>>()?;
    let total: f64 = clients.iter().map(|c| c.weight).sum();
    let lv = if total > 0.0 {
        LossVector::with_weights(losses, clients.iter().map(|c| c.weight / total).collect())?
    } else {
        LossVector::new(losses)?
    };
    Ok((lv.mean(), risk::superquantile(&lv, TailThreshold::new(cfg.theta)?)))
}

/// Runs `cfg.rounds` rounds from the zero model and evaluates the result.
pub fn train(cfg: &FedConfig, dataset: &FederatedDataset) -> Result<(FedState, TrainReport), FedError> {
    cfg.validate(dataset.train.len())?;
    let model = ModelParams::zeros(dataset.n_classes(), dataset.dim());
    let mut state = FedState::new(model.clone(), cfg.seed);
    if cfg.average_iterates {
        let ratio = 1.0 - cfg.learning_rate * cfg.lambda * cfg.local_steps as f64 / 2.0;
        state.average = Some(IterateAverage::new(model, ratio));
    }
    let mut eval_history = Vec::new();
    for t in 0..cfg.rounds {
        run_round(&mut state, cfg, &dataset.train)?;
        if cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0 && t + 1 < cfg.rounds {
            eval_history.push(EvalPoint {
                round: t + 1,
                val: split_report(&state.model, &dataset.val, "val")?.map(|r| r.stats),
                test: split_report(&state.model, &dataset.test, "test")?.map(|r| r.stats),
            });
        }
    }
    let val = split_report(&state.model, &dataset.val, "val")?;
    let test = split_report(&state.model, &dataset.test, "test")?;
    eval_history.push(EvalPoint {
        round: cfg.rounds,
        val: val.as_ref().map(|r| r.stats),
        test: test.as_ref().map(|r| r.stats),
    });
    let (train_mean_loss, train_superquantile_loss) = train_objective(&state.model, &dataset.train, cfg)?;
    let rho = state.ledger.rho_total();
    let epsilon =
        if cfg.algorithm.is_private() { Some(state.ledger.epsilon_delta(cfg.quantile.delta)?.0) } else { None };
    let report = TrainReport {
        config: cfg.clone(),
        rounds: state.round,
        train_mean_loss,
        train_superquantile_loss,
        val,
        test,
        eval_history,
        rho,
        epsilon,
        fallback_rounds: state.history.iter().filter(|r| r.fallback).count(),
    };
    Ok((state, report))
}

/// One JSON object per round.
pub fn write_history<W: Write>(history: &[RoundRecord], mut out: W) -> io::Result<()> {
    for r in history {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
