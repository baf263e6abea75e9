//! Per-client misclassification error and summary statistics.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fed::{FedError, ModelParams};
use crate::risk::{self, LossVector, TailThreshold};
use crate::synth::ClientDataset;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("client {0} has no samples")]
    EmptyClient(u32),
    #[error("no clients to evaluate")]
    NoClients,
    #[error(transparent)]
    Model(#[from] FedError),
}

/// Misclassification error (percent) of each client on its own data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub split: String,
    pub client_ids: Vec<u32>,
    pub per_client_error: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    /// Mean of the worst 10% of clients.
    pub sq90: f64,
    pub sq95: f64,
}

pub fn evaluate(model: &ModelParams, clients: &[ClientDataset], split: &str) -> Result<ErrorDistribution, EvalError> {
    let mut client_ids = Vec::with_capacity(clients.len());
    let mut per_client_error = Vec::with_capacity(clients.len());
    for c in clients {
        if c.rows() == 0 {
            return Err(EvalError::EmptyClient(c.id));
        }
        let correct = model.predict(c)?.iter().zip(&c.labels).filter(|(p, y)| p == y).count();
        client_ids.push(c.id);
        per_client_error.push(100.0 * (1.0 - correct as f64 / c.rows() as f64));
    }
    Ok(ErrorDistribution { split: split.to_string(), client_ids, per_client_error })
}

/// Percentile `tau` in `(0, 1)` as the atom-based quantile with tail mass `1 - tau`.
pub fn percentile(values: &LossVector, tau: f64) -> f64 {
    risk::quantile(values, TailThreshold::new(1.0 - tau).expect("tau in (0, 1)"))
}

pub fn tail_mean(values: &LossVector, tau: f64) -> f64 {
    risk::superquantile(values, TailThreshold::new(1.0 - tau).expect("tau in (0, 1)"))
}

pub fn summarize(dist: &ErrorDistribution) -> Result<SummaryStats, EvalError> {
    let lv = LossVector::new(dist.per_client_error.clone()).map_err(|_| EvalError::NoClients)?;
    let mean = lv.mean();
    let var = lv.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / lv.len() as f64;
    Ok(SummaryStats {
        mean,
        std: var.sqrt(),
        p10: percentile(&lv, 0.10),
        p50: percentile(&lv, 0.50),
        p90: percentile(&lv, 0.90),
        p95: percentile(&lv, 0.95),
        sq90: tail_mean(&lv, 0.90),
        sq95: tail_mean(&lv, 0.95),
    })
}

/// `client_id,error` rows.
pub fn write_errors_csv<W: Write>(dist: &ErrorDistribution, mut out: W) -> io::Result<()> {
    writeln!(out, "client_id,error")?;
    for (id, e) in dist.client_ids.iter().zip(&dist.per_client_error) {
        writeln!(out, "{id},{e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(v: Vec<f64>) -> ErrorDistribution {
        ErrorDistribution { split: "test".into(), client_ids: (0..v.len() as u32).collect(), per_client_error: v }
    }

    #[test]
    fn errors_csv() {
        let mut buf = Vec::new();
        write_errors_csv(&dist(vec![0.0, 37.5]), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "client_id,error\n0,0\n1,37.5\n");
    }

    #[test]
    fn constant_distribution() {
        let s = summarize(&dist(vec![12.5; 7])).unwrap();
        for v in [s.mean, s.p10, s.p50, s.p90, s.p95, s.sq90, s.sq95] {
            assert!((v - 12.5).abs() < 1e-12, "{v}");
        }
        assert!(s.std < 1e-12);
    }

    #[test]
    fn two_clients() {
        let s = summarize(&dist(vec![0.0, 100.0])).unwrap();
        assert_eq!(s.mean, 50.0);
        assert_eq!(s.p90, 100.0);
        assert_eq!(s.p50, 0.0);
        assert_eq!(s.sq90, 100.0);
        assert_eq!(s.std, 50.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(summarize(&dist(vec![])), Err(EvalError::NoClients)));
    }

    proptest! {
        #[test]
        fn ordering_and_permutation(mut v in prop::collection::vec(0.0f64..=100.0, 1..40), seed in any::<u64>()) {
            let s = summarize(&dist(v.clone())).unwrap();
            prop_assert!(s.p10 <= s.p50 && s.p50 <= s.p90 && s.p90 <= s.p95);
            prop_assert!(s.sq90 >= s.p90 - 1e-9 && s.sq95 >= s.p95 - 1e-9);
            prop_assert!(s.sq95 >= s.sq90 - 1e-9);
            let k = (seed as usize) % v.len();
            v.rotate_left(k);
            v.reverse();
            let t = summarize(&dist(v)).unwrap();
            prop_assert_eq!((s.p10, s.p50, s.p90, s.p95), (t.p10, t.p50, t.p90, t.p95));
            prop_assert!((s.mean - t.mean).abs() < 1e-9 && (s.sq90 - t.sq90).abs() < 1e-9);
        }
    }
}
