use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FedError;
use crate::synth::ClientDataset;

/// `K x (d + 1)` weights stored row-major; the last entry of each row is the
/// class intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n_classes: usize,
    dim: usize,
    w: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self { n_classes, dim, w: vec![0.0; n_classes * (dim + 1)] }
    }

    pub fn from_vec(n_classes: usize, dim: usize, w: Vec<f64>) -> Result<Self, FedError> {
        let expected = n_classes * (dim + 1);
        if w.len() != expected {
            return Err(FedError::DimMismatch { expected, found: w.len() });
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(FedError::NonFinite(i));
        }
        Ok(Self { n_classes, dim, w })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of parameters `K (d + 1)`.
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    pub fn norm_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }

    fn check(&self, client: &ClientDataset) -> Result<(), FedError> {
        if client.dim != self.dim {
            return Err(FedError::DimMismatch { expected: self.dim, found: client.dim });
        }
        if let Some(&y) = client.labels.iter().find(|&&y| y as usize >= self.n_classes) {
            return Err(FedError::DimMismatch { expected: self.n_classes, found: y as usize + 1 });
        }
        Ok(())
    }

    fn logits(&self, x: &[f32], out: &mut [f64]) {
        let stride = self.dim + 1;
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.w[k * stride..(k + 1) * stride];
            *o = row[self.dim] + row[..self.dim].iter().zip(x).map(|(w, &x)| w * x as f64).sum::<f64>();
        }
    }

    /// Arg-max class per row; ties go to the smallest index.
    pub fn predict(&self, client: &ClientDataset) -> Result<Vec<u32>, FedError> {
        if client.dim != self.dim {
            return Err(FedError::DimMismatch { expected: self.dim, found: client.dim });
        }
        let mut z = vec![0.0; self.n_classes];
        Ok((0..client.rows())
            .map(|i| {
                self.logits(client.row(i), &mut z);
                let mut best = 0;
                for k in 1..z.len() {
                    if z[k] > z[best] {
                        best = k;
                    }
                }
                best as u32
            })
            .collect())
    }
}

/// Softmax in place, returning `log sum exp` of the input.
fn softmax(z: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
    m + s.ln()
}

/// Mean cross-entropy over the client's samples plus `lambda / 2 * |w|^2`.
pub fn client_loss(client: &ClientDataset, model: &ModelParams, lambda: f64) -> Result<f64, FedError> {
    model.check(client)?;
    let mut z = vec![0.0; model.n_classes];
    let mut total = 0.0;
    for i in 0..client.rows() {
        model.logits(client.row(i), &mut z);
        let y = client.labels[i] as usize;
        let zy = z[y];
        total += softmax(&mut z) - zy;
    }
    let mean = if client.rows() == 0 { 0.0 } else { total / client.rows() as f64 };
    Ok(mean + 0.5 * lambda * model.norm_sq())
}

/// Gradient of the unregularized mean cross-entropy over `batch` (all rows
/// when `None`).
pub fn client_gradient(
    client: &ClientDataset,
    model: &ModelParams,
    batch: Option<&[usize]>,
) -> Result<Vec<f64>, FedError> {
    model.check(client)?;
    let mut grad = vec![0.0; model.len()];
    let all: Vec<usize>;
    let rows = match batch {
        Some(b) => b,
        None => {
            all = (0..client.rows()).collect();
            &all
        }
    };
    if rows.is_empty() {
        return Ok(grad);
    }
    let stride = model.dim + 1;
    let mut p = vec![0.0; model.n_classes];
    for &i in rows {
        let x = client.row(i);
        model.logits(x, &mut p);
        softmax(&mut p);
        p[client.labels[i] as usize] -= 1.0;
        for (k, &pk) in p.iter().enumerate() {
            let g = &mut grad[k * stride..(k + 1) * stride];
            for (gj, &xj) in g.iter_mut().zip(x) {
                *gj += pk * xj as f64;
            }
            g[model.dim] += pk;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(grad)
}

/// `tau` steps of `w <- (1 - gamma lambda) w - gamma grad`, on minibatches
/// sampled without replacement when `batch_size` is smaller than the client.
pub fn local_update<R: Rng + ?Sized>(
    client: &ClientDataset,
    model: &ModelParams,
    gamma: f64,
    lambda: f64,
    tau: usize,
    batch_size: Option<usize>,
    rng: &mut R,
) -> Result<ModelParams, FedError> {
    let mut w = model.clone();
    let decay = 1.0 - gamma * lambda;
    for _ in 0..tau {
        let grad = match batch_size {
            Some(bs) if bs < client.rows() => {
                let batch = index::sample(rng, client.rows(), bs).into_vec();
                client_gradient(client, &w, Some(&batch))?
            }
            _ => client_gradient(client, &w, None)?,
        };
        for (wi, gi) in w.w.iter_mut().zip(&grad) {
            *wi = decay * *wi - gamma * gi;
        }
    }
    Ok(w)
}
