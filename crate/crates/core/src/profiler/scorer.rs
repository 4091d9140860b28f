//! Linear anchor scorer trained with the focal loss on the masked softmax
//! probability of the ground-truth anchor.

use std::fs;
use std::path::Path;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchor::RowMatrix;
use crate::error::{Error, Result};

use super::loss::focal_loss;
use super::{masked_softmax_or_fallback, FeatureSpec};

/// `logits = (Wᵀ·features + bias) / temperature`, with `W` stored
/// `d_feat × num_anchors`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    /// Row-major `d_feat × num_anchors`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub temperature: f64,
    pub feature_spec: FeatureSpec,
    pub seed: u64,
}

impl ScorerParams {
    pub fn zeros(feature_spec: FeatureSpec, num_anchors: usize) -> Self {
        ScorerParams {
            weights: vec![0.0; feature_spec.len() * num_anchors],
            bias: vec![0.0; num_anchors],
            temperature: 1.0,
            feature_spec,
            seed: 0,
        }
    }

    /// Small Gaussian weights, zero bias.
    pub fn random(feature_spec: FeatureSpec, num_anchors: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut p = ScorerParams::zeros(feature_spec, num_anchors);
        p.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        p.seed = seed;
        p
    }

    pub fn num_anchors(&self) -> usize {
        self.bias.len()
    }

    pub fn feature_len(&self) -> usize {
        self.feature_spec.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.feature_len() * self.num_anchors() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_len() * self.num_anchors(),
                got: self.weights.len(),
            });
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("scorer parameters are not finite".into()));
        }
        Ok(())
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_len(),
                got: features.len(),
            });
        }
        let k = self.num_anchors();
        let mut out = self.bias.clone();
        for (f, row) in features.iter().zip(self.weights.chunks_exact(k)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += f * w;
            }
        }
        out.iter_mut().for_each(|o| *o /= self.temperature);
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: ScorerParams = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        p.validate()?;
        Ok(p)
    }

    /// Weights as a matrix view, mostly for inspection.
    pub fn weight_matrix(&self) -> RowMatrix {
        RowMatrix {
            rows: self.feature_len(),
            cols: self.num_anchors(),
            data: self.weights.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    /// Anchor index of the ground-truth prototype.
    pub winner: usize,
    pub env_mask: Vec<bool>,
}

/// Focal loss of the winner's masked-softmax probability and its gradient
/// with respect to the logits.
pub fn focal_loss_wrt_logits(
    logits: &[f64],
    mask: &[bool],
    winner: usize,
    alpha: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    let scores = masked_softmax_or_fallback(logits, mask)?;
    let p = scores.probs[winner];
    let f = focal_loss(p, alpha, gamma);
    // dp_g/dz_k = p_g (δ_gk − p_k); masked entries have p_k = 0 and no path.
    let grad = scores
        .probs
        .iter()
        .enumerate()
        .map(|(k, &pk)| {
            let delta = if k == winner { 1.0 } else { 0.0 };
            f.d_prob * p * (delta - pk)
        })
        .collect();
    Ok((f.value, grad))
}

/// Mean focal loss over `data` and its gradient with respect to `(weights, bias)`.
pub fn loss_and_gradient(
    params: &ScorerParams,
    data: &[TrainingExample],
    alpha: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let k = params.num_anchors();
    let mut grad_w = vec![0.0; params.weights.len()];
    let mut grad_b = vec![0.0; k];
    let mut total = 0.0;
    for ex in data {
        if ex.env_mask.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: ex.env_mask.len(),
            });
        }
        if ex.winner >= k {
            return Err(Error::InvalidInput(format!(
                "winner {} out of range for {k} anchors",
                ex.winner
            )));
        }
        let logits = params.logits(&ex.features)?;
        let (loss, d_logits) = focal_loss_wrt_logits(&logits, &ex.env_mask, ex.winner, alpha, gamma)?;
        total += loss;
        for (j, dz) in d_logits.iter().enumerate() {
            let dz = dz / params.temperature;
            grad_b[j] += dz;
            for (f, fv) in ex.features.iter().enumerate() {
                grad_w[f * k + j] += fv * dz;
            }
        }
    }
    let n = data.len() as f64;
    grad_w.iter_mut().for_each(|g| *g /= n);
    grad_b.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad_w, grad_b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub params: ScorerParams,
    /// Mean loss before each epoch's update, plus the final loss.
    pub loss_curve: Vec<f64>,
}

/// Full-batch gradient descent on the mean focal loss. Deterministic; `seed`
/// is recorded in the returned parameters.
pub fn train_scorer(
    data: &[TrainingExample],
    params: &ScorerParams,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    params.validate()?;
    let mut params = params.clone();
    params.seed = seed;
    let mut loss_curve = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let (loss, gw, gb) = loss_and_gradient(&params, data, super::FOCAL_ALPHA, super::FOCAL_GAMMA)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "scorer training diverged at epoch {epoch} (lr {lr}, loss {loss})"
            )));
        }
        debug!("epoch {epoch}: loss {loss:.6}");
        loss_curve.push(loss);
        for (w, g) in params.weights.iter_mut().zip(&gw) {
            *w -= lr * g;
        }
        for (b, g) in params.bias.iter_mut().zip(&gb) {
            *b -= lr * g;
        }
        if params.weights.iter().chain(&params.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "scorer parameters became non-finite at epoch {epoch} (lr {lr})"
            )));
        }
    }
    let (loss, _, _) = loss_and_gradient(&params, data, super::FOCAL_ALPHA, super::FOCAL_GAMMA)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("final scorer loss is {loss}")));
    }
    loss_curve.push(loss);
    Ok(TrainReport { params, loss_curve })
}
