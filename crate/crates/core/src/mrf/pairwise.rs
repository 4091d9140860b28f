//! Learned bilinear pairwise potential over compressed prototype latents.

use std::fs;
use std::path::Path;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchor::{compress, SvdBasis};
use crate::error::{Error, Result};
use crate::geometry::{to_agent_frame, AgentPose, Trajectory};
use crate::profiler::loss::flattened_l2;
use crate::profiler::scorer::focal_loss_wrt_logits;
use crate::profiler::PrototypeSet;

/// `E[m, n] = z_mᵀ W z_n`, where both latents are compressed in agent i's
/// frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearPairwise {
    pub basis: SvdBasis,
    /// Row-major `d_s × d_s`.
    pub weights: Vec<f64>,
}

/// Latents of both agents' prototypes for one interacting pair, with the
/// ground-truth joint index.
#[derive(Clone, Debug, PartialEq)]
pub struct PairExample {
    pub latents_i: Vec<Vec<f64>>,
    pub latents_j: Vec<Vec<f64>>,
    /// `m * K_j + n`.
    pub gt: usize,
}

impl BilinearPairwise {
    pub fn zeros(basis: SvdBasis) -> Self {
        let d = basis.latent_dim();
        BilinearPairwise {
            basis,
            weights: vec![0.0; d * d],
        }
    }

    pub fn random(basis: SvdBasis, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut m = BilinearPairwise::zeros(basis);
        m.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        m
    }

    pub fn latent_dim(&self) -> usize {
        self.basis.latent_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.latent_dim();
        if self.weights.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("pairwise weights are not finite".into()));
        }
        Ok(())
    }

    pub fn latents_in_frame(&self, set: &PrototypeSet, pose: &AgentPose) -> Result<Vec<Vec<f64>>> {
        set.trajectories
            .iter()
            .map(|t| compress(&to_agent_frame(t, pose).flatten(), &self.basis))
            .collect()
    }

    pub fn score(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.latent_dim();
        let mut s = 0.0;
        for (r, ar) in a.iter().enumerate() {
            let row = &self.weights[r * d..(r + 1) * d];
            s += ar * row.iter().zip(b).map(|(w, bv)| w * bv).sum::<f64>();
        }
        s
    }

    /// Training example for the pair `(i, j)`; `None` when either agent lacks
    /// a ground-truth future.
    pub fn example(
        &self,
        set_i: &PrototypeSet,
        set_j: &PrototypeSet,
        gt_i: &Trajectory,
        gt_j: &Trajectory,
    ) -> Result<PairExample> {
        let (m, n) = gt_pair_index(set_i, set_j, gt_i, gt_j)?;
        Ok(PairExample {
            latents_i: self.latents_in_frame(set_i, &set_i.pose)?,
            latents_j: self.latents_in_frame(set_j, &set_i.pose)?,
            gt: m * set_j.len() + n,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: BilinearPairwise = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.validate()?;
        Ok(m)
    }

    /// Full-batch gradient descent on the mean pairwise focal loss. Returns the
    /// loss before each update plus the final loss.
    pub fn train(&mut self, data: &[PairExample], epochs: usize, lr: f64) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty pairwise training set".into()));
        }
        let mut curve = Vec::with_capacity(epochs + 1);
        for epoch in 0..=epochs {
            let mut total = 0.0;
            let mut grad = vec![0.0; self.weights.len()];
            for ex in data {
                let (l, g) = pairwise_focal_loss(self, ex)?;
                total += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let loss = total / data.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "pairwise training diverged at epoch {epoch} (lr {lr})"
                )));
            }
            curve.push(loss);
            if epoch == epochs {
                break;
            }
            debug!("pairwise epoch {epoch}: loss {loss:.6}");
            for (w, g) in self.weights.iter_mut().zip(&grad) {
                *w -= lr * g / data.len() as f64;
            }
        }
        Ok(curve)
    }
}

/// Joint index minimizing the summed flattened-L2 displacement to both ground
/// truths, ties to the lower `(m, n)`.
pub fn gt_pair_index(
    set_i: &PrototypeSet,
    set_j: &PrototypeSet,
    gt_i: &Trajectory,
    gt_j: &Trajectory,
) -> Result<(usize, usize)> {
    let di = set_i
        .trajectories
        .iter()
        .map(|t| flattened_l2(t, gt_i))
        .collect::<Result<Vec<_>>>()?;
    let dj = set_j
        .trajectories
        .iter()
        .map(|t| flattened_l2(t, gt_j))
        .collect::<Result<Vec<_>>>()?;
    if di.is_empty() || dj.is_empty() {
        return Err(Error::InvalidInput("empty prototype set".into()));
    }
    let mut best = (0, 0);
    let mut best_v = f64::INFINITY;
    for (m, a) in di.iter().enumerate() {
        for (n, b) in dj.iter().enumerate() {
            if a + b < best_v {
                best_v = a + b;
                best = (m, n);
            }
        }
    }
    Ok(best)
}

/// Focal loss of the ground-truth entry under a softmax over all `K_i × K_j`
/// pairwise scores, and its gradient with respect to `W`.
pub fn pairwise_focal_loss(model: &BilinearPairwise, ex: &PairExample) -> Result<(f64, Vec<f64>)> {
    let kj = ex.latents_j.len();
    let total = ex.latents_i.len() * kj;
    if ex.gt >= total {
        return Err(Error::InvalidInput(format!(
            "ground-truth pair {} out of range for {total} entries",
            ex.gt
        )));
    }
    let logits: Vec<f64> = ex
        .latents_i
        .iter()
        .flat_map(|a| ex.latents_j.iter().map(move |b| model.score(a, b)))
        .collect();
    let mask = vec![true; total];
    let (loss, d_logits) =
        focal_loss_wrt_logits(&logits, &mask, ex.gt, crate::profiler::FOCAL_ALPHA, crate::profiler::FOCAL_GAMMA)?;
    let d = model.latent_dim();
    let mut grad = vec![0.0; d * d];
    for (idx, dz) in d_logits.iter().enumerate() {
        let (a, b) = (&ex.latents_i[idx / kj], &ex.latents_j[idx % kj]);
        for r in 0..d {
            for c in 0..d {
                grad[r * d + c] += dz * a[r] * b[c];
            }
        }
    }
    Ok((loss, grad))
}
