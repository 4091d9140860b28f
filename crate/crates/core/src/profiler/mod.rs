//! Agent-centric profiling: per-agent anchor scores, environmental zero-out,
//! softmax, top-K selection and world-frame materialization of prototypes.

pub mod loss;
pub mod scorer;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::anchor::{compress, AnchorDatabase, SvdBasis};
use crate::environment::DistanceArray;
use crate::error::{Error, Result};
use crate::geometry::{
    constant_velocity_extrapolate, from_agent_frame, to_agent_frame, AgentPose, Trajectory,
};
use crate::scene::AgentId;

pub use loss::{focal_loss, wta_regression_loss, FocalLoss, FOCAL_ALPHA, FOCAL_GAMMA};
pub use scorer::{train_scorer, ScorerParams, TrainReport, TrainingExample};

/// Default number of prototypes kept per agent.
pub const DEFAULT_TOP_K: usize = 20;
/// Default softmax temperature of the cosine scorer.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const NUM_SECTORS: usize = 36;
const NUM_SPEED_STATS: usize = 3;

/// Layout of an agent feature vector: `[latent | speed mean, last, std | sector minima]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub latent_dim: usize,
    pub speed_stats: usize,
    pub sectors: usize,
}

impl FeatureSpec {
    pub fn new(latent_dim: usize) -> Self {
        FeatureSpec {
            latent_dim,
            speed_stats: NUM_SPEED_STATS,
            sectors: NUM_SECTORS,
        }
    }

    pub fn len(&self) -> usize {
        self.latent_dim + self.speed_stats + self.sectors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentFeatures {
    pub values: Vec<f64>,
    pub spec: FeatureSpec,
    /// Stationary history: the latent block is all zeros.
    pub stationary: bool,
}

impl AgentFeatures {
    pub fn latent(&self) -> &[f64] {
        &self.values[..self.spec.latent_dim]
    }
}

pub fn agent_features(
    history: &Trajectory,
    dist: &DistanceArray,
    basis: &SvdBasis,
) -> Result<AgentFeatures> {
    let spec = FeatureSpec::new(basis.latent_dim());
    let (pose, stationary) = AgentPose::from_history(history)?;
    let mut values = Vec::with_capacity(spec.len());

    if stationary {
        values.extend(std::iter::repeat_n(0.0, spec.latent_dim));
    } else {
        let future = constant_velocity_extrapolate(history, basis.dim() / 2)?;
        values.extend(compress(&to_agent_frame(&future, &pose).flatten(), basis)?);
    }

    let speeds = history.step_speeds();
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let var = speeds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    values.extend([mean, speeds[speeds.len() - 1], var.sqrt()]);

    values.extend(dist.sector_minima(spec.sectors));
    Ok(AgentFeatures {
        values,
        spec,
        stationary,
    })
}

/// How anchor logits are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Scorer {
    /// Cosine similarity between the extrapolated latent and each anchor
    /// latent, divided by the temperature.
    Baseline { temperature: f64 },
    Trained(ScorerParams),
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::Baseline {
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
}

/// One logit per anchor.
pub fn score_anchors(features: &AgentFeatures, db: &AnchorDatabase, scorer: &Scorer) -> Result<Vec<f64>> {
    match scorer {
        Scorer::Baseline { temperature } => {
            if !(*temperature > 0.0) {
                return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
            }
            if features.spec.latent_dim != db.latent_dim() {
                return Err(Error::DimensionMismatch {
                    expected: db.latent_dim(),
                    got: features.spec.latent_dim,
                });
            }
            Ok(db
                .compressed
                .iter()
                .map(|z| cosine(features.latent(), z) / temperature)
                .collect())
        }
        Scorer::Trained(params) => {
            if params.num_anchors() != db.len() {
                return Err(Error::DimensionMismatch {
                    expected: db.len(),
                    got: params.num_anchors(),
                });
            }
            params.logits(&features.values)
        }
    }
}

/// Pre-softmax logits, masked softmax probabilities and the validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub env_mask: Vec<bool>,
    /// Every entry was masked and the softmax ran unmasked instead.
    pub fallback: bool,
}

impl ScoreVector {
    pub fn num_valid(&self) -> usize {
        if self.fallback {
            self.env_mask.len()
        } else {
            self.env_mask.iter().filter(|&&m| m).count()
        }
    }

    fn is_selectable(&self, k: usize) -> bool {
        self.fallback || self.env_mask[k]
    }
}

/// Max-stabilized softmax over the entries where `mask` is true; masked
/// entries get probability exactly 0.
pub fn env_masked_softmax(logits: &[f64], mask: &[bool]) -> Result<ScoreVector> {
    if logits.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.len(),
            got: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoValidAnchors);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(ScoreVector {
        logits: logits.to_vec(),
        probs,
        env_mask: mask.to_vec(),
        fallback: false,
    })
}

/// [`env_masked_softmax`], falling back to an unmasked softmax (with
/// `fallback` set) when every entry is masked.
pub fn masked_softmax_or_fallback(logits: &[f64], mask: &[bool]) -> Result<ScoreVector> {
    match env_masked_softmax(logits, mask) {
        Err(Error::NoValidAnchors) => {
            warn!("every anchor violates the map; falling back to an unmasked softmax");
            let mut s = env_masked_softmax(logits, &vec![true; logits.len()])?;
            s.env_mask = mask.to_vec();
            s.fallback = true;
            Ok(s)
        }
        other => other,
    }
}

/// Selected anchor indices with logits and probabilities renormalized over the selection.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSkeleton {
    pub anchor_indices: Vec<usize>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// The `k` most probable selectable anchors, ordered by probability with ties
/// going to the lower anchor index.
pub fn select_top_k(scores: &ScoreVector, k: usize) -> Result<PrototypeSkeleton> {
    let available = scores.num_valid();
    if k == 0 || k > available {
        return Err(Error::NotEnoughCandidates {
            requested: k,
            available,
        });
    }
    let mut order: Vec<usize> = (0..scores.probs.len())
        .filter(|&i| scores.is_selectable(i))
        .collect();
    order.sort_by(|&a, &b| scores.probs[b].total_cmp(&scores.probs[a]).then(a.cmp(&b)));
    order.truncate(k);
    let total: f64 = order.iter().map(|&i| scores.probs[i]).sum();
    let probs = if total > 0.0 {
        order.iter().map(|&i| scores.probs[i] / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    Ok(PrototypeSkeleton {
        logits: order.iter().map(|&i| scores.logits[i]).collect(),
        anchor_indices: order,
        probs,
    })
}

/// Per-agent candidate futures in world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    pub agent_id: AgentId,
    /// Frame the anchors were placed in.
    pub pose: AgentPose,
    pub anchor_indices: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Places each selected anchor at `pose`.
pub fn materialize_prototypes(
    skeleton: &PrototypeSkeleton,
    db: &AnchorDatabase,
    pose: &AgentPose,
    agent_id: AgentId,
) -> Result<PrototypeSet> {
    let trajectories = skeleton
        .anchor_indices
        .iter()
        .map(|&i| {
            db.anchors
                .get(i)
                .map(|a| from_agent_frame(a, pose))
                .ok_or(Error::IndexOutOfRange {
                    agent: agent_id as usize,
                    index: i,
                    len: db.len(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrototypeSet {
        agent_id,
        pose: *pose,
        anchor_indices: skeleton.anchor_indices.clone(),
        trajectories,
        logits: skeleton.logits.clone(),
        probs: skeleton.probs.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        let s = env_masked_softmax(&[0.3; 4], &[true; 4]).unwrap();
        assert!(s.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let s = env_masked_softmax(&[0.0, 0.0], &[true, false]).unwrap();
        assert_eq!(s.probs, vec![1.0, 0.0]);

        // 1/(1+e) and e/(1+e), evaluated far from overflow.
        let s = env_masked_softmax(&[1000.0, 1001.0], &[true, true]).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(s.probs[0], 1.0 / (1.0 + e), epsilon = 1e-15);
        assert_abs_diff_eq!(s.probs[1], e / (1.0 + e), epsilon = 1e-15);
    }

    #[test]
    fn all_masked_is_an_error_and_falls_back() {
        assert!(matches!(
            env_masked_softmax(&[1.0, 2.0], &[false, false]),
            Err(Error::NoValidAnchors)
        ));
        let s = masked_softmax_or_fallback(&[0.0, 0.0], &[false, false]).unwrap();
        assert!(s.fallback);
        assert_eq!(s.probs, vec![0.5, 0.5]);
        assert_eq!(select_top_k(&s, 2).unwrap().anchor_indices, vec![0, 1]);
    }

    #[test]
    fn top_k_examples() {
        let s = env_masked_softmax(&[0.1, 2.0, -1.0, 0.5], &[true; 4]).unwrap();
        assert_eq!(select_top_k(&s, 4).unwrap().anchor_indices, vec![1, 3, 0, 2]);

        let s = env_masked_softmax(&[0.0; 6], &[true; 6]).unwrap();
        let sk = select_top_k(&s, 3).unwrap();
        assert_eq!(sk.anchor_indices, vec![0, 1, 2]);
        assert!(sk.probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));

        let s = env_masked_softmax(&[5.0, 0.0, 1.0], &[false, true, true]).unwrap();
        assert_eq!(select_top_k(&s, 2).unwrap().anchor_indices, vec![2, 1]);
        assert!(matches!(
            select_top_k(&s, 3),
            Err(Error::NotEnoughCandidates { requested: 3, available: 2 })
        ));
    }

    fn arb_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(-20.0..20.0f64, n),
                prop::collection::vec(prop::bool::weighted(0.7), n),
            )
        })
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant_and_masked_zero((logits, mut mask) in arb_scores(), c in -500.0..500.0f64) {
            mask[0] = true;
            let a = env_masked_softmax(&logits, &mask).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            let b = env_masked_softmax(&shifted, &mask).unwrap();
            for ((p, q), m) in a.probs.iter().zip(&b.probs).zip(&mask) {
                prop_assert!((p - q).abs() < 1e-9);
                if !m { prop_assert_eq!(*p, 0.0); }
            }
            prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn top_k_matches_full_sort((logits, mut mask) in arb_scores(), k in 1usize..10) {
            mask[0] = true;
            let s = env_masked_softmax(&logits, &mask).unwrap();
            let k = k.min(s.num_valid());
            let got = select_top_k(&s, k).unwrap();
            let mut oracle: Vec<(f64, usize)> = (0..logits.len()).filter(|&i| mask[i]).map(|i| (-s.probs[i], i)).collect();
            oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want: Vec<usize> = oracle.iter().take(k).map(|x| x.1).collect();
            prop_assert_eq!(&got.anchor_indices, &want);
            prop_assert!((got.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn top_k_invariant_under_monotone_transform((logits, mut mask) in arb_scores(), k in 1usize..10) {
            mask[0] = true;
            let s = env_masked_softmax(&logits, &mask).unwrap();
            let k = k.min(s.num_valid());
            let mut t = s.clone();
            t.probs = s.probs.iter().map(|p| p.sqrt() * 3.0 + 1.0).collect();
            prop_assert_eq!(select_top_k(&s, k).unwrap().anchor_indices, select_top_k(&t, k).unwrap().anchor_indices);
        }
    }
}
