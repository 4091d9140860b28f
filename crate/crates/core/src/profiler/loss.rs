//! Focal loss on a selected probability and the winner-takes-all regression
//! loss over a prototype set.

use crate::error::{Error, Result};
use crate::geometry::Trajectory;

use super::PrototypeSet;

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;
/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalLoss {
    pub value: f64,
    /// Derivative with respect to the probability; zero when clamped.
    pub d_prob: f64,
    pub clamped: bool,
}

/// `−α (1 − p)^γ ln p`.
pub fn focal_loss(prob: f64, alpha: f64, gamma: f64) -> FocalLoss {
    let clamped = !(prob >= PROB_FLOOR);
    let p = if clamped { PROB_FLOOR } else { prob.min(1.0) };
    let q = 1.0 - p;
    let value = -alpha * q.powf(gamma) * p.ln();
    let d_prob = if clamped {
        0.0
    } else {
        let q_pow_gm1 = if gamma == 1.0 { 1.0 } else { q.powf(gamma - 1.0) };
        alpha * gamma * q_pow_gm1 * p.ln() - alpha * q.powf(gamma) / p
    };
    FocalLoss {
        value,
        d_prob,
        clamped,
    }
}

/// L2 norm of the flattened displacement between two trajectories.
pub fn flattened_l2(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    Ok(a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| (p.x - q.x).powi(2) + (p.y - q.y).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Smallest flattened L2 error over the prototypes and its position in the set.
/// Ties go to the lower position.
pub fn wta_regression_loss(prototypes: &PrototypeSet, gt: &Trajectory) -> Result<(f64, usize)> {
    winner_of(&prototypes.trajectories, gt)
}

pub fn winner_of(candidates: &[Trajectory], gt: &Trajectory) -> Result<(f64, usize)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate trajectories".into()));
    }
    let mut best = (f64::INFINITY, 0);
    for (k, c) in candidates.iter().enumerate() {
        let d = flattened_l2(c, gt)?;
        if d < best.0 {
            best = (d, k);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AgentPose, Point2};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn focal_examples() {
        assert_eq!(focal_loss(1.0, FOCAL_ALPHA, FOCAL_GAMMA).value, 0.0);
        let v = -0.25 * 0.5f64.powi(2) * 0.5f64.ln();
        assert_abs_diff_eq!(focal_loss(0.5, FOCAL_ALPHA, FOCAL_GAMMA).value, v, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.043322, epsilon = 1e-6);
    }

    #[test]
    fn focal_clamps_zero() {
        let f = focal_loss(0.0, FOCAL_ALPHA, FOCAL_GAMMA);
        assert!(f.clamped);
        assert!(f.value.is_finite() && f.value > 0.0);
        assert_eq!(f.d_prob, 0.0);
    }

    #[test]
    fn focal_derivative_matches_finite_difference() {
        for &p in &[0.01, 0.2, 0.5, 0.9] {
            let h = 1e-6;
            let fd = (focal_loss(p + h, 0.25, 2.0).value - focal_loss(p - h, 0.25, 2.0).value) / (2.0 * h);
            let an = focal_loss(p, 0.25, 2.0).d_prob;
            assert!(((fd - an) / an).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn focal_strictly_decreasing(a in 0.001..0.998f64, gap in 1e-4..0.001f64) {
            let b = a + gap;
            prop_assert!(focal_loss(a, 0.25, 2.0).value > focal_loss(b, 0.25, 2.0).value);
        }
    }

    fn set(trajs: Vec<Trajectory>) -> PrototypeSet {
        let k = trajs.len();
        PrototypeSet {
            agent_id: 0,
            pose: AgentPose::identity(),
            anchor_indices: (0..k).collect(),
            trajectories: trajs,
            logits: vec![0.0; k],
            probs: vec![1.0 / k as f64; k],
        }
    }

    #[test]
    fn wta_examples() {
        let gt = Trajectory::from_xy(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let off = |dy: f64| gt.map_points(|p| Point2::new(p.x, p.y + dy));
        let (l, w) = wta_regression_loss(&set(vec![off(1.0), gt.clone(), off(2.0)]), &gt).unwrap();
        assert_eq!((l, w), (0.0, 1));

        // Offsets of 3/√2 and 5/√2 on both points give flattened norms 3 and 5.
        let s = std::f64::consts::SQRT_2;
        let (l, w) = wta_regression_loss(&set(vec![off(5.0 / s), off(3.0 / s)]), &gt).unwrap();
        assert_abs_diff_eq!(l, 3.0, epsilon = 1e-12);
        assert_eq!(w, 1);

        let short = Trajectory::from_xy(&[(0.0, 0.0)]).unwrap();
        assert!(wta_regression_loss(&set(vec![short]), &gt).is_err());
    }
}
