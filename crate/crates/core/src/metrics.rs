//! Displacement, collision and density metrics for multi-sample joint
//! predictions.
//!
//! Every per-scene function takes ground truth as `gt[agent]` and predictions
//! as `preds[sample][agent]`. Distances are Euclidean (unsquared).

use serde::{Deserialize, Serialize};

use crate::environment::NavigabilityMap;
use crate::error::{Error, Result};
use crate::geometry::{min_pairwise_distance, Trajectory};

pub const DEFAULT_A2A_THRESHOLD: f64 = 0.2;
pub const KDE_MIN_BANDWIDTH: f64 = 1e-3;
pub const BANDWIDTH_RULE: &str = "silverman-per-dimension";

fn check_shapes(gt: &[Trajectory], preds: &[Vec<Trajectory>]) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::InvalidInput("no agents to evaluate".into()));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no prediction samples".into()));
    }
    let t = gt[0].len();
    for g in gt {
        if g.len() != t {
            return Err(Error::DimensionMismatch { expected: t, got: g.len() });
        }
    }
    for sample in preds {
        if sample.len() != gt.len() {
            return Err(Error::DimensionMismatch {
                expected: gt.len(),
                got: sample.len(),
            });
        }
        for p in sample {
            if p.len() != t {
                return Err(Error::DimensionMismatch { expected: t, got: p.len() });
            }
        }
    }
    Ok(())
}

/// Mean and final displacement between two equal-length trajectories.
fn displacement(a: &Trajectory, b: &Trajectory) -> (f64, f64) {
    let d: Vec<f64> = a
        .points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| p.distance(q))
        .collect();
    (d.iter().sum::<f64>() / d.len() as f64, d[d.len() - 1])
}

/// `errors[sample][agent] = (ade, fde)`.
fn error_table(gt: &[Trajectory], preds: &[Vec<Trajectory>]) -> Result<Vec<Vec<(f64, f64)>>> {
    check_shapes(gt, preds)?;
    Ok(preds
        .iter()
        .map(|s| s.iter().zip(gt).map(|(p, g)| displacement(p, g)).collect())
        .collect())
}

/// Per agent the best sample's ADE and the best sample's FDE (chosen
/// independently), averaged over agents.
pub fn min_ade_fde(gt: &[Trajectory], preds: &[Vec<Trajectory>]) -> Result<(f64, f64)> {
    let e = error_table(gt, preds)?;
    let n = gt.len();
    let mut ade = 0.0;
    let mut fde = 0.0;
    for agent in 0..n {
        ade += e.iter().map(|s| s[agent].0).fold(f64::INFINITY, f64::min);
        fde += e.iter().map(|s| s[agent].1).fold(f64::INFINITY, f64::min);
    }
    Ok((ade / n as f64, fde / n as f64))
}

/// Minimum over samples of the across-agent mean ADE and FDE.
pub fn jade_jfde(gt: &[Trajectory], preds: &[Vec<Trajectory>]) -> Result<(f64, f64)> {
    let e = error_table(gt, preds)?;
    let n = gt.len() as f64;
    let jade = e
        .iter()
        .map(|s| s.iter().map(|x| x.0).sum::<f64>() / n)
        .fold(f64::INFINITY, f64::min);
    let jfde = e
        .iter()
        .map(|s| s.iter().map(|x| x.1).sum::<f64>() / n)
        .fold(f64::INFINITY, f64::min);
    Ok((jade, jfde))
}

pub fn avg_ade_fde(gt: &[Trajectory], preds: &[Vec<Trajectory>]) -> Result<(f64, f64)> {
    let e = error_table(gt, preds)?;
    let count = (e.len() * gt.len()) as f64;
    let ade = e.iter().flatten().map(|x| x.0).sum::<f64>() / count;
    let fde = e.iter().flatten().map(|x| x.1).sum::<f64>() / count;
    Ok((ade, fde))
}

/// Number of `(agent, sample)` trajectories that come strictly closer than
/// `threshold` to some other agent of the same sample.
pub fn a2a_collision_count(preds: &[Vec<Trajectory>], threshold: f64) -> Result<usize> {
    let mut count = 0;
    for sample in preds {
        let mut hit = vec![false; sample.len()];
        for i in 0..sample.len() {
            for j in i + 1..sample.len() {
                if min_pairwise_distance(&sample[i], &sample[j])? < threshold {
                    hit[i] = true;
                    hit[j] = true;
                }
            }
        }
        count += hit.iter().filter(|&&h| h).count();
    }
    Ok(count)
}

fn num_trajectories(preds: &[Vec<Trajectory>]) -> usize {
    preds.iter().map(Vec::len).sum()
}

pub fn a2a_collision_rate(preds: &[Vec<Trajectory>], threshold: f64) -> Result<f64> {
    let total = num_trajectories(preds);
    if total == 0 {
        return Ok(0.0);
    }
    Ok(a2a_collision_count(preds, threshold)? as f64 / total as f64)
}

pub fn env_collision_count(preds: &[Vec<Trajectory>], map: &NavigabilityMap) -> usize {
    preds
        .iter()
        .flatten()
        .filter(|t| map.trajectory_violates(t))
        .count()
}

pub fn env_collision_rate(preds: &[Vec<Trajectory>], map: &NavigabilityMap) -> f64 {
    let total = num_trajectories(preds);
    if total == 0 {
        return 0.0;
    }
    env_collision_count(preds, map) as f64 / total as f64
}

/// `h = (4/(d+2))^(1/(d+4)) · n^(−1/(d+4)) · σ̂` with `d = 2`, floored at 1e-3.
/// `σ̂` is the sample standard deviation (n − 1 denominator; 0 for one value).
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let sigma = if values.len() < 2 {
        0.0
    } else {
        let mean = values.iter().sum::<f64>() / n;
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let d: f64 = 2.0;
    let h = (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * n.powf(-1.0 / (d + 4.0)) * sigma;
    h.max(KDE_MIN_BANDWIDTH)
}

/// Negative log density of `(x, y)` under a product-Gaussian KDE over the
/// given sample positions.
pub fn kde_point_nll(xs: &[f64], ys: &[f64], x: f64, y: f64) -> f64 {
    let hx = silverman_bandwidth(xs);
    let hy = silverman_bandwidth(ys);
    let norm = -(hx.ln() + hy.ln() + (2.0 * std::f64::consts::PI).ln());
    let terms: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(sx, sy)| norm - 0.5 * (((x - sx) / hx).powi(2) + ((y - sy) / hy).powi(2)))
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    -(lse - (xs.len() as f64).ln())
}

/// Mean over agents of the timestep-averaged KDE negative log-likelihood.
pub fn kde_nll(gt: &[Trajectory], preds: &[Vec<Trajectory>]) -> Result<f64> {
    check_shapes(gt, preds)?;
    Ok(kde_nll_per_agent(gt, preds).iter().sum::<f64>() / gt.len() as f64)
}

fn kde_nll_per_agent(gt: &[Trajectory], preds: &[Vec<Trajectory>]) -> Vec<f64> {
    gt.iter()
        .enumerate()
        .map(|(agent, g)| {
            let t_len = g.len();
            let mut total = 0.0;
            for t in 0..t_len {
                let xs: Vec<f64> = preds.iter().map(|s| s[agent].points()[t].x).collect();
                let ys: Vec<f64> = preds.iter().map(|s| s[agent].points()[t].y).collect();
                let p = g.points()[t];
                total += kde_point_nll(&xs, &ys, p.x, p.y);
            }
            total / t_len as f64
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub a2a_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            a2a_threshold: DEFAULT_A2A_THRESHOLD,
        }
    }
}

/// Additive per-scene sums; reports are formed by summing these across scenes
/// and dividing at the end, so evaluation order never matters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSums {
    pub scenes: usize,
    pub agents: usize,
    pub samples: usize,
    /// Sums over agents.
    pub min_ade: f64,
    pub min_fde: f64,
    /// Scene JADE/JFDE weighted by the scene's agent count.
    pub jade: f64,
    pub jfde: f64,
    pub avg_ade: f64,
    pub avg_fde: f64,
    pub kde_nll: f64,
    pub a2a_collisions: usize,
    pub env_collisions: usize,
    /// Trajectories checked against a map.
    pub env_checked: usize,
    pub trajectories: usize,
}

impl MetricSums {
    pub fn merge(&mut self, other: &MetricSums) {
        self.scenes += other.scenes;
        self.agents += other.agents;
        self.samples += other.samples;
        self.min_ade += other.min_ade;
        self.min_fde += other.min_fde;
        self.jade += other.jade;
        self.jfde += other.jfde;
        self.avg_ade += other.avg_ade;
        self.avg_fde += other.avg_fde;
        self.kde_nll += other.kde_nll;
        self.a2a_collisions += other.a2a_collisions;
        self.env_collisions += other.env_collisions;
        self.env_checked += other.env_checked;
        self.trajectories += other.trajectories;
    }
}

pub fn scene_sums(
    gt: &[Trajectory],
    preds: &[Vec<Trajectory>],
    map: Option<&NavigabilityMap>,
    config: &MetricsConfig,
) -> Result<MetricSums> {
    let n = gt.len() as f64;
    let (min_ade, min_fde) = min_ade_fde(gt, preds)?;
    let (jade, jfde) = jade_jfde(gt, preds)?;
    let (avg_ade, avg_fde) = avg_ade_fde(gt, preds)?;
    let trajectories = num_trajectories(preds);
    Ok(MetricSums {
        scenes: 1,
        agents: gt.len(),
        samples: preds.len(),
        min_ade: min_ade * n,
        min_fde: min_fde * n,
        jade: jade * n,
        jfde: jfde * n,
        avg_ade: avg_ade * n,
        avg_fde: avg_fde * n,
        kde_nll: kde_nll(gt, preds)? * n,
        a2a_collisions: a2a_collision_count(preds, config.a2a_threshold)?,
        env_collisions: map.map_or(0, |m| env_collision_count(preds, m)),
        env_checked: if map.is_some() { trajectories } else { 0 },
        trajectories,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsCounts {
    pub scenes: usize,
    pub agents: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsEcho {
    pub a2a_threshold: f64,
    pub bandwidth_rule: String,
    pub min_bandwidth: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub min_ade: f64,
    pub min_fde: f64,
    pub jade: f64,
    pub jfde: f64,
    pub avg_ade: f64,
    pub avg_fde: f64,
    pub a2a_collision_rate: f64,
    /// `None` when no scene had a map.
    pub env_collision_rate: Option<f64>,
    pub kde_nll: f64,
    pub counts: MetricsCounts,
    pub config: MetricsEcho,
}

impl MetricsReport {
    pub fn from_sums(sums: &MetricSums, config: &MetricsConfig, seed: Option<u64>) -> Result<Self> {
        if sums.agents == 0 {
            return Err(Error::InvalidInput("no agents were evaluated".into()));
        }
        let n = sums.agents as f64;
        Ok(MetricsReport {
            min_ade: sums.min_ade / n,
            min_fde: sums.min_fde / n,
            jade: sums.jade / n,
            jfde: sums.jfde / n,
            avg_ade: sums.avg_ade / n,
            avg_fde: sums.avg_fde / n,
            a2a_collision_rate: sums.a2a_collisions as f64 / sums.trajectories as f64,
            env_collision_rate: (sums.env_checked > 0)
                .then(|| sums.env_collisions as f64 / sums.env_checked as f64),
            kde_nll: sums.kde_nll / n,
            counts: MetricsCounts {
                scenes: sums.scenes,
                agents: sums.agents,
                samples: sums.samples,
            },
            config: MetricsEcho {
                a2a_threshold: config.a2a_threshold,
                bandwidth_rule: BANDWIDTH_RULE.into(),
                min_bandwidth: KDE_MIN_BANDWIDTH,
                seed,
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
