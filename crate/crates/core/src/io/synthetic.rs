//! Deterministic synthetic scenes and maps for tests and benchmarks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::NavigabilityMap;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Trajectory, DEFAULT_DT};
use crate::scene::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Walkers on lines through the origin at evenly spread angles in
    /// `[0, π)` (orthogonal for two agents), all reaching the origin halfway
    /// through the future.
    Crossing,
    /// Side-by-side walkers along +x, `gap` apart.
    Parallel,
    /// Walkers on a circle heading for their antipodes, passing the center
    /// halfway through the future.
    Circle,
    /// Pairs approaching each other along +x/−x, meeting halfway through the
    /// future; pairs are stacked `gap` apart in y.
    HeadOn,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crossing" => Ok(ScenarioKind::Crossing),
            "parallel" => Ok(ScenarioKind::Parallel),
            "circle" => Ok(ScenarioKind::Circle),
            "head_on" | "head-on" => Ok(ScenarioKind::HeadOn),
            other => Err(Error::InvalidInput(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub kind: ScenarioKind,
    pub n_agents: usize,
    /// m/s.
    pub speed: f64,
    /// Gaussian noise added to every point, meters.
    pub noise_std: f64,
    pub seed: u64,
    /// Lateral spacing for parallel and head-on, meters.
    pub gap: f64,
    pub obs_len: usize,
    pub pred_len: usize,
    pub dt: f64,
}

impl SyntheticScenario {
    pub fn new(kind: ScenarioKind, n_agents: usize, seed: u64) -> Self {
        SyntheticScenario {
            kind,
            n_agents,
            speed: 1.2,
            noise_std: 0.0,
            seed,
            gap: 1.0,
            obs_len: 8,
            pred_len: 12,
            dt: DEFAULT_DT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::InvalidInput("scenario needs at least one agent".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.speed >= 0.0) || !(self.dt > 0.0) || !self.gap.is_finite() {
            return Err(Error::InvalidInput(format!("invalid scenario {self:?}")));
        }
        if self.obs_len < 2 || self.pred_len == 0 {
            return Err(Error::InvalidInput("need obs_len ≥ 2 and pred_len ≥ 1".into()));
        }
        Ok(())
    }

    /// Timestep (counted from the first observed point) at which crossing,
    /// circle and head-on walkers reach their meeting point.
    pub fn meet_step(&self) -> usize {
        self.obs_len - 1 + self.pred_len / 2
    }
}

/// Noise-free position of `agent` at timestep `t`.
fn position(sc: &SyntheticScenario, agent: usize, t: usize) -> Point2 {
    let step = sc.speed * sc.dt;
    let rel = t as f64 - sc.meet_step() as f64;
    let n = sc.n_agents as f64;
    match sc.kind {
        ScenarioKind::Crossing => {
            let theta = agent as f64 * PI / n;
            Point2::new(theta.cos(), theta.sin()).scale(rel * step)
        }
        ScenarioKind::Parallel => Point2::new(t as f64 * step, agent as f64 * sc.gap),
        ScenarioKind::Circle => {
            let theta = 2.0 * PI * agent as f64 / n;
            // Position along the diameter from the start point toward the antipode.
            Point2::new(theta.cos(), theta.sin()).scale(-rel * step)
        }
        ScenarioKind::HeadOn => {
            let dir = if agent % 2 == 0 { 1.0 } else { -1.0 };
            Point2::new(dir * rel * step, (agent / 2) as f64 * sc.gap)
        }
    }
}

/// Scene with histories and ground-truth futures; agent ids are `0..n`.
pub fn generate_synthetic_scene(sc: &SyntheticScenario) -> Result<Scene> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let noise = Normal::new(0.0, sc.noise_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let len = sc.obs_len + sc.pred_len;
    let mut histories = Vec::with_capacity(sc.n_agents);
    let mut futures = Vec::with_capacity(sc.n_agents);
    for agent in 0..sc.n_agents {
        let pts: Vec<Point2> = (0..len)
            .map(|t| {
                let p = position(sc, agent, t);
                if sc.noise_std > 0.0 {
                    Point2::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng))
                } else {
                    p
                }
            })
            .collect();
        histories.push(Trajectory::new(pts[..sc.obs_len].to_vec(), sc.dt)?);
        futures.push(Trajectory::new(pts[sc.obs_len..].to_vec(), sc.dt)?);
    }
    let kind = serde_json::to_value(sc.kind).expect("kind serializes");
    Scene::new(
        format!("synthetic-{}-{}", kind.as_str().unwrap_or("scene"), sc.seed),
        (0..sc.n_agents as u64).collect(),
        histories,
        Some(futures),
        None,
    )
}

/// Single-agent walkers with random speed, heading and constant turn rate;
/// about one in ten stands still. Used to build diverse anchor sets.
pub fn random_walker_scenes(count: usize, seed: u64, obs_len: usize, pred_len: usize, dt: f64) -> Result<Vec<Scene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let stationary = rng.random_bool(0.1);
            let speed: f64 = if stationary { 0.0 } else { rng.random_range(0.3..2.0) };
            let accel: f64 = if stationary { 0.0 } else { rng.random_range(-0.1..0.1) };
            let turn = rng.random_range(-0.6..0.6);
            let mut heading = rng.random_range(-PI..PI);
            let mut p = Point2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let mut v = speed;
            let mut pts = Vec::with_capacity(obs_len + pred_len);
            for t in 0..obs_len + pred_len {
                pts.push(p);
                // Straight during the history, turning in the future.
                if t + 1 >= obs_len {
                    heading += turn * dt;
                    v = (v + accel).max(0.0);
                }
                p = p.add(&Point2::new(heading.cos(), heading.sin()).scale(v * dt));
            }
            Scene::new(
                format!("walker-{i}"),
                vec![0],
                vec![Trajectory::new(pts[..obs_len].to_vec(), dt)?],
                Some(vec![Trajectory::new(pts[obs_len..].to_vec(), dt)?]),
                None,
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Open,
    /// Navigable only within `half_width` of some agent's full path.
    Corridors { half_width: f64 },
    /// Random square blocks of side `size` kept `clearance` away from every
    /// agent's path.
    Obstacles { count: usize, size: f64, clearance: f64 },
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(&a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2;
    p.distance(&a.add(&ab.scale(t.clamp(0.0, 1.0))))
}

fn path_distance(p: Point2, paths: &[Vec<Point2>]) -> f64 {
    paths
        .iter()
        .map(|path| {
            if path.len() == 1 {
                return p.distance(&path[0]);
            }
            path.windows(2)
                .map(|w| segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Map covering the scene's extent plus `margin` meters, cells evaluated at
/// their centers.
pub fn synthetic_map(scene: &Scene, kind: MapKind, resolution: f64, margin: f64, seed: u64) -> Result<NavigabilityMap> {
    let mut paths: Vec<Vec<Point2>> = scene.histories.iter().map(|h| h.points().to_vec()).collect();
    if let Some(f) = &scene.futures {
        for (path, fut) in paths.iter_mut().zip(f) {
            path.extend_from_slice(fut.points());
        }
    }
    let all = paths.iter().flatten();
    let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in all {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let origin = Point2::new(lo.x - margin, lo.y - margin);
    let width = ((hi.x - lo.x + 2.0 * margin) / resolution).ceil() as usize;
    let height = ((hi.y - lo.y + 2.0 * margin) / resolution).ceil() as usize;
    match kind {
        MapKind::Open => NavigabilityMap::open(width, height, origin, resolution),
        MapKind::Corridors { half_width } => {
            NavigabilityMap::from_fn(width, height, origin, resolution, |p| path_distance(p, &paths) <= half_width)
        }
        MapKind::Obstacles { count, size, clearance } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut blocks: Vec<Point2> = Vec::with_capacity(count);
            let mut attempts = 0;
            while blocks.len() < count && attempts < count * 100 {
                attempts += 1;
                let c = Point2::new(
                    rng.random_range(origin.x..origin.x + width as f64 * resolution),
                    rng.random_range(origin.y..origin.y + height as f64 * resolution),
                );
                // Half-diagonal plus clearance keeps every block corner off the paths.
                if path_distance(c, &paths) > size * std::f64::consts::FRAC_1_SQRT_2 + clearance {
                    blocks.push(c);
                }
            }
            let half = size / 2.0;
            NavigabilityMap::from_fn(width, height, origin, resolution, |p| {
                !blocks.iter().any(|c| (p.x - c.x).abs() <= half && (p.y - c.y).abs() <= half)
            })
        }
    }
}
