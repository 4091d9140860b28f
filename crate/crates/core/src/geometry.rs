//! Planar trajectory primitives: points, trajectories, agent-centric frames,
//! constant-velocity extrapolation and step-aligned distance queries.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default timestep of ETH-UCY windows, in seconds.
pub const DEFAULT_DT: f64 = 0.4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(&self, other: &Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(&self, other: &Point2) -> Point2 {
        Point2::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(&self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise rotation by `angle` radians about the origin.
    pub fn rotate(&self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// An ordered sequence of positions sampled every `dt` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<Point2>,
    dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Point2>, dt: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooShort { need: 1, got: 0 });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point at step {i}")));
        }
        Ok(Trajectory { points, dt })
    }

    /// Builds a trajectory at the default timestep from `(x, y)` pairs.
    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self> {
        Trajectory::new(xy.iter().map(|&p| p.into()).collect(), DEFAULT_DT)
    }

    /// Inverse of [`Trajectory::flatten`].
    pub fn from_flat(flat: &[f64], dt: f64) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "flattened trajectory has odd length {}",
                flat.len()
            )));
        }
        Trajectory::new(
            flat.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect(),
            dt,
        )
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    /// `(x₁, y₁, …, x_T, y_T)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// Applies `f` to every point. Callers must keep the points finite.
    pub fn map_points(&self, f: impl Fn(&Point2) -> Point2) -> Trajectory {
        Trajectory {
            points: self.points.iter().map(f).collect(),
            dt: self.dt,
        }
    }

    /// Step speeds in m/s, one per displacement.
    pub fn step_speeds(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| w[1].distance(&w[0]) / self.dt)
            .collect()
    }
}

/// Position and heading that define an agent-centric frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub position: Point2,
    heading: f64,
}

impl AgentPose {
    pub fn new(position: Point2, heading: f64) -> Self {
        AgentPose {
            position,
            heading: normalize_angle(heading),
        }
    }

    pub fn identity() -> Self {
        AgentPose::new(Point2::ORIGIN, 0.0)
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    /// Pose at the last observed point, heading from [`heading_from_history`].
    pub fn from_history(history: &Trajectory) -> Result<(Self, bool)> {
        let h = heading_from_history(history)?;
        Ok((AgentPose::new(history.last(), h.angle), h.degenerate))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Heading {
    pub angle: f64,
    /// Set when every point of the history coincides.
    pub degenerate: bool,
}

const COINCIDENT_EPS: f64 = 1e-9;

/// Direction of travel at the end of `history`: the angle from the most recent
/// point distinct from the last one to the last one.
pub fn heading_from_history(history: &Trajectory) -> Result<Heading> {
    let pts = history.points();
    if pts.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: pts.len(),
        });
    }
    let last = history.last();
    for p in pts[..pts.len() - 1].iter().rev() {
        let d = last.sub(p);
        if d.norm() > COINCIDENT_EPS {
            return Ok(Heading {
                angle: normalize_angle(d.y.atan2(d.x)),
                degenerate: false,
            });
        }
    }
    Ok(Heading {
        angle: 0.0,
        degenerate: true,
    })
}

pub fn point_to_agent_frame(p: &Point2, pose: &AgentPose) -> Point2 {
    p.sub(&pose.position).rotate(-pose.heading)
}

pub fn point_from_agent_frame(p: &Point2, pose: &AgentPose) -> Point2 {
    p.rotate(pose.heading).add(&pose.position)
}

/// Expresses a world-frame trajectory in the frame of `pose`.
pub fn to_agent_frame(traj: &Trajectory, pose: &AgentPose) -> Trajectory {
    traj.map_points(|p| point_to_agent_frame(p, pose))
}

/// Maps an agent-frame trajectory back to world coordinates.
pub fn from_agent_frame(traj: &Trajectory, pose: &AgentPose) -> Trajectory {
    traj.map_points(|p| point_from_agent_frame(p, pose))
}

/// Continues the mean velocity of the last `min(3, len − 1)` displacements.
pub fn constant_velocity_extrapolate(history: &Trajectory, steps: usize) -> Result<Trajectory> {
    let pts = history.points();
    if pts.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: pts.len(),
        });
    }
    let n = 3.min(pts.len() - 1);
    let last = history.last();
    let velocity = last.sub(&pts[pts.len() - 1 - n]).scale(1.0 / n as f64);
    if steps == 0 {
        return Err(Error::InvalidInput("extrapolation needs at least one step".into()));
    }
    let out = (1..=steps)
        .map(|s| last.add(&velocity.scale(s as f64)))
        .collect();
    Trajectory::new(out, history.dt())
}

/// Minimum Euclidean distance over aligned timesteps.
pub fn min_pairwise_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| p.distance(q))
        .fold(f64::INFINITY, f64::min))
}
