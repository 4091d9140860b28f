//! Navigability raster queries: point and trajectory violation tests, the
//! per-degree obstacle distance array, and anchor pre-labeling.

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorDatabase;
use crate::geometry::{from_agent_frame, AgentPose, Point2, Trajectory};

/// Default range cap of the obstacle distance array, in meters.
pub const DEFAULT_MAX_RANGE: f64 = 10.0;
pub const NUM_BEARINGS: usize = 360;

/// Boolean occupancy raster; `true` marks navigable cells.
///
/// Cell `(ix, iy)` covers `[origin.x + ix·res, origin.x + (ix+1)·res)` ×
/// `[origin.y + iy·res, origin.y + (iy+1)·res)`. Anything outside the grid is
/// non-navigable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavigabilityMap {
    width: usize,
    height: usize,
    origin: Point2,
    resolution: f64,
    /// Row-major by `iy`.
    cells: Vec<bool>,
}

impl NavigabilityMap {
    pub fn new(
        width: usize,
        height: usize,
        origin: Point2,
        resolution: f64,
        cells: Vec<bool>,
    ) -> crate::Result<Self> {
        if width == 0 || height == 0 {
            return Err(crate::Error::InvalidInput("map must have at least one cell".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) || !origin.is_finite() {
            return Err(crate::Error::InvalidInput(format!(
                "invalid map geometry: resolution {resolution}, origin {origin:?}"
            )));
        }
        if cells.len() != width * height {
            return Err(crate::Error::DimensionMismatch {
                expected: width * height,
                got: cells.len(),
            });
        }
        Ok(NavigabilityMap {
            width,
            height,
            origin,
            resolution,
            cells,
        })
    }

    pub fn open(width: usize, height: usize, origin: Point2, resolution: f64) -> crate::Result<Self> {
        NavigabilityMap::new(width, height, origin, resolution, vec![true; width * height])
    }

    /// Builds a map by evaluating `navigable` at every cell center.
    pub fn from_fn(
        width: usize,
        height: usize,
        origin: Point2,
        resolution: f64,
        navigable: impl Fn(Point2) -> bool,
    ) -> crate::Result<Self> {
        let mut cells = Vec::with_capacity(width * height);
        for iy in 0..height {
            for ix in 0..width {
                cells.push(navigable(Point2::new(
                    origin.x + (ix as f64 + 0.5) * resolution,
                    origin.y + (iy as f64 + 0.5) * resolution,
                )));
            }
        }
        NavigabilityMap::new(width, height, origin, resolution, cells)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cell(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.width + ix]
    }

    pub fn set_cell(&mut self, ix: usize, iy: usize, navigable: bool) {
        self.cells[iy * self.width + ix] = navigable;
    }

    /// `floor((p − origin) / resolution)`, or `None` outside the grid.
    pub fn cell_index(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn is_navigable(&self, p: Point2) -> bool {
        self.cell_index(p).is_some_and(|(ix, iy)| self.cell(ix, iy))
    }

    pub fn trajectory_violates(&self, traj: &Trajectory) -> bool {
        traj.points().iter().any(|p| !self.is_navigable(*p))
    }
}

/// Distance to the nearest obstacle along each integer bearing, relative to
/// the agent heading (entry 0 looks straight ahead, entry 90 to the left).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceArray {
    pub distances: Vec<f64>,
    pub max_range: f64,
    /// Set when the agent itself stands on a non-navigable cell.
    pub degenerate: bool,
}

impl DistanceArray {
    /// Minimum over consecutive blocks of `360 / sectors` bearings.
    pub fn sector_minima(&self, sectors: usize) -> Vec<f64> {
        let width = NUM_BEARINGS / sectors;
        self.distances
            .chunks(width)
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Ray-marches one ray per degree at half-cell steps until the first
/// non-navigable cell or `max_range`.
pub fn distance_array(map: &NavigabilityMap, pose: &AgentPose, max_range: f64) -> DistanceArray {
    if !map.is_navigable(pose.position) {
        return DistanceArray {
            distances: vec![0.0; NUM_BEARINGS],
            max_range,
            degenerate: true,
        };
    }
    let step = map.resolution() / 2.0;
    let max_steps = (max_range / step).floor() as usize;
    let distances = (0..NUM_BEARINGS)
        .map(|b| {
            let angle = pose.heading() + (b as f64).to_radians();
            let dir = Point2::new(angle.cos(), angle.sin());
            (1..=max_steps)
                .map(|k| k as f64 * step)
                .find(|&d| !map.is_navigable(pose.position.add(&dir.scale(d))))
                .unwrap_or(max_range)
                .min(max_range)
        })
        .collect();
    DistanceArray {
        distances,
        max_range,
        degenerate: false,
    }
}

/// `mask[κ]` is true iff anchor κ placed at `pose` stays on navigable cells.
pub fn prelabel_anchor_validity(
    map: &NavigabilityMap,
    pose: &AgentPose,
    db: &AnchorDatabase,
) -> Vec<bool> {
    db.anchors
        .iter()
        .map(|a| !map.trajectory_violates(&from_agent_frame(a, pose)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn open10() -> NavigabilityMap {
        NavigabilityMap::open(10, 10, Point2::ORIGIN, 1.0).unwrap()
    }

    /// 40 m square at 0.1 m/cell, blocked for x ≥ `wall_x`.
    fn wall_map(wall_x: f64) -> NavigabilityMap {
        NavigabilityMap::from_fn(400, 400, Point2::new(-20.0, -20.0), 0.1, |p| p.x < wall_x).unwrap()
    }

    #[test]
    fn navigability_examples() {
        let m = open10();
        assert!(m.is_navigable(Point2::new(4.5, 4.5)));
        assert!(!m.is_navigable(Point2::new(-0.1, 4.5)));
        assert!(!m.is_navigable(Point2::new(10.0, 4.5)));
    }

    #[test]
    fn boundary_points_follow_floor_indexing() {
        let m = NavigabilityMap::open(5, 5, Point2::new(-1.0, 2.0), 0.5).unwrap();
        for &(x, y) in &[(-1.0, 2.0), (-0.5, 2.5), (0.0, 3.0), (0.99999, 3.5)] {
            let want = (((x + 1.0) / 0.5f64).floor() as usize, ((y - 2.0) / 0.5f64).floor() as usize);
            assert_eq!(m.cell_index(Point2::new(x, y)), Some(want));
        }
        assert_eq!(m.cell_index(Point2::new(1.5, 2.0)), None);
    }

    #[test]
    fn flipping_a_cell_flips_exactly_its_points() {
        let mut m = open10();
        m.set_cell(3, 7, false);
        for ix in 0..10 {
            for iy in 0..10 {
                let p = Point2::new(ix as f64 + 0.25, iy as f64 + 0.75);
                assert_eq!(m.is_navigable(p), (ix, iy) != (3, 7));
            }
        }
    }

    #[test]
    fn violation_examples() {
        let mut m = open10();
        let t = Trajectory::from_xy(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        assert!(!m.trajectory_violates(&t));
        m.set_cell(2, 2, false);
        assert!(m.trajectory_violates(&t));
    }

    #[test]
    fn open_map_saturates_distance_array() {
        let m = NavigabilityMap::open(400, 400, Point2::new(-20.0, -20.0), 0.1).unwrap();
        let d = distance_array(&m, &AgentPose::new(Point2::ORIGIN, 0.3), DEFAULT_MAX_RANGE);
        assert!(d.distances.iter().all(|&v| v == DEFAULT_MAX_RANGE));
        assert!(!d.degenerate);
    }

    #[test]
    fn wall_ahead_distance() {
        let m = wall_map(2.0);
        let d = distance_array(&m, &AgentPose::new(Point2::new(0.05, 0.05), 0.0), DEFAULT_MAX_RANGE);
        let analytic = 2.0 - 0.05;
        assert!((d.distances[0] - analytic).abs() <= 0.05 + 1e-12, "{}", d.distances[0]);
        // 60° off-axis the wall is analytic / cos 60° away.
        assert!((d.distances[60] - analytic / 0.5).abs() <= 0.05 + 1e-12);
        assert_eq!(d.distances[180], DEFAULT_MAX_RANGE);
    }

    #[test]
    fn blocked_start_is_degenerate() {
        let m = wall_map(-1.0);
        let d = distance_array(&m, &AgentPose::identity(), DEFAULT_MAX_RANGE);
        assert!(d.degenerate);
        assert!(d.distances.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rotating_heading_shifts_array() {
        let m = NavigabilityMap::from_fn(400, 400, Point2::new(-20.0, -20.0), 0.1, |p| {
            p.x < 3.0 && p.y > -1.5 && p.y < 4.2
        })
        .unwrap();
        let pos = Point2::new(0.05, 0.05);
        let a = distance_array(&m, &AgentPose::new(pos, 0.0), DEFAULT_MAX_RANGE);
        let b = distance_array(&m, &AgentPose::new(pos, FRAC_PI_2), DEFAULT_MAX_RANGE);
        for k in 0..NUM_BEARINGS {
            assert_abs_diff_eq!(b.distances[k], a.distances[(k + 90) % NUM_BEARINGS], epsilon = 0.05 + 1e-9);
        }
    }

    #[test]
    fn sector_minima_layout() {
        let mut d = DistanceArray { distances: vec![5.0; 360], max_range: 10.0, degenerate: false };
        d.distances[15] = 1.0;
        d.distances[359] = 2.0;
        let s = d.sector_minima(36);
        assert_eq!(s.len(), 36);
        assert_eq!(s[1], 1.0);
        assert_eq!(s[35], 2.0);
        assert_eq!(s[0], 5.0);
    }

    proptest! {
        #[test]
        fn violation_is_or_over_points(
            xy in prop::collection::vec((-1.0..11.0f64, -1.0..11.0f64), 1..20),
            blocked in prop::collection::vec((0usize..10, 0usize..10), 0..30),
        ) {
            let mut m = open10();
            for (ix, iy) in blocked {
                m.set_cell(ix, iy, false);
            }
            let t = Trajectory::from_xy(&xy).unwrap();
            let brute = xy.iter().any(|&(x, y)| {
                let (fx, fy) = (x.floor(), y.floor());
                !(0.0..10.0).contains(&fx) || !(0.0..10.0).contains(&fy) || !m.cell(fx as usize, fy as usize)
            });
            prop_assert_eq!(m.trajectory_violates(&t), brute);
        }

        #[test]
        fn distances_capped(h in -3.2..3.2f64, r in 0.5..12.0f64) {
            let m = wall_map(1.0);
            let d = distance_array(&m, &AgentPose::new(Point2::ORIGIN, h), r);
            prop_assert!(d.distances.iter().all(|&v| (0.0..=r).contains(&v)));
        }
    }
}
