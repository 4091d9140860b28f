//! Lloyd's k-means with seeded k-means++ initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Number of Lloyd iterations (center update + reassignment) performed.
    pub iterations: usize,
    pub inertia: f64,
    /// Inertia after initialization, then after every iteration.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center per point; ties go to the lower center index.
fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .map(|(c, center)| (c, sq_dist(p, center)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .unzip()
}

fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

/// Clusters `points` into `k` groups. Deterministic for a fixed `seed`.
///
/// Stops when an iteration changes no assignment or after [`MAX_ITERATIONS`].
/// A cluster left empty by an update is reseeded with the point farthest from
/// its current center.
pub fn kmeans_cluster(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidInput(format!(
            "k-means needs at least {k} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = init_plus_plus(points, k, &mut rng);
    let (mut assignments, mut dists) = assign(points, &centers);
    let mut inertia_history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = dists
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
                .0;
            counts[assignments[far]] -= 1;
            counts[c] = 1;
            centers[c] = points[far].clone();
            assignments[far] = c;
            dists[far] = 0.0;
        }

        let (next, next_dists) = assign(points, &centers);
        let changed = next != assignments;
        assignments = next;
        dists = next_dists;
        inertia_history.push(dists.iter().sum());
        if !changed {
            break;
        }
    }

    Ok(KMeansResult {
        centers,
        assignments,
        iterations,
        inertia: *inertia_history.last().unwrap(),
        inertia_history,
    })
}
