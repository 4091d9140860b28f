//! Anchor trajectory database: agent-frame futures compressed by truncated SVD
//! and clustered with k-means; the cluster centers, decoded back to
//! coordinates, are the anchors.

pub mod kmeans;
pub mod svd;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{to_agent_frame, AgentPose, Trajectory};
use crate::scene::Scene;

pub use kmeans::{kmeans_cluster, KMeansResult};
pub use svd::{
    compress, decompress, fit_svd_basis, reconstruction_residual, RowMatrix, SvdBasis,
    DEFAULT_LATENT_DIM,
};

/// Default number of anchors kept in the database.
pub const DEFAULT_NUM_ANCHORS: usize = 64;

/// Flattened agent-frame futures, one row per (scene, agent).
#[derive(Clone, Debug, PartialEq)]
pub struct MotionMatrix {
    pub matrix: RowMatrix,
    pub t_f: usize,
    pub dt: f64,
}

impl MotionMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows
    }
}

pub fn build_motion_matrix(scenes: &[Scene]) -> Result<MotionMatrix> {
    if scenes.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let mut rows = Vec::new();
    let mut shape: Option<(usize, f64)> = None;
    for scene in scenes {
        let futures = scene.futures.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("scene {} has no ground-truth futures", scene.id))
        })?;
        for (history, future) in scene.histories.iter().zip(futures) {
            match shape {
                None => shape = Some((future.len(), future.dt())),
                Some((t_f, _)) if t_f != future.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: t_f,
                        got: future.len(),
                    })
                }
                _ => {}
            }
            let (pose, _) = AgentPose::from_history(history)?;
            rows.push(to_agent_frame(future, &pose).flatten());
        }
    }
    let (t_f, dt) = shape.expect("at least one agent");
    Ok(MotionMatrix {
        matrix: RowMatrix::from_rows(&rows)?,
        t_f,
        dt,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansMeta {
    pub iterations: usize,
    pub inertia: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnchorDatabase {
    /// Futures in the canonical agent frame.
    pub anchors: Vec<Trajectory>,
    /// Latent coordinates of each anchor.
    pub compressed: Vec<Vec<f64>>,
    pub basis: SvdBasis,
    pub kmeans: KMeansMeta,
    pub seed: u64,
}

impl AnchorDatabase {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.basis.latent_dim()
    }

    pub fn t_f(&self) -> usize {
        self.basis.dim() / 2
    }

    pub fn dt(&self) -> f64 {
        self.anchors[0].dt()
    }

    /// Checks the stored latents against a fresh compression of each anchor.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        if self.anchors.len() != self.compressed.len() || self.anchors.is_empty() {
            return Err(Error::InvalidInput("anchor/latent count mismatch".into()));
        }
        for (k, (anchor, latent)) in self.anchors.iter().zip(&self.compressed).enumerate() {
            if anchor.len() != self.t_f() {
                return Err(Error::DimensionMismatch {
                    expected: self.t_f(),
                    got: anchor.len(),
                });
            }
            let fresh = compress(&anchor.flatten(), &self.basis)?;
            if fresh.iter().zip(latent).any(|(a, b)| (a - b).abs() > tol) {
                return Err(Error::Numerical(format!(
                    "anchor {k} does not round-trip through the basis"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(&AnchorFile::from(self))
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, AnchorFileError> {
        let file: AnchorFile = serde_json::from_str(s).map_err(AnchorFileError::Json)?;
        file.into_database().map_err(AnchorFileError::Invalid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json().map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AnchorDatabase::from_json(&text).map_err(|e| match e {
            AnchorFileError::Json(e) => Error::json(path, e),
            AnchorFileError::Invalid(e) => e,
        })
    }
}

#[derive(Debug)]
pub enum AnchorFileError {
    Json(serde_json::Error),
    Invalid(Error),
}

/// On-disk layout of an [`AnchorDatabase`].
#[derive(Serialize, Deserialize)]
struct AnchorFile {
    d_s: usize,
    t_f: usize,
    dt: f64,
    basis: Vec<f64>,
    singular_values: Vec<f64>,
    anchors: Vec<Vec<[f64; 2]>>,
    compressed: Vec<Vec<f64>>,
    seed: u64,
    kmeans_iterations: usize,
    kmeans_inertia: f64,
}

impl From<&AnchorDatabase> for AnchorFile {
    fn from(db: &AnchorDatabase) -> Self {
        AnchorFile {
            d_s: db.latent_dim(),
            t_f: db.t_f(),
            dt: db.dt(),
            basis: db.basis.v_rows.data.clone(),
            singular_values: db.basis.singular_values.clone(),
            anchors: db
                .anchors
                .iter()
                .map(|a| a.points().iter().map(|p| [p.x, p.y]).collect())
                .collect(),
            compressed: db.compressed.clone(),
            seed: db.seed,
            kmeans_iterations: db.kmeans.iterations,
            kmeans_inertia: db.kmeans.inertia,
        }
    }
}

impl AnchorFile {
    fn into_database(self) -> Result<AnchorDatabase> {
        let anchors = self
            .anchors
            .iter()
            .map(|a| {
                Trajectory::new(a.iter().map(|&[x, y]| (x, y).into()).collect(), self.dt)
            })
            .collect::<Result<Vec<_>>>()?;
        let db = AnchorDatabase {
            anchors,
            compressed: self.compressed,
            basis: SvdBasis {
                v_rows: RowMatrix::new(self.d_s, 2 * self.t_f, self.basis)?,
                singular_values: self.singular_values,
            },
            kmeans: KMeansMeta {
                iterations: self.kmeans_iterations,
                inertia: self.kmeans_inertia,
            },
            seed: self.seed,
        };
        db.check_consistency(1e-6)?;
        Ok(db)
    }
}

/// Compresses every training future, clusters the latents into `k_anchors`
/// groups and decodes the centers into anchor trajectories.
pub fn build_anchor_db(
    scenes: &[Scene],
    d_s: usize,
    k_anchors: usize,
    seed: u64,
) -> Result<AnchorDatabase> {
    let motion = build_motion_matrix(scenes)?;
    build_anchor_db_from_matrix(&motion, d_s, k_anchors, seed)
}

pub fn build_anchor_db_from_matrix(
    motion: &MotionMatrix,
    d_s: usize,
    k_anchors: usize,
    seed: u64,
) -> Result<AnchorDatabase> {
    let basis = fit_svd_basis(&motion.matrix, d_s)?;
    let latents = motion
        .matrix
        .iter_rows()
        .map(|r| compress(r, &basis))
        .collect::<Result<Vec<_>>>()?;
    let km = kmeans_cluster(&latents, k_anchors, seed)?;
    let anchors = km
        .centers
        .iter()
        .map(|c| Trajectory::from_flat(&decompress(c, &basis)?, motion.dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnchorDatabase {
        anchors,
        compressed: km.centers,
        basis,
        kmeans: KMeansMeta {
            iterations: km.iterations,
            inertia: km.inertia,
        },
        seed,
    })
}
