//! JSON-lines prediction files: one line per (scene, sample).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Trajectory, DEFAULT_DT};
use crate::mrf::ScenePredictionSet;
use crate::scene::AgentId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scene: String,
    pub seed: u64,
    pub mode: String,
    pub sample: usize,
    pub energy: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Prototype index per agent, in `agents` id order.
    #[serde(default)]
    pub assignment: Vec<usize>,
    pub agents: BTreeMap<String, Vec<[f64; 2]>>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// Predictions of one scene as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePredictions {
    pub scene_id: String,
    pub seed: u64,
    pub mode: String,
    /// Ascending.
    pub agent_ids: Vec<AgentId>,
    pub energies: Vec<f64>,
    /// `[sample][agent]`.
    pub trajectories: Vec<Vec<Trajectory>>,
}

pub fn records_of(set: &ScenePredictionSet) -> Vec<PredictionRecord> {
    set.samples
        .iter()
        .zip(&set.trajectories)
        .enumerate()
        .map(|(k, (s, trajs))| {
            let dt = trajs.first().map_or(DEFAULT_DT, Trajectory::dt);
            PredictionRecord {
                scene: set.scene_id.clone(),
                seed: set.sampler.seed,
                mode: set.sampler.mode.clone(),
                sample: k,
                energy: s.energy,
                dt,
                assignment: s.assignment.clone(),
                agents: set
                    .agent_ids
                    .iter()
                    .zip(trajs)
                    .map(|(id, t)| (id.to_string(), t.points().iter().map(|p| [p.x, p.y]).collect()))
                    .collect(),
            }
        })
        .collect()
}

pub fn write_predictions_to(out: &mut impl Write, sets: &[ScenePredictionSet]) -> std::io::Result<()> {
    for set in sets {
        for r in records_of(set) {
            serde_json::to_writer(&mut *out, &r)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_predictions(path: &Path, sets: &[ScenePredictionSet]) -> Result<()> {
    let mut buf = Vec::new();
    write_predictions_to(&mut buf, sets).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_predictions_str(text: &str, path: &Path) -> Result<Vec<ScenePredictions>> {
    let mut scenes: Vec<ScenePredictions> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let r: PredictionRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let mut agents: Vec<(AgentId, Vec<[f64; 2]>)> = r
            .agents
            .into_iter()
            .map(|(k, v)| {
                k.parse::<AgentId>()
                    .map(|id| (id, v))
                    .map_err(|_| bad(format!("agent key {k:?} is not an integer id")))
            })
            .collect::<Result<_>>()?;
        agents.sort_by_key(|(id, _)| *id);
        let ids: Vec<AgentId> = agents.iter().map(|(id, _)| *id).collect();
        let trajs = agents
            .into_iter()
            .map(|(_, pts)| Trajectory::new(pts.iter().map(|p| Point2::new(p[0], p[1])).collect(), r.dt))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| bad(e.to_string()))?;

        let new_scene = scenes.last().is_none_or(|s| s.scene_id != r.scene);
        if new_scene {
            if scenes.iter().any(|s| s.scene_id == r.scene) {
                return Err(bad(format!("scene {} is not contiguous", r.scene)));
            }
            scenes.push(ScenePredictions {
                scene_id: r.scene.clone(),
                seed: r.seed,
                mode: r.mode.clone(),
                agent_ids: ids.clone(),
                energies: Vec::new(),
                trajectories: Vec::new(),
            });
        }
        let s = scenes.last_mut().expect("pushed above");
        if s.agent_ids != ids {
            return Err(bad(format!("scene {}: agent ids differ between samples", r.scene)));
        }
        if r.sample != s.trajectories.len() {
            return Err(bad(format!(
                "scene {}: expected sample {}, found {}",
                r.scene,
                s.trajectories.len(),
                r.sample
            )));
        }
        s.energies.push(r.energy);
        s.trajectories.push(trajs);
    }
    Ok(scenes)
}

pub fn read_predictions(path: &Path) -> Result<Vec<ScenePredictions>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrf::{JointSample, SamplerConfig};

    fn set() -> ScenePredictionSet {
        let t = |x: f64| Trajectory::from_xy(&[(x, 0.1), (x + 0.3, 1.0 / 3.0)]).unwrap();
        ScenePredictionSet {
            scene_id: "eth:10".into(),
            agent_ids: vec![10, 2],
            samples: vec![
                JointSample { assignment: vec![0, 1], energy: -1.25 },
                JointSample { assignment: vec![1, 1], energy: 0.1 },
            ],
            trajectories: vec![vec![t(0.0), t(5.0)], vec![t(1.0), t(5.0)]],
            sampler: SamplerConfig { burn_in: 5, num_samples: 2, seed: 9, mode: "sequential".into() },
        }
    }

    #[test]
    fn round_trip_reorders_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        write_predictions(&path, &[set()]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"scene":"eth:10","seed":9,"#));
        let back = read_predictions(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].agent_ids, vec![2, 10]);
        assert_eq!(back[0].energies, vec![-1.25, 0.1]);
        assert_eq!(back[0].trajectories[1][1], set().trajectories[1][0]);
        assert_eq!(back[0].trajectories[0][0].points()[1].y, 1.0 / 3.0);
    }

    #[test]
    fn bad_lines_are_reported() {
        let p = Path::new("x.jsonl");
        assert!(matches!(parse_predictions_str("{oops\n", p), Err(Error::Parse { line: 1, .. })));
        let ok = serde_json::to_string(&records_of(&set())[0]).unwrap();
        let err = parse_predictions_str(&format!("{ok}\n{ok}\n"), p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
