use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Trajectory;

pub type AgentId = u64;

/// Agents observed together over one window: histories, optional ground-truth
/// futures and the map they move in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub agent_ids: Vec<AgentId>,
    pub histories: Vec<Trajectory>,
    pub futures: Option<Vec<Trajectory>>,
    pub map_id: Option<String>,
}

impl Scene {
    pub fn new(
        id: impl Into<String>,
        agent_ids: Vec<AgentId>,
        histories: Vec<Trajectory>,
        futures: Option<Vec<Trajectory>>,
        map_id: Option<String>,
    ) -> Result<Self> {
        let scene = Scene {
            id: id.into(),
            agent_ids,
            histories,
            futures,
            map_id,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agent_ids.is_empty() {
            return Err(Error::InvalidInput(format!("scene {} has no agents", self.id)));
        }
        if self.histories.len() != self.agent_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.agent_ids.len(),
                got: self.histories.len(),
            });
        }
        let mut ids = self.agent_ids.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "scene {} has duplicate agent ids",
                self.id
            )));
        }
        let (t_o, dt) = (self.histories[0].len(), self.histories[0].dt());
        if self.histories.iter().any(|h| h.len() != t_o || h.dt() != dt) {
            return Err(Error::InvalidInput(format!(
                "scene {}: histories differ in length or dt",
                self.id
            )));
        }
        if let Some(futures) = &self.futures {
            if futures.len() != self.agent_ids.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.agent_ids.len(),
                    got: futures.len(),
                });
            }
            let t_f = futures[0].len();
            if futures.iter().any(|f| f.len() != t_f) {
                return Err(Error::InvalidInput(format!(
                    "scene {}: futures differ in length",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn obs_len(&self) -> usize {
        self.histories[0].len()
    }

    pub fn pred_len(&self) -> Option<usize> {
        self.futures.as_ref().map(|f| f[0].len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Trajectory {
        Trajectory::from_xy(&(0..n).map(|i| (i as f64, 0.0)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_ragged_histories() {
        let err = Scene::new("s", vec![1, 2], vec![line(8), line(7)], None, None);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_duplicate_ids_and_ragged_futures() {
        assert!(Scene::new("s", vec![1, 1], vec![line(8), line(8)], None, None).is_err());
        let f = Some(vec![line(12), line(11)]);
        assert!(Scene::new("s", vec![1, 2], vec![line(8), line(8)], f, None).is_err());
    }

    #[test]
    fn reports_lengths() {
        let s = Scene::new("s", vec![3], vec![line(8)], Some(vec![line(12)]), None).unwrap();
        assert_eq!((s.num_agents(), s.obs_len(), s.pred_len()), (1, 8, Some(12)));
    }
}
