//! Jointly compliant multi-agent trajectory prediction.
//!
//! Per agent, an anchor database of motion prototypes is scored and filtered
//! against the navigability map; the surviving top-K prototypes of all agents
//! become the states of a scene-level Markov random field whose pairwise
//! terms mask colliding prototype pairs. Joint scene predictions are drawn
//! from that field by Gibbs sampling and scored with the usual ETH-UCY
//! metric suite.

pub mod anchor;
pub mod environment;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod mrf;
pub mod pipeline;
pub mod profiler;
pub mod scene;

pub use error::{Error, Result};
pub use geometry::{AgentPose, Point2, Trajectory};
pub use scene::{AgentId, Scene};
