//! Scene-level Markov random field over per-agent prototype choices.
//!
//! States of agent `i` are the indices of its prototype set. The (log-)energy
//! of a joint assignment is the sum of the selected unary logits plus the
//! selected pairwise entries of every interaction edge; `P ∝ exp(E)`.

pub mod bp;
pub mod gibbs;
pub mod pairwise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_pairwise_distance, Trajectory};
use crate::profiler::PrototypeSet;
use crate::scene::AgentId;

pub use bp::{bp_rerank, rank_aligned_samples, BpResult};
pub use gibbs::{gibbs_sample, ChainMode, GibbsConfig};
pub use pairwise::{gt_pair_index, pairwise_focal_loss, BilinearPairwise};

pub const DEFAULT_EDGE_RADIUS: f64 = 5.0;
pub const DEFAULT_COLLISION_THRESHOLD: f64 = 0.2;
pub const DEFAULT_MASK_VALUE: f64 = -1e4;
/// Clearance scale of the analytic pairwise potential, meters.
pub const DEFAULT_CLEARANCE_SCALE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    /// Agent positions in the scene, `i < j`.
    pub i: usize,
    pub j: usize,
    /// Closest approach over all prototype pairs.
    pub min_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub nodes: Vec<AgentId>,
    pub edges: Vec<GraphEdge>,
}

impl InteractionGraph {
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (i, j) = (a.min(b), a.max(b));
        self.edges.iter().any(|e| e.i == i && e.j == j)
    }
}

/// Closest approach of any prototype of `a` to any prototype of `b`.
pub fn closest_approach(a: &PrototypeSet, b: &PrototypeSet) -> Result<f64> {
    let mut best = f64::INFINITY;
    for ta in &a.trajectories {
        for tb in &b.trajectories {
            best = best.min(min_pairwise_distance(ta, tb)?);
        }
    }
    Ok(best)
}

/// Connects agents whose prototype sets come within `radius` of each other.
pub fn build_interaction_graph(sets: &[PrototypeSet], radius: f64) -> Result<InteractionGraph> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("interaction graph needs at least one agent".into()));
    }
    let mut edges = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let d = closest_approach(&sets[i], &sets[j])?;
            if d < radius {
                edges.push(GraphEdge {
                    i,
                    j,
                    min_distance: d,
                });
            }
        }
    }
    Ok(InteractionGraph {
        nodes: sets.iter().map(|s| s.agent_id).collect(),
        edges,
    })
}

/// Dense `rows × cols` potential table, row index = state of the first agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl PairTable {
    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        PairTable {
            rows,
            cols,
            values: vec![v; rows * cols],
        }
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.cols + n]
    }

    pub fn set(&mut self, m: usize, n: usize, v: f64) {
        self.values[m * self.cols + n] = v;
    }

    pub fn transpose(&self) -> PairTable {
        let mut t = PairTable::filled(self.cols, self.rows, 0.0);
        for m in 0..self.rows {
            for n in 0..self.cols {
                t.set(n, m, self.get(m, n));
            }
        }
        t
    }
}

/// `log σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

#[derive(Clone, Debug, PartialEq)]
pub enum PairwiseModel {
    /// `log σ((d − r) / σ)` of the closest-approach distance `d`.
    Analytic { radius: f64, scale: f64 },
    Learned(BilinearPairwise),
}

impl Default for PairwiseModel {
    fn default() -> Self {
        PairwiseModel::Analytic {
            radius: DEFAULT_COLLISION_THRESHOLD,
            scale: DEFAULT_CLEARANCE_SCALE,
        }
    }
}

pub fn pairwise_potential(
    protos_i: &PrototypeSet,
    protos_j: &PrototypeSet,
    model: &PairwiseModel,
) -> Result<PairTable> {
    let mut table = PairTable::filled(protos_i.len(), protos_j.len(), 0.0);
    match model {
        PairwiseModel::Analytic { radius, scale } => {
            for (m, a) in protos_i.trajectories.iter().enumerate() {
                for (n, b) in protos_j.trajectories.iter().enumerate() {
                    let d = min_pairwise_distance(a, b)?;
                    table.set(m, n, log_sigmoid((d - radius) / scale));
                }
            }
        }
        PairwiseModel::Learned(model) => {
            let zi = model.latents_in_frame(protos_i, &protos_i.pose)?;
            let zj = model.latents_in_frame(protos_j, &protos_i.pose)?;
            for (m, a) in zi.iter().enumerate() {
                for (n, b) in zj.iter().enumerate() {
                    table.set(m, n, model.score(a, b));
                }
            }
        }
    }
    Ok(table)
}

/// Overwrites entries of prototype pairs that come closer than `threshold`
/// with `mask_value`.
pub fn mask_colliding_pairs(
    table: &mut PairTable,
    protos_i: &[Trajectory],
    protos_j: &[Trajectory],
    threshold: f64,
    mask_value: f64,
) -> Result<usize> {
    let mut masked = 0;
    for (m, a) in protos_i.iter().enumerate() {
        for (n, b) in protos_j.iter().enumerate() {
            if min_pairwise_distance(a, b)? < threshold {
                table.set(m, n, mask_value);
                masked += 1;
            }
        }
    }
    Ok(masked)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrfConfig {
    pub edge_radius: f64,
    pub collision_threshold: f64,
    pub mask_value: f64,
    /// Apply collision masking to pairwise tables.
    pub mask_collisions: bool,
    pub pairwise: PairwiseModel,
}

impl Default for MrfConfig {
    fn default() -> Self {
        MrfConfig {
            edge_radius: DEFAULT_EDGE_RADIUS,
            collision_threshold: DEFAULT_COLLISION_THRESHOLD,
            mask_value: DEFAULT_MASK_VALUE,
            mask_collisions: true,
            pairwise: PairwiseModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrfEdge {
    pub i: usize,
    pub j: usize,
    /// Rows index agent `i`'s states, columns agent `j`'s.
    pub table: PairTable,
    pub masked_pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneMrf {
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<MrfEdge>,
    pub mask_value: f64,
    pub prototypes: Vec<PrototypeSet>,
    /// Per agent: `(edge index, agent is the edge's first endpoint)`.
    neighbors: Vec<Vec<(usize, bool)>>,
}

impl SceneMrf {
    /// Assembles a field from explicit potentials. Each edge needs `i < j`.
    pub fn from_parts(
        unary: Vec<Vec<f64>>,
        edges: Vec<MrfEdge>,
        mask_value: f64,
        prototypes: Vec<PrototypeSet>,
    ) -> Result<Self> {
        let n = unary.len();
        if unary.iter().any(|u| u.is_empty()) {
            return Err(Error::InvalidInput("every agent needs at least one state".into()));
        }
        if unary.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("unary potentials must be finite".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            if edge.i >= edge.j || edge.j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}) is not an ordered pair of agents in 0..{n}",
                    edge.i, edge.j
                )));
            }
            if edge.table.rows != unary[edge.i].len() || edge.table.cols != unary[edge.j].len() {
                return Err(Error::DimensionMismatch {
                    expected: unary[edge.i].len() * unary[edge.j].len(),
                    got: edge.table.values.len(),
                });
            }
            if edge.table.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("pairwise potentials must be finite".into()));
            }
            neighbors[edge.i].push((e, true));
            neighbors[edge.j].push((e, false));
        }
        Ok(SceneMrf {
            unary,
            edges,
            mask_value,
            prototypes,
            neighbors,
        })
    }

    /// Unary logits from each prototype set, edges from the interaction graph,
    /// pairwise tables from `config.pairwise`, optionally collision-masked.
    pub fn build(sets: Vec<PrototypeSet>, config: &MrfConfig) -> Result<Self> {
        let graph = build_interaction_graph(&sets, config.edge_radius)?;
        let mut edges = Vec::with_capacity(graph.edges.len());
        for ge in &graph.edges {
            let (a, b) = (&sets[ge.i], &sets[ge.j]);
            let mut table = pairwise_potential(a, b, &config.pairwise)?;
            let masked_pairs = if config.mask_collisions {
                mask_colliding_pairs(
                    &mut table,
                    &a.trajectories,
                    &b.trajectories,
                    config.collision_threshold,
                    config.mask_value,
                )?
            } else {
                0
            };
            edges.push(MrfEdge {
                i: ge.i,
                j: ge.j,
                table,
                masked_pairs,
            });
        }
        let unary = sets.iter().map(|s| s.logits.clone()).collect();
        SceneMrf::from_parts(unary, edges, config.mask_value, sets)
    }

    pub fn num_agents(&self) -> usize {
        self.unary.len()
    }

    pub fn num_states(&self, agent: usize) -> usize {
        self.unary[agent].len()
    }

    pub fn neighbors(&self, agent: usize) -> &[(usize, bool)] {
        &self.neighbors[agent]
    }

    /// Pairwise entry of `edge` seen from `agent` in `state` against the
    /// other endpoint in `other_state`.
    #[inline]
    pub fn pair_value(&self, edge: usize, agent_first: bool, state: usize, other_state: usize) -> f64 {
        let t = &self.edges[edge].table;
        if agent_first {
            t.get(state, other_state)
        } else {
            t.get(other_state, state)
        }
    }

    /// The agent at the far end of `edge`.
    #[inline]
    pub fn other_end(&self, edge: usize, agent_first: bool) -> usize {
        let e = &self.edges[edge];
        if agent_first {
            e.j
        } else {
            e.i
        }
    }

    /// Unary plus neighbor-conditioned pairwise terms for every state of `agent`.
    pub fn conditional_logits(&self, agent: usize, assignment: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.unary[agent]);
        for &(e, first) in &self.neighbors[agent] {
            let other_state = assignment[self.other_end(e, first)];
            for (k, o) in out.iter_mut().enumerate() {
                *o += self.pair_value(e, first, k, other_state);
            }
        }
    }

    pub fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.num_agents() {
            return Err(Error::DimensionMismatch {
                expected: self.num_agents(),
                got: assignment.len(),
            });
        }
        for (agent, &s) in assignment.iter().enumerate() {
            if s >= self.num_states(agent) {
                return Err(Error::IndexOutOfRange {
                    agent,
                    index: s,
                    len: self.num_states(agent),
                });
            }
        }
        Ok(())
    }

    /// True when any edge entry selected by `assignment` is masked.
    pub fn has_masked_pair(&self, assignment: &[usize]) -> bool {
        self.edges
            .iter()
            .any(|e| e.table.get(assignment[e.i], assignment[e.j]) <= self.mask_value)
    }
}

/// `Σ_i unary_i[a_i] + Σ_(i,j) pairwise_ij[a_i, a_j]`.
pub fn scene_energy(mrf: &SceneMrf, assignment: &[usize]) -> Result<f64> {
    mrf.check_assignment(assignment)?;
    let unary: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &s)| mrf.unary[i][s])
        .sum();
    let pair: f64 = mrf
        .edges
        .iter()
        .map(|e| e.table.get(assignment[e.i], assignment[e.j]))
        .sum();
    Ok(unary + pair)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub assignment: Vec<usize>,
    pub energy: f64,
}

/// How a prediction set was sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub num_samples: usize,
    pub seed: u64,
    /// `sequential`, `parallel` or `rank-aligned`.
    pub mode: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenePredictionSet {
    pub scene_id: String,
    pub agent_ids: Vec<AgentId>,
    pub samples: Vec<JointSample>,
    /// `[sample][agent]`.
    pub trajectories: Vec<Vec<Trajectory>>,
    pub sampler: SamplerConfig,
}

impl ScenePredictionSet {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }
}

/// Looks up each sample's prototypes.
pub fn realize_predictions(
    mrf: &SceneMrf,
    samples: &[JointSample],
) -> Result<Vec<Vec<Trajectory>>> {
    if mrf.prototypes.len() != mrf.num_agents() {
        return Err(Error::InvalidInput("field carries no prototype sets to realize".into()));
    }
    samples
        .iter()
        .map(|s| {
            mrf.check_assignment(&s.assignment)?;
            Ok(s.assignment
                .iter()
                .enumerate()
                .map(|(agent, &k)| mrf.prototypes[agent].trajectories[k].clone())
                .collect())
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::AgentPose;
    use approx::assert_abs_diff_eq;

    pub(crate) fn proto_set(id: AgentId, trajs: Vec<Trajectory>) -> PrototypeSet {
        let k = trajs.len();
        PrototypeSet {
            agent_id: id,
            pose: AgentPose::identity(),
            anchor_indices: (0..k).collect(),
            trajectories: trajs,
            logits: vec![0.0; k],
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub(crate) fn line(start: (f64, f64), step: (f64, f64), n: usize) -> Trajectory {
        Trajectory::from_xy(
            &(0..n)
                .map(|t| (start.0 + step.0 * t as f64, start.1 + step.1 * t as f64))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn far_agents_have_no_edge() {
        let a = proto_set(1, vec![line((0.0, 0.0), (0.1, 0.0), 5)]);
        let b = proto_set(2, vec![line((100.0, 0.0), (0.1, 0.0), 5)]);
        assert!(build_interaction_graph(&[a, b], 5.0).unwrap().edges.is_empty());
    }

    #[test]
    fn crossing_agents_have_an_edge() {
        let a = proto_set(1, vec![line((-2.0, 0.0), (1.0, 0.0), 5)]);
        let b = proto_set(2, vec![line((0.0, -2.0), (0.0, 1.0), 5)]);
        let g = build_interaction_graph(&[a, b], 5.0).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].min_distance, 0.0);
        assert!(g.has_edge(1, 0));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn analytic_potential_examples() {
        let a = proto_set(1, vec![line((0.0, 0.0), (1.0, 0.0), 4)]);
        let far = proto_set(2, vec![line((0.0, 100.0), (1.0, 0.0), 4)]);
        let t = pairwise_potential(&a, &far, &PairwiseModel::default()).unwrap();
        assert!(t.get(0, 0).abs() < 1e-80);

        let touching = proto_set(3, vec![line((0.0, DEFAULT_COLLISION_THRESHOLD), (1.0, 0.0), 4)]);
        let t = pairwise_potential(&a, &touching, &PairwiseModel::default()).unwrap();
        assert_abs_diff_eq!(t.get(0, 0), 0.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(t.get(0, 0), -0.6931, epsilon = 1e-4);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert_abs_diff_eq!(log_sigmoid(0.0), 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(log_sigmoid(-800.0), -800.0, epsilon = 1e-9);
        assert_eq!(log_sigmoid(800.0), 0.0);
    }

    #[test]
    fn masking_examples() {
        let trajs_i = vec![line((0.0, 0.0), (1.0, 0.0), 4), line((0.0, 5.0), (1.0, 0.0), 4)];
        let trajs_j = vec![line((0.0, 10.0), (1.0, 0.0), 4)];
        let mut t = PairTable::filled(2, 1, 0.3);
        assert_eq!(mask_colliding_pairs(&mut t, &trajs_i, &trajs_j, 0.2, -1e4).unwrap(), 0);
        assert_eq!(t, PairTable::filled(2, 1, 0.3));

        let mut t = PairTable::filled(2, 2, 0.0);
        mask_colliding_pairs(&mut t, &trajs_i, &trajs_i, 0.2, -1e4).unwrap();
        assert_eq!(t.get(0, 0), -1e4);
        assert_eq!(t.get(1, 1), -1e4);
        assert_eq!(t.get(0, 1), 0.0);
    }

    pub(crate) fn two_agent_mrf(u0: Vec<f64>, u1: Vec<f64>, pair: f64) -> SceneMrf {
        let table = PairTable::filled(u0.len(), u1.len(), pair);
        SceneMrf::from_parts(
            vec![u0, u1],
            vec![MrfEdge { i: 0, j: 1, table, masked_pairs: 0 }],
            DEFAULT_MASK_VALUE,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn energy_examples() {
        let m = SceneMrf::from_parts(vec![vec![1.0, 0.5], vec![0.0, 2.0]], vec![], -1e4, vec![]).unwrap();
        assert_eq!(scene_energy(&m, &[1, 1]).unwrap(), 2.5);

        let m = two_agent_mrf(vec![1.0, 0.0], vec![0.0, 2.0], 0.5);
        assert_eq!(scene_energy(&m, &[0, 1]).unwrap(), 3.5);
        assert!(scene_energy(&m, &[0, 2]).is_err());

        let mut m = two_agent_mrf(vec![1.0, 0.0], vec![0.0, 2.0], 0.5);
        m.edges[0].table.set(0, 1, -1e4);
        assert!(scene_energy(&m, &[0, 1]).unwrap() <= -1e4 + 3.0);
        assert!(m.has_masked_pair(&[0, 1]));
    }

    #[test]
    fn energy_invariant_under_edge_orientation() {
        let mut t = PairTable::filled(2, 3, 0.0);
        for m in 0..2 {
            for n in 0..3 {
                t.set(m, n, (m * 3 + n) as f64 * 0.7 - 1.0);
            }
        }
        let u = vec![vec![0.2, -0.4], vec![1.0, 0.0, 0.5]];
        let a = SceneMrf::from_parts(u.clone(), vec![MrfEdge { i: 0, j: 1, table: t.clone(), masked_pairs: 0 }], -1e4, vec![])
            .unwrap();
        // Same field with the agents listed in the opposite order.
        let b = SceneMrf::from_parts(
            vec![u[1].clone(), u[0].clone()],
            vec![MrfEdge { i: 0, j: 1, table: t.transpose(), masked_pairs: 0 }],
            -1e4,
            vec![],
        )
        .unwrap();
        for x in 0..2 {
            for y in 0..3 {
                assert_eq!(scene_energy(&a, &[x, y]).unwrap(), scene_energy(&b, &[y, x]).unwrap());
            }
        }
    }

    #[test]
    fn realize_looks_up_prototypes() {
        let sets = vec![
            proto_set(1, vec![line((0.0, 0.0), (1.0, 0.0), 3), line((0.0, 0.0), (0.0, 1.0), 3)]),
            proto_set(2, vec![line((9.0, 9.0), (1.0, 0.0), 3)]),
        ];
        let m = SceneMrf::build(sets.clone(), &MrfConfig::default()).unwrap();
        let samples = vec![
            JointSample { assignment: vec![0, 0], energy: 0.0 },
            JointSample { assignment: vec![1, 0], energy: 0.0 },
        ];
        let r = realize_predictions(&m, &samples).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0][0], sets[0].trajectories[0]);
        assert_eq!(r[1][0], sets[0].trajectories[1]);
        assert_eq!(r[1][1], sets[1].trajectories[0]);
    }
}
