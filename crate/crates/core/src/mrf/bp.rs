//! Loopy sum-product belief propagation and rank-aligned joint predictions.

use super::{scene_energy, JointSample, SceneMrf};
use crate::error::Result;

pub const DEFAULT_BP_ITERATIONS: usize = 20;
const DAMPING: f64 = 0.5;
const TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BpResult {
    /// Per-agent normalized marginal beliefs.
    pub beliefs: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize_log(v: &mut [f64]) {
    let z = log_sum_exp(v.iter().copied());
    v.iter_mut().for_each(|x| *x -= z);
}

/// Log-space sum-product with message damping 0.5 (the first round, which
/// starts from uniform messages, is taken undamped).
///
/// Messages are updated synchronously; iteration stops early once no message
/// moves by more than 1e-12.
pub fn bp_rerank(mrf: &SceneMrf, iterations: usize) -> BpResult {
    let n = mrf.num_agents();
    // messages[e] = (toward j, toward i)
    let mut messages: Vec<(Vec<f64>, Vec<f64>)> = mrf
        .edges
        .iter()
        .map(|e| (vec![0.0; mrf.num_states(e.j)], vec![0.0; mrf.num_states(e.i)]))
        .collect();

    // Incoming log-message total per agent, excluding one edge on demand.
    let incoming = |messages: &[(Vec<f64>, Vec<f64>)], agent: usize| -> Vec<f64> {
        let mut acc = mrf.unary[agent].clone();
        for &(e, first) in mrf.neighbors(agent) {
            let m = if first { &messages[e].1 } else { &messages[e].0 };
            acc.iter_mut().zip(m).for_each(|(a, v)| *a += v);
        }
        acc
    };

    let mut converged = mrf.edges.is_empty();
    let mut done = 0;
    while done < iterations && !converged {
        done += 1;
        let totals: Vec<Vec<f64>> = (0..n).map(|a| incoming(&messages, a)).collect();
        let mut delta: f64 = 0.0;
        let mut next = messages.clone();
        for (e, edge) in mrf.edges.iter().enumerate() {
            // i → j: exclude j's own message to i from i's total.
            let from_i: Vec<f64> = totals[edge.i]
                .iter()
                .zip(&messages[e].1)
                .map(|(t, m)| t - m)
                .collect();
            let mut to_j: Vec<f64> = (0..mrf.num_states(edge.j))
                .map(|xj| {
                    log_sum_exp(
                        from_i
                            .iter()
                            .enumerate()
                            .map(|(xi, f)| f + edge.table.get(xi, xj)),
                    )
                })
                .collect();
            normalize_log(&mut to_j);

            let from_j: Vec<f64> = totals[edge.j]
                .iter()
                .zip(&messages[e].0)
                .map(|(t, m)| t - m)
                .collect();
            let mut to_i: Vec<f64> = (0..mrf.num_states(edge.i))
                .map(|xi| {
                    log_sum_exp(
                        from_j
                            .iter()
                            .enumerate()
                            .map(|(xj, f)| f + edge.table.get(xi, xj)),
                    )
                })
                .collect();
            normalize_log(&mut to_i);

            if done > 1 {
                for (new, old) in to_j.iter_mut().zip(&messages[e].0) {
                    *new = DAMPING * old + (1.0 - DAMPING) * *new;
                }
                for (new, old) in to_i.iter_mut().zip(&messages[e].1) {
                    *new = DAMPING * old + (1.0 - DAMPING) * *new;
                }
                normalize_log(&mut to_j);
                normalize_log(&mut to_i);
            }
            for (a, b) in to_j.iter().zip(&messages[e].0).chain(to_i.iter().zip(&messages[e].1)) {
                delta = delta.max((a - b).abs());
            }
            next[e] = (to_j, to_i);
        }
        messages = next;
        converged = delta < TOLERANCE;
    }

    let beliefs = (0..n)
        .map(|a| {
            let mut b = incoming(&messages, a);
            normalize_log(&mut b);
            b.iter().map(|v| v.exp()).collect()
        })
        .collect();
    BpResult {
        beliefs,
        iterations: done,
        converged,
    }
}

/// State order per agent by descending belief, ties to the lower index.
pub fn rank_states(beliefs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..beliefs.len()).collect();
    order.sort_by(|&a, &b| beliefs[b].total_cmp(&beliefs[a]).then(a.cmp(&b)));
    order
}

/// Sample `r` gives every agent its rank-`r` state (wrapping for agents with
/// fewer states).
pub fn rank_aligned_samples(
    mrf: &SceneMrf,
    beliefs: &[Vec<f64>],
    num_samples: usize,
) -> Result<Vec<JointSample>> {
    let orders: Vec<Vec<usize>> = beliefs.iter().map(|b| rank_states(b)).collect();
    (0..num_samples)
        .map(|r| {
            let assignment: Vec<usize> = orders.iter().map(|o| o[r % o.len()]).collect();
            let energy = scene_energy(mrf, &assignment)?;
            Ok(JointSample { assignment, energy })
        })
        .collect()
}
