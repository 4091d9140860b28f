//! Systematic-scan Gibbs sampling of joint prototype assignments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{scene_energy, JointSample, SceneMrf};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// One chain; the last `num_samples` sweeps after burn-in are kept.
    Sequential,
    /// `num_samples` independent chains seeded `seed + c`, each kept once
    /// after burn-in.
    Parallel,
}

impl ChainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChainMode::Sequential => "sequential",
            ChainMode::Parallel => "parallel",
        }
    }
}

impl std::str::FromStr for ChainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(ChainMode::Sequential),
            "parallel" | "parallel_chains" => Ok(ChainMode::Parallel),
            other => Err(Error::InvalidInput(format!("unknown chain mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub mode: ChainMode,
}

impl GibbsConfig {
    pub fn new(burn_in: usize, num_samples: usize, seed: u64, mode: ChainMode) -> Self {
        GibbsConfig {
            burn_in,
            num_samples,
            seed,
            mode,
        }
    }
}

/// Draws an index with probability `softmax(logits)`.
pub(crate) fn sample_categorical(logits: &[f64], rng: &mut impl Rng) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, l) in logits.iter().enumerate() {
        let w = (l - max).exp();
        if w > 0.0 {
            last_positive = k;
        }
        acc += w;
        if acc > u {
            return k;
        }
    }
    last_positive
}

struct Chain<'a> {
    mrf: &'a SceneMrf,
    state: Vec<usize>,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl<'a> Chain<'a> {
    /// Independent draws from each agent's unary softmax.
    fn start(mrf: &'a SceneMrf, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = mrf
            .unary
            .iter()
            .map(|u| sample_categorical(u, &mut rng))
            .collect();
        Chain {
            mrf,
            state,
            rng,
            scratch: Vec::new(),
        }
    }

    /// Resamples every agent in index order, each conditioned on the current
    /// states of its neighbors.
    fn sweep(&mut self) {
        for agent in 0..self.mrf.num_agents() {
            self.mrf.conditional_logits(agent, &self.state, &mut self.scratch);
            self.state[agent] = sample_categorical(&self.scratch, &mut self.rng);
        }
    }

    fn snapshot(&self) -> Result<JointSample> {
        Ok(JointSample {
            assignment: self.state.clone(),
            energy: scene_energy(self.mrf, &self.state)?,
        })
    }
}

/// Samples `num_samples` joint assignments from `P ∝ exp(E)`.
///
/// Output is a pure function of `(mrf, config)`; in parallel mode chains run
/// on the current rayon pool and are collected in chain order.
pub fn gibbs_sample(mrf: &SceneMrf, config: &GibbsConfig) -> Result<Vec<JointSample>> {
    if config.num_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    match config.mode {
        ChainMode::Sequential => {
            let mut chain = Chain::start(mrf, config.seed);
            let mut kept = Vec::with_capacity(config.num_samples);
            for tau in 1..=config.burn_in + config.num_samples {
                chain.sweep();
                if tau > config.burn_in {
                    kept.push(chain.snapshot()?);
                }
            }
            Ok(kept)
        }
        ChainMode::Parallel => (0..config.num_samples as u64)
            .into_par_iter()
            .map(|c| {
                let mut chain = Chain::start(mrf, config.seed.wrapping_add(c));
                for _ in 0..=config.burn_in {
                    chain.sweep();
                }
                chain.snapshot()
            })
            .collect(),
    }
}
