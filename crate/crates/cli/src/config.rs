//! Run configuration: a JSON file merged with command-line overrides.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use scenealign::environment::NavigabilityMap;
use scenealign::io::{load_navigability_map, SplitConfig, WindowConfig};
use scenealign::mrf::{ChainMode, MrfConfig, PairwiseModel};
use scenealign::pipeline::PipelineConfig;
use scenealign::profiler::{Scorer, ScorerParams};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerMode {
    Baseline,
    Trained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Split file listing train/test annotation files.
    pub split: Option<PathBuf>,
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    /// Directory holding `<map id>.png` + `<map id>.json`.
    pub maps_dir: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub scorer: Option<PathBuf>,
    pub pairwise: Option<PathBuf>,
    pub output: Option<PathBuf>,

    pub d_s: usize,
    pub num_anchors: usize,
    pub top_k: usize,
    pub burn_in: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub collision_threshold: f64,
    pub temperature: f64,
    pub edge_radius: f64,
    pub mask_value: f64,
    pub obs_len: usize,
    pub pred_len: usize,
    pub frame_step: i64,
    pub stride: usize,
    pub dt: f64,

    pub scorer_mode: ScorerMode,
    pub chain_mode: ChainMode,
    pub env_filter: bool,
    pub a2a_filter: bool,
    pub gibbs: bool,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = WindowConfig::default();
        RunConfig {
            split: None,
            train: Vec::new(),
            test: Vec::new(),
            maps_dir: None,
            anchors: None,
            scorer: None,
            pairwise: None,
            output: None,
            d_s: scenealign::anchor::DEFAULT_LATENT_DIM,
            num_anchors: scenealign::anchor::DEFAULT_NUM_ANCHORS,
            top_k: scenealign::profiler::DEFAULT_TOP_K,
            burn_in: scenealign::pipeline::DEFAULT_BURN_IN,
            num_samples: scenealign::pipeline::DEFAULT_NUM_SAMPLES,
            seed: 0,
            collision_threshold: scenealign::mrf::DEFAULT_COLLISION_THRESHOLD,
            temperature: scenealign::profiler::DEFAULT_TEMPERATURE,
            edge_radius: scenealign::mrf::DEFAULT_EDGE_RADIUS,
            mask_value: scenealign::mrf::DEFAULT_MASK_VALUE,
            obs_len: w.obs_len,
            pred_len: w.pred_len,
            frame_step: w.frame_step,
            stride: w.stride,
            dt: w.dt,
            scorer_mode: ScorerMode::Baseline,
            chain_mode: ChainMode::Parallel,
            env_filter: true,
            a2a_filter: true,
            gibbs: true,
            workers: None,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Relative paths resolve against the config file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        for p in cfg.train.iter_mut().chain(cfg.test.iter_mut()) {
            resolve(&base, p);
        }
        for p in [
            &mut cfg.split,
            &mut cfg.maps_dir,
            &mut cfg.anchors,
            &mut cfg.scorer,
            &mut cfg.pairwise,
            &mut cfg.output,
        ]
        .into_iter()
        .flatten()
        {
            resolve(&base, p);
        }
        Ok(cfg)
    }

    /// Folds the split file, if any, into train/test lists and window settings.
    pub fn apply_split(&mut self) -> anyhow::Result<()> {
        if let Some(path) = self.split.take() {
            let split = SplitConfig::load(&path)?;
            self.train.extend(split.train);
            self.test.extend(split.test);
            self.frame_step = split.frame_step;
            self.stride = split.stride;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let bad = |msg: String| Err(UsageError(msg));
        if self.d_s == 0 || self.num_anchors == 0 {
            return bad("d_s and num_anchors must be positive".into());
        }
        if self.top_k == 0 || self.num_samples == 0 {
            return bad("top_k and num_samples must be positive".into());
        }
        if !(self.collision_threshold >= 0.0) || !(self.edge_radius >= 0.0) {
            return bad("collision_threshold and edge_radius must be non-negative".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.mask_value < 0.0) || !self.mask_value.is_finite() {
            return bad(format!("mask_value must be finite and negative, got {}", self.mask_value));
        }
        if self.obs_len < 2 || self.pred_len == 0 || self.stride == 0 || self.frame_step <= 0 || !(self.dt > 0.0) {
            return bad("invalid window settings".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            obs_len: self.obs_len,
            pred_len: self.pred_len,
            stride: self.stride,
            frame_step: self.frame_step,
            dt: self.dt,
        }
    }

    pub fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        let pairwise = match &self.pairwise {
            Some(p) => PairwiseModel::Learned(scenealign::mrf::BilinearPairwise::load(p)?),
            None => PairwiseModel::default(),
        };
        Ok(PipelineConfig {
            top_k: self.top_k,
            mrf: MrfConfig {
                edge_radius: self.edge_radius,
                collision_threshold: self.collision_threshold,
                mask_value: self.mask_value,
                mask_collisions: self.a2a_filter,
                pairwise,
            },
            burn_in: self.burn_in,
            num_samples: self.num_samples,
            chain_mode: self.chain_mode,
            env_filter: self.env_filter,
            gibbs: self.gibbs,
            seed: self.seed,
            ..PipelineConfig::default()
        })
    }

    pub fn scorer(&self) -> anyhow::Result<Scorer> {
        Ok(match self.scorer_mode {
            ScorerMode::Baseline => Scorer::Baseline {
                temperature: self.temperature,
            },
            ScorerMode::Trained => {
                let Some(path) = &self.scorer else {
                    bail!(UsageError("scorer_mode \"trained\" needs a scorer path".into()));
                };
                Scorer::Trained(ScorerParams::load(path)?)
            }
        })
    }

    /// Maps for every id that has a PNG/JSON pair in `maps_dir`.
    pub fn maps(&self, ids: impl IntoIterator<Item = String>) -> anyhow::Result<HashMap<String, NavigabilityMap>> {
        let mut maps = HashMap::new();
        let Some(dir) = &self.maps_dir else {
            return Ok(maps);
        };
        for id in ids {
            if maps.contains_key(&id) {
                continue;
            }
            let png = dir.join(format!("{id}.png"));
            let json = dir.join(format!("{id}.json"));
            if png.exists() {
                maps.insert(id, load_navigability_map(&png, &json)?);
            }
        }
        Ok(maps)
    }
}
