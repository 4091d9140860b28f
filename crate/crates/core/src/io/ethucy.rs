//! Whitespace-separated `frame id x y` annotation files and windowing into
//! scenes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Trajectory, DEFAULT_DT};
use crate::scene::{AgentId, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub frame_id: i64,
    pub agent_id: AgentId,
    pub x: f64,
    pub y: f64,
}

fn integral(field: &str, what: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .parse()
        .map_err(|_| format!("{what} {field:?} is not a number"))?;
    if !v.is_finite() || (v - v.round()).abs() > 1e-6 {
        return Err(format!("{what} {field:?} is not an integer"));
    }
    Ok(v.round())
}

fn parse_line(line: &str) -> std::result::Result<Option<RawAnnotation>, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() != 4 {
        return Err(format!("expected 4 fields (frame id x y), found {}", fields.len()));
    }
    let frame = integral(fields[0], "frame")?;
    let id = integral(fields[1], "agent id")?;
    if id < 0.0 {
        return Err(format!("agent id {id} is negative"));
    }
    let coord = |s: &str| -> std::result::Result<f64, String> {
        let v: f64 = s.parse().map_err(|_| format!("coordinate {s:?} is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("coordinate {s:?} is not finite"))
        }
    };
    Ok(Some(RawAnnotation {
        frame_id: frame as i64,
        agent_id: id as AgentId,
        x: coord(fields[2])?,
        y: coord(fields[3])?,
    }))
}

/// Parses annotation text; `path` only labels errors.
pub fn parse_ethucy_str(text: &str, path: &Path) -> Result<Vec<RawAnnotation>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parsed = parse_line(line).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        })?;
        rows.extend(parsed);
    }
    rows.sort_by_key(|a| (a.frame_id, a.agent_id));
    if let Some(w) = rows
        .windows(2)
        .find(|w| (w[0].frame_id, w[0].agent_id) == (w[1].frame_id, w[1].agent_id))
    {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("duplicate annotation for agent {} in frame {}", w[0].agent_id, w[0].frame_id),
        });
    }
    Ok(rows)
}

/// Rows sorted by `(frame, id)`.
pub fn parse_ethucy(path: &Path) -> Result<Vec<RawAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ethucy_str(&text, path)
}

pub fn format_ethucy(rows: &[RawAnnotation]) -> String {
    let mut out = String::new();
    for r in rows {
        writeln!(out, "{}\t{}\t{:?}\t{:?}", r.frame_id, r.agent_id, r.x, r.y).expect("string write");
    }
    out
}

pub fn write_ethucy(path: &Path, rows: &[RawAnnotation]) -> Result<()> {
    fs::write(path, format_ethucy(rows)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub obs_len: usize,
    pub pred_len: usize,
    /// Timesteps between consecutive window starts.
    pub stride: usize,
    /// Annotation frame ids per timestep.
    pub frame_step: i64,
    /// Seconds per timestep.
    pub dt: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            obs_len: 8,
            pred_len: 12,
            stride: 1,
            frame_step: 10,
            dt: DEFAULT_DT,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.obs_len < 2 || self.pred_len == 0 || self.stride == 0 || self.frame_step <= 0 {
            return Err(Error::InvalidInput(format!("invalid window config {self:?}")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid dt {}", self.dt)));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        self.obs_len + self.pred_len
    }
}

/// Sliding windows over timesteps `first_frame + t·frame_step`. An agent
/// joins a window only when annotated at every one of its timesteps; windows
/// without such agents are dropped. Scene ids are `"{prefix}:{start frame}"`.
pub fn make_windows(rows: &[RawAnnotation], cfg: &WindowConfig, prefix: &str) -> Result<Vec<Scene>> {
    cfg.validate()?;
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let first = rows.iter().map(|r| r.frame_id).min().expect("non-empty");
    let last = rows.iter().map(|r| r.frame_id).max().expect("non-empty");
    let mut at: HashMap<(i64, AgentId), Point2> = HashMap::with_capacity(rows.len());
    let mut by_frame: BTreeMap<i64, Vec<AgentId>> = BTreeMap::new();
    for r in rows {
        at.insert((r.frame_id, r.agent_id), Point2::new(r.x, r.y));
        by_frame.entry(r.frame_id).or_default().push(r.agent_id);
    }
    let steps = ((last - first) / cfg.frame_step) as usize + 1;
    let len = cfg.window_len();
    let mut scenes = Vec::new();
    let mut start = 0;
    while start + len <= steps {
        let frame_of = |t: usize| first + (start + t) as i64 * cfg.frame_step;
        let mut candidates: Vec<AgentId> = by_frame.get(&frame_of(0)).cloned().unwrap_or_default();
        candidates.sort_unstable();
        candidates.dedup();
        let mut ids = Vec::new();
        let mut histories = Vec::new();
        let mut futures = Vec::new();
        for id in candidates {
            let pts: Option<Vec<Point2>> = (0..len).map(|t| at.get(&(frame_of(t), id)).copied()).collect();
            if let Some(pts) = pts {
                ids.push(id);
                histories.push(Trajectory::new(pts[..cfg.obs_len].to_vec(), cfg.dt)?);
                futures.push(Trajectory::new(pts[cfg.obs_len..].to_vec(), cfg.dt)?);
            }
        }
        if !ids.is_empty() {
            scenes.push(Scene::new(
                format!("{prefix}:{}", frame_of(0)),
                ids,
                histories,
                Some(futures),
                Some(prefix.to_string()),
            )?);
        }
        start += cfg.stride;
    }
    Ok(scenes)
}

/// Windows every file, using each file stem as scene prefix and map id.
pub fn load_scenes(paths: &[PathBuf], cfg: &WindowConfig) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    for p in paths {
        let prefix = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        scenes.extend(make_windows(&parse_ethucy(p)?, cfg, &prefix)?);
    }
    Ok(scenes)
}

/// Leave-one-scene-out split: which files train the anchors and which are
/// predicted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    #[serde(default = "default_frame_step")]
    pub frame_step: i64,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_frame_step() -> i64 {
    10
}

fn default_stride() -> usize {
    1
}

impl SplitConfig {
    /// Relative paths resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: SplitConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.train.iter_mut().chain(cfg.test.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            frame_step: self.frame_step,
            stride: self.stride,
            ..WindowConfig::default()
        }
    }
}
