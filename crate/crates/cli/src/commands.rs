use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use log::info;

use scenealign::anchor::{build_anchor_db, build_motion_matrix, compress, decompress, AnchorDatabase};
use scenealign::environment::NavigabilityMap;
use scenealign::geometry::Trajectory;
use scenealign::io::ethucy::{format_ethucy, load_scenes};
use scenealign::io::predictions::{read_predictions, write_predictions_to, ScenePredictions};
use scenealign::io::synthetic::{generate_synthetic_scene, random_walker_scenes, synthetic_map};
use scenealign::io::{save_navigability_map, MapKind, RawAnnotation, ScenarioKind, SyntheticScenario};
use scenealign::metrics::{MetricsConfig, MetricsReport};
use scenealign::pipeline::{evaluate_scenes, predict_scenes};
use scenealign::Scene;

use crate::config::RunConfig;
use crate::{plot, GlobalArgs, MapArg, UsageError};

fn load_config(global: &GlobalArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if global.workers.is_some() {
        cfg.workers = global.workers;
    }
    if let Some(m) = global.chain_mode {
        cfg.chain_mode = m.into();
    }
    cfg.env_filter &= !global.no_env_filter;
    cfg.a2a_filter &= !global.no_a2a_filter;
    cfg.gibbs &= !global.no_gibbs;
    if let Some(o) = &global.out {
        cfg.output = Some(o.clone());
    }
    cfg.apply_split()?;
    cfg.validate()?;
    Ok(cfg)
}

fn in_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        b = b.num_threads(w);
    }
    Ok(b.build().context("starting worker pool")?.install(f))
}

fn output_path(cfg: &RunConfig) -> anyhow::Result<&Path> {
    match &cfg.output {
        Some(p) => Ok(p),
        None => bail!(UsageError("--out (or \"output\" in the config) is required".into())),
    }
}

/// Writes through a temporary file in the target directory, so a failed run
/// never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn require_files(files: &[PathBuf], what: &str) -> anyhow::Result<()> {
    if files.is_empty() {
        bail!(UsageError(format!("no {what} files given")));
    }
    Ok(())
}

pub fn build_anchors(global: &GlobalArgs, train: Vec<PathBuf>, num_anchors: Option<usize>) -> anyhow::Result<()> {
    let mut cfg = load_config(global)?;
    cfg.train.extend(train);
    if let Some(k) = num_anchors {
        cfg.num_anchors = k;
        cfg.validate()?;
    }
    require_files(&cfg.train, "training")?;
    let out = output_path(&cfg)?;
    let scenes = load_scenes(&cfg.train, &cfg.window())?;
    let db = build_anchor_db(&scenes, cfg.d_s, cfg.num_anchors, cfg.seed)?;

    let motion = build_motion_matrix(&scenes)?;
    let mut sq = Vec::with_capacity(motion.rows());
    for row in motion.matrix.iter_rows() {
        let back = decompress(&compress(row, &db.basis)?, &db.basis)?;
        sq.push(row.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
    }
    let rms = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
    let max = sq.iter().copied().fold(0.0, f64::max).sqrt();

    write_atomic(out, db.to_json()?.as_bytes())?;
    println!(
        "anchors: K={} d_s={} futures={} residual rms={rms:.4} max={max:.4} seed={}",
        db.len(),
        db.latent_dim(),
        motion.rows(),
        cfg.seed
    );
    Ok(())
}

pub fn predict(
    global: &GlobalArgs,
    test: Vec<PathBuf>,
    anchors: Option<PathBuf>,
    maps_dir: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(global)?;
    cfg.test.extend(test);
    if anchors.is_some() {
        cfg.anchors = anchors;
    }
    if maps_dir.is_some() {
        cfg.maps_dir = maps_dir;
    }
    require_files(&cfg.test, "test")?;
    let out = output_path(&cfg)?.to_path_buf();
    let Some(anchor_path) = &cfg.anchors else {
        bail!(UsageError("an anchor database is required (--anchors)".into()));
    };
    let start = Instant::now();
    let db = AnchorDatabase::load(anchor_path)?;
    let scenes = load_scenes(&cfg.test, &cfg.window())?;
    if scenes.is_empty() {
        bail!(scenealign::Error::InvalidInput("test files contain no complete windows".into()));
    }
    let maps = cfg.maps(scenes.iter().filter_map(|s| s.map_id.clone()))?;
    let scorer = cfg.scorer()?;
    let pipeline = cfg.pipeline()?;
    info!("predicting {} scenes", scenes.len());
    let results = in_pool(&cfg, || predict_scenes(&scenes, &maps, &db, &scorer, &pipeline))??;

    let sets: Vec<_> = results.iter().map(|r| r.predictions.clone()).collect();
    let mut buf = Vec::new();
    write_predictions_to(&mut buf, &sets)?;
    write_atomic(&out, &buf)?;

    let energies: Vec<f64> = sets.iter().flat_map(|s| s.samples.iter().map(|x| x.energy)).collect();
    let masked: usize = results.iter().map(|r| r.diagnostics.masked_samples).sum();
    let fallback: usize = results.iter().map(|r| r.diagnostics.fallback_agents).sum();
    println!(
        "predict: scenes={} samples={} mean_energy={:.4} masked_samples={masked} fallback_agents={fallback} seed={} wall={:.2}s",
        sets.len(),
        energies.len(),
        energies.iter().sum::<f64>() / energies.len() as f64,
        cfg.seed,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn ground_truth_scenes(cfg: &RunConfig, files: Vec<PathBuf>) -> anyhow::Result<Vec<Scene>> {
    let files = if files.is_empty() { cfg.test.clone() } else { files };
    require_files(&files, "ground-truth")?;
    Ok(load_scenes(&files, &cfg.window())?)
}

/// Pairs every prediction scene with its ground truth, or lists every
/// mismatch.
fn align<'g, 'p>(preds: &'p [ScenePredictions], gt: &'g [Scene]) -> anyhow::Result<Vec<(&'g Scene, &'p ScenePredictions)>> {
    let by_id: HashMap<&str, &Scene> = gt.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut problems = Vec::new();
    let mut pairs = Vec::with_capacity(preds.len());
    for p in preds {
        let Some(scene) = by_id.get(p.scene_id.as_str()) else {
            problems.push(format!("scene {} has no ground truth", p.scene_id));
            continue;
        };
        let gt_ids: BTreeSet<u64> = scene.agent_ids.iter().copied().collect();
        let pred_ids: BTreeSet<u64> = p.agent_ids.iter().copied().collect();
        if gt_ids != pred_ids {
            problems.push(format!(
                "scene {}: agents only predicted {:?}, only in ground truth {:?}",
                p.scene_id,
                pred_ids.difference(&gt_ids).collect::<Vec<_>>(),
                gt_ids.difference(&pred_ids).collect::<Vec<_>>()
            ));
            continue;
        }
        if let Some(t) = p.trajectories.first().and_then(|s| s.first()) {
            let want = scene.pred_len().unwrap_or(0);
            if t.len() != want {
                problems.push(format!("scene {}: {} predicted steps, ground truth has {want}", p.scene_id, t.len()));
                continue;
            }
        }
        pairs.push((*scene, p));
    }
    let predicted: BTreeSet<&str> = preds.iter().map(|p| p.scene_id.as_str()).collect();
    let missing: Vec<&str> = gt.iter().map(|s| s.id.as_str()).filter(|id| !predicted.contains(id)).collect();
    if !missing.is_empty() {
        problems.push(format!("{} ground-truth scenes have no predictions (first: {})", missing.len(), missing[0]));
    }
    if !problems.is_empty() {
        bail!(scenealign::Error::InvalidInput(format!(
            "predictions do not align with ground truth:\n  {}",
            problems.join("\n  ")
        )));
    }
    Ok(pairs)
}

/// `[sample][agent]` in ground-truth agent order.
fn reorder(scene: &Scene, p: &ScenePredictions) -> Vec<Vec<Trajectory>> {
    let pos: HashMap<u64, usize> = p.agent_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    p.trajectories
        .iter()
        .map(|sample| scene.agent_ids.iter().map(|id| sample[pos[id]].clone()).collect())
        .collect()
}

pub fn evaluate(
    global: &GlobalArgs,
    predictions: Option<PathBuf>,
    ground_truth: Vec<PathBuf>,
    maps_dir: Option<PathBuf>,
    gt_as_predictions: bool,
) -> anyhow::Result<()> {
    let mut cfg = load_config(global)?;
    if maps_dir.is_some() {
        cfg.maps_dir = maps_dir;
    }
    let gt = ground_truth_scenes(&cfg, ground_truth)?;
    let maps: HashMap<String, NavigabilityMap> = cfg.maps(gt.iter().filter_map(|s| s.map_id.clone()))?;

    let (scenes, preds): (Vec<&Scene>, Vec<Vec<Vec<Trajectory>>>) = if gt_as_predictions {
        gt.iter()
            .map(|s| (s, vec![s.futures.clone().expect("windows carry futures")]))
            .unzip()
    } else {
        let Some(path) = predictions else {
            bail!(UsageError("--predictions or --gt-as-predictions is required".into()));
        };
        let loaded = read_predictions(&path)?;
        let pairs = align(&loaded, &gt)?;
        pairs.iter().map(|(s, p)| (*s, reorder(s, p))).unzip()
    };
    let pred_refs: Vec<&[Vec<Trajectory>]> = preds.iter().map(Vec::as_slice).collect();
    let metrics = MetricsConfig {
        a2a_threshold: cfg.collision_threshold,
    };
    let sums = in_pool(&cfg, || evaluate_scenes(&scenes, &pred_refs, &maps, &metrics))??;
    let report = MetricsReport::from_sums(&sums, &metrics, Some(cfg.seed))?;
    let mut json = report.to_json();
    json.push('\n');
    match &cfg.output {
        Some(out) => write_atomic(out, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

pub fn plot(
    global: &GlobalArgs,
    predictions: PathBuf,
    ground_truth: Vec<PathBuf>,
    scene_id: Option<String>,
) -> anyhow::Result<()> {
    let cfg = load_config(global)?;
    let out = output_path(&cfg)?;
    let loaded = read_predictions(&predictions)?;
    if loaded.is_empty() {
        bail!(scenealign::Error::InvalidInput(format!("{} holds no predictions", predictions.display())));
    }
    let pred = match &scene_id {
        Some(id) => loaded
            .iter()
            .find(|p| &p.scene_id == id)
            .ok_or_else(|| scenealign::Error::InvalidInput(format!("unknown scene id {id:?}")))?,
        None => &loaded[0],
    };
    let gt = ground_truth_scenes(&cfg, ground_truth)?;
    let scene = gt
        .iter()
        .find(|s| s.id == pred.scene_id)
        .ok_or_else(|| scenealign::Error::InvalidInput(format!("scene {} has no ground truth", pred.scene_id)))?;
    let preds = reorder(scene, align(std::slice::from_ref(pred), std::slice::from_ref(scene))?[0].1);
    let svg = plot::render_svg(scene, &preds, cfg.collision_threshold, cfg.seed);
    write_atomic(out, svg.as_bytes())?;
    Ok(())
}

fn scene_rows(scene: &Scene, frame_step: i64) -> Vec<RawAnnotation> {
    let mut rows = Vec::new();
    let futures = scene.futures.as_deref().unwrap_or(&[]);
    for (a, id) in scene.agent_ids.iter().enumerate() {
        let pts = scene.histories[a].points().iter().chain(futures.get(a).map_or(&[][..], |f| f.points()));
        for (t, p) in pts.enumerate() {
            rows.push(RawAnnotation {
                frame_id: t as i64 * frame_step,
                agent_id: *id,
                x: p.x,
                y: p.y,
            });
        }
    }
    rows.sort_by_key(|r| (r.frame_id, r.agent_id));
    rows
}

pub fn synth(
    global: &GlobalArgs,
    kind: &str,
    count: usize,
    n_agents: usize,
    noise: f64,
    map: MapArg,
    walkers: usize,
) -> anyhow::Result<()> {
    let cfg = load_config(global)?;
    let dir = output_path(&cfg)?;
    let kinds: Vec<ScenarioKind> = match kind {
        "mixed" => vec![ScenarioKind::Crossing, ScenarioKind::HeadOn],
        k => vec![k.parse().map_err(|e: scenealign::Error| UsageError(e.to_string()))?],
    };
    if count == 0 || n_agents == 0 || !(noise >= 0.0) {
        bail!(UsageError("count and n_agents must be positive, noise non-negative".into()));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut test = Vec::with_capacity(count);
    for i in 0..count {
        let mut sc = SyntheticScenario::new(kinds[i % kinds.len()], n_agents, cfg.seed + i as u64);
        sc.noise_std = noise;
        sc.obs_len = cfg.obs_len;
        sc.pred_len = cfg.pred_len;
        sc.dt = cfg.dt;
        let scene = generate_synthetic_scene(&sc)?;
        let stem = format!("scene_{i:03}");
        write_atomic(&dir.join(format!("{stem}.txt")), format_ethucy(&scene_rows(&scene, cfg.frame_step)).as_bytes())?;
        let kind = match map {
            MapArg::None => None,
            MapArg::Corridor => Some(MapKind::Corridors { half_width: 1.0 }),
            MapArg::Obstacles => Some(MapKind::Obstacles {
                count: 40,
                size: 1.0,
                clearance: 0.5,
            }),
        };
        if let Some(kind) = kind {
            let m = synthetic_map(&scene, kind, 0.1, 12.0, sc.seed)?;
            save_navigability_map(&m, &stem, &dir.join(format!("{stem}.png")), &dir.join(format!("{stem}.json")))?;
        }
        test.push(format!("{stem}.txt"));
    }

    let mut train_rows = Vec::new();
    if walkers > 0 {
        let span = (cfg.obs_len + cfg.pred_len) as i64;
        for (i, w) in random_walker_scenes(walkers, cfg.seed, cfg.obs_len, cfg.pred_len, cfg.dt)?
            .iter()
            .enumerate()
        {
            // Each walker gets its own id and time slot.
            for mut r in scene_rows(w, cfg.frame_step) {
                r.agent_id = i as u64;
                r.frame_id += i as i64 * span * cfg.frame_step;
                train_rows.push(r);
            }
        }
        write_atomic(&dir.join("train.txt"), format_ethucy(&train_rows).as_bytes())?;
    }

    let mut run = String::new();
    writeln!(run, "{{").ok();
    if walkers > 0 {
        writeln!(run, "  \"train\": [\"train.txt\"],").ok();
    }
    writeln!(
        run,
        "  \"test\": [{}],",
        test.iter().map(|t| format!("\"{t}\"")).collect::<Vec<_>>().join(", ")
    )
    .ok();
    writeln!(run, "  \"maps_dir\": \".\",").ok();
    writeln!(run, "  \"anchors\": \"anchors.json\",").ok();
    writeln!(run, "  \"seed\": {}", cfg.seed).ok();
    writeln!(run, "}}").ok();
    write_atomic(&dir.join("run.json"), run.as_bytes())?;
    println!("synth: {count} scenes, {walkers} training walkers in {} (seed={})", dir.display(), cfg.seed);
    Ok(())
}
