mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scenealign::mrf::ChainMode;

/// Invalid flags or configuration values (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "scenealign", version, about = "Scene-consistent multi-agent trajectory prediction")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (output never depends on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Keep anchors that leave navigable space.
    #[arg(long, global = true)]
    pub no_env_filter: bool,
    /// Do not mask colliding prototype pairs.
    #[arg(long, global = true)]
    pub no_a2a_filter: bool,
    /// Replace Gibbs sampling with belief-propagation ranks.
    #[arg(long, global = true)]
    pub no_gibbs: bool,
    #[arg(long, global = true, value_enum)]
    pub chain_mode: Option<ChainModeArg>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ChainModeArg {
    Sequential,
    Parallel,
}

impl From<ChainModeArg> for ChainMode {
    fn from(m: ChainModeArg) -> Self {
        match m {
            ChainModeArg::Sequential => ChainMode::Sequential,
            ChainModeArg::Parallel => ChainMode::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MapArg {
    None,
    Corridor,
    Obstacles,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster training futures into an anchor database.
    BuildAnchors {
        /// Annotation files (added to the config's train list).
        #[arg(long)]
        train: Vec<PathBuf>,
        #[arg(long)]
        num_anchors: Option<usize>,
    },
    /// Predict joint futures for every test window.
    Predict {
        #[arg(long)]
        test: Vec<PathBuf>,
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        maps_dir: Option<PathBuf>,
    },
    /// Score predictions against ground-truth futures.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Annotation files holding the ground truth.
        #[arg(long = "ground-truth")]
        ground_truth: Vec<PathBuf>,
        #[arg(long)]
        maps_dir: Option<PathBuf>,
        /// Evaluate the ground truth itself as a one-sample prediction.
        #[arg(long, conflicts_with = "predictions")]
        gt_as_predictions: bool,
    },
    /// Draw one scene's predictions as SVG.
    Plot {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long = "ground-truth")]
        ground_truth: Vec<PathBuf>,
        /// Scene id; defaults to the first scene in the file.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Write synthetic scenes, maps and training walkers to a directory.
    Synth {
        #[arg(long, default_value = "crossing")]
        kind: String,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        n_agents: usize,
        #[arg(long, default_value_t = 0.03)]
        noise: f64,
        #[arg(long, value_enum, default_value = "corridor")]
        map: MapArg,
        /// Random single-agent walkers written to train.txt.
        #[arg(long, default_value_t = 400)]
        walkers: usize,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<scenealign::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCENE_ALIGN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::BuildAnchors { train, num_anchors } => commands::build_anchors(&cli.global, train, num_anchors),
        Command::Predict { test, anchors, maps_dir } => commands::predict(&cli.global, test, anchors, maps_dir),
        Command::Evaluate {
            predictions,
            ground_truth,
            maps_dir,
            gt_as_predictions,
        } => commands::evaluate(&cli.global, predictions, ground_truth, maps_dir, gt_as_predictions),
        Command::Plot {
            predictions,
            ground_truth,
            scene,
        } => commands::plot(&cli.global, predictions, ground_truth, scene),
        Command::Synth {
            kind,
            count,
            n_agents,
            noise,
            map,
            walkers,
        } => commands::synth(&cli.global, &kind, count, n_agents, noise, map, walkers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
