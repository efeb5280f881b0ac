//! Experiment files: flat TOML, every key optional.
//!
//! ```toml
//! layouts = ["A:60", "maps/floor.txt"]   # preset:size, preset:WxH or a layout file
//! layout_seed = 1
//! robots = [10, 100]
//! tasks = 500
//! allocators = ["mpdm", "rbts", "random", "rl"]
//! nav_mode = "astar"                      # direct | astar | astar_orca
//! seeds = [1, 2, 3]
//! checkpoint = "policy.json"
//! ```
//!
//! The full key list is in the README. Relative paths resolve against the
//! directory holding the experiment file.

use anyhow::{bail, Context, Result};
use dcmrta::rl::{Algorithm, AllocatorKind, RewardMode, TrainConfig};
use dcmrta::sim::{NavMode, SimConfig};
use dcmrta::world::{load_layout, Layout, LayoutPreset};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub layouts: Option<Vec<String>>,
    pub layout_seed: Option<u64>,
    pub robots: Option<Vec<usize>>,
    pub tasks: Option<usize>,
    /// Run length for cells with 1000 or more robots in `scale`.
    pub large_tasks: Option<usize>,
    pub allocators: Option<Vec<String>>,
    pub nav_mode: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub checkpoint: Option<PathBuf>,

    pub queue_len: Option<usize>,
    pub dt: Option<f64>,
    pub radius: Option<f64>,
    pub v_max: Option<f64>,
    pub nominal_speed: Option<f64>,
    pub arrival_threshold: Option<f64>,
    pub stall_ticks: Option<u64>,
    pub time_horizon: Option<f64>,
    pub obstacle_horizon: Option<f64>,
    pub sensing_radius: Option<f64>,
    pub max_neighbors: Option<usize>,
    pub lookahead: Option<f64>,
    pub parallel: Option<bool>,

    pub gamma: Option<f64>,
    pub updates: Option<usize>,
    pub envs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub entropy_coef: Option<f64>,
    pub value_coef: Option<f64>,
    pub grad_clip: Option<f64>,
    pub embed_dim: Option<usize>,
    pub k_train: Option<usize>,
    /// "reinforce" or "ppo".
    pub algorithm: Option<String>,
    pub ppo_clip: Option<f64>,
    pub ppo_epochs: Option<usize>,
    /// "measured" or "estimate".
    pub reward_mode: Option<String>,
    pub train_seed: Option<u64>,
    pub eval_every: Option<usize>,
    pub validation_episodes: Option<usize>,
    pub normalize_advantages: Option<bool>,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, rebasing relative layout and checkpoint paths onto its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file = Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(layouts) = &mut file.layouts {
            for l in layouts.iter_mut() {
                if LayoutSource::parse(l).is_ok_and(|s| matches!(s, LayoutSource::File(_))) && Path::new(l).is_relative() {
                    *l = base.join(&*l).to_string_lossy().into_owned();
                }
            }
        }
        if let Some(ck) = &mut file.checkpoint {
            if ck.is_relative() {
                *ck = base.join(&*ck);
            }
        }
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayoutSource {
    Preset { preset: LayoutPreset, width: usize, height: usize },
    File(PathBuf),
}

impl LayoutSource {
    /// `A:60`, `open:300x300`, or anything else as a file path.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some((name, size)) = s.split_once(':') {
            if let Some(preset) = LayoutPreset::parse(name) {
                let (w, h) = match size.split_once(['x', 'X']) {
                    Some((w, h)) => (w, h),
                    None => (size, size),
                };
                let width = w.trim().parse().with_context(|| format!("layout size in {s:?}"))?;
                let height = h.trim().parse().with_context(|| format!("layout size in {s:?}"))?;
                return Ok(LayoutSource::Preset { preset, width, height });
            }
        }
        if LayoutPreset::parse(s).is_some() {
            bail!("layout preset {s:?} needs a size, e.g. {s}:60");
        }
        Ok(LayoutSource::File(PathBuf::from(s)))
    }

    pub fn build(&self, seed: u64) -> Result<Layout> {
        match self {
            LayoutSource::Preset { preset, width, height } => preset
                .generate(*width, *height, seed)
                .with_context(|| format!("generating {} {width}x{height}", preset.name())),
            LayoutSource::File(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading layout {}", path.display()))?;
                load_layout(&text).with_context(|| format!("layout file {}", path.display()))
            }
        }
    }
}

/// Defaults that differ between subcommands.
pub struct Defaults {
    pub layouts: &'static [&'static str],
    pub robots: &'static [usize],
    pub nav_mode: NavMode,
}

pub const RUN_DEFAULTS: Defaults = Defaults { layouts: &["A:60"], robots: &[10], nav_mode: NavMode::Astar };
pub const SCALE_DEFAULTS: Defaults =
    Defaults { layouts: &["open:300"], robots: &[10, 100, 1000], nav_mode: NavMode::Direct };
pub const TRAIN_DEFAULTS: Defaults =
    Defaults { layouts: &["small:20", "A:60"], robots: &[4, 10], nav_mode: NavMode::Astar };

/// An experiment with every default filled in.
#[derive(Debug, Clone, Serialize)]
pub struct Experiment {
    pub layouts: Vec<String>,
    pub layout_seed: u64,
    pub robots: Vec<usize>,
    pub tasks: usize,
    pub large_tasks: usize,
    pub allocators: Vec<AllocatorKind>,
    pub nav_mode: NavMode,
    pub seeds: Vec<u64>,
    pub checkpoint: Option<PathBuf>,
    /// Simulator settings shared by every cell; layout, robots, tasks and seed vary.
    pub sim: SimTemplate,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimTemplate {
    pub queue_len: usize,
    pub dt: f64,
    pub radius: f64,
    pub v_max: f64,
    pub nominal_speed: f64,
    pub arrival_threshold: f64,
    pub stall_ticks: u64,
    pub time_horizon: f64,
    pub obstacle_horizon: f64,
    pub sensing_radius: f64,
    pub max_neighbors: usize,
    pub lookahead: f64,
    pub parallel: bool,
}

impl Experiment {
    pub fn resolve(file: &ExperimentFile, defaults: &Defaults) -> Result<Self> {
        let layouts = file
            .layouts
            .clone()
            .unwrap_or_else(|| defaults.layouts.iter().map(|s| s.to_string()).collect());
        if layouts.is_empty() {
            bail!("layouts must not be empty");
        }
        for l in &layouts {
            LayoutSource::parse(l)?;
        }
        let robots = file.robots.clone().unwrap_or_else(|| defaults.robots.to_vec());
        if robots.is_empty() || robots.contains(&0) {
            bail!("robots must be a non-empty list of positive counts");
        }
        let allocators = match &file.allocators {
            Some(names) => names.iter().map(|n| n.parse::<AllocatorKind>().map_err(anyhow::Error::msg)).collect::<Result<Vec<_>>>()?,
            None => vec![AllocatorKind::Mpdm, AllocatorKind::Rbts, AllocatorKind::Random],
        };
        if allocators.is_empty() {
            bail!("allocators must not be empty");
        }
        if allocators.iter().collect::<HashSet<_>>().len() != allocators.len() {
            bail!("allocators must not repeat");
        }
        let seeds = file.seeds.clone().unwrap_or_else(|| vec![1]);
        if seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            bail!("seeds must be distinct");
        }
        let nav_mode = match &file.nav_mode {
            Some(s) => s.parse().map_err(anyhow::Error::msg)?,
            None => defaults.nav_mode,
        };

        let d = SimConfig::new(Arc::new(load_layout("P.\n.D\n").expect("placeholder layout")));
        let sim = SimTemplate {
            queue_len: file.queue_len.unwrap_or(d.queue_len),
            dt: file.dt.unwrap_or(d.dt),
            radius: file.radius.unwrap_or(d.radius),
            v_max: file.v_max.unwrap_or(d.v_max),
            nominal_speed: file.nominal_speed.unwrap_or(d.nominal_speed),
            arrival_threshold: file.arrival_threshold.unwrap_or(d.arrival_threshold),
            stall_ticks: file.stall_ticks.unwrap_or(d.stall_ticks),
            time_horizon: file.time_horizon.unwrap_or(d.time_horizon),
            obstacle_horizon: file.obstacle_horizon.unwrap_or(d.obstacle_horizon),
            sensing_radius: file.sensing_radius.unwrap_or(d.sensing_radius),
            max_neighbors: file.max_neighbors.unwrap_or(d.max_neighbors),
            lookahead: file.lookahead.unwrap_or(d.lookahead),
            parallel: file.parallel.unwrap_or(d.parallel),
        };

        let t = TrainConfig::default();
        let algorithm = match file.algorithm.as_deref() {
            None | Some("reinforce") => {
                if file.ppo_clip.is_some() || file.ppo_epochs.is_some() {
                    bail!("ppo_clip and ppo_epochs need algorithm = \"ppo\"");
                }
                Algorithm::Reinforce
            }
            Some("ppo") => Algorithm::Ppo { clip: file.ppo_clip.unwrap_or(0.2), epochs: file.ppo_epochs.unwrap_or(4) },
            Some(other) => bail!("unknown algorithm {other:?} (expected reinforce or ppo)"),
        };
        let reward_mode = match file.reward_mode.as_deref() {
            None | Some("measured") => RewardMode::Measured,
            Some("estimate") => RewardMode::Estimate,
            Some(other) => bail!("unknown reward_mode {other:?} (expected measured or estimate)"),
        };
        let train = TrainConfig {
            gamma: file.gamma.unwrap_or(t.gamma),
            updates: file.updates.unwrap_or(t.updates),
            envs: file.envs.unwrap_or(t.envs),
            batch_size: file.batch_size.unwrap_or(t.batch_size),
            learning_rate: file.learning_rate.unwrap_or(t.learning_rate),
            entropy_coef: file.entropy_coef.unwrap_or(t.entropy_coef),
            value_coef: file.value_coef.unwrap_or(t.value_coef),
            grad_clip: file.grad_clip.unwrap_or(t.grad_clip),
            embed_dim: file.embed_dim.unwrap_or(t.embed_dim),
            k_train: file.k_train.unwrap_or(t.k_train),
            algorithm,
            reward_mode,
            nominal_speed: sim.nominal_speed,
            seed: file.train_seed.unwrap_or(t.seed),
            eval_every: file.eval_every.unwrap_or(t.eval_every),
            validation_episodes: file.validation_episodes.unwrap_or(t.validation_episodes),
            validation_seed: t.validation_seed,
            normalize_advantages: file.normalize_advantages.unwrap_or(t.normalize_advantages),
            parallel: sim.parallel,
        };
        let exp = Experiment {
            layouts,
            layout_seed: file.layout_seed.unwrap_or(1),
            robots,
            tasks: file.tasks.unwrap_or(500),
            large_tasks: file.large_tasks.unwrap_or(5000),
            allocators,
            nav_mode,
            seeds,
            checkpoint: file.checkpoint.clone(),
            sim,
            train,
        };
        if exp.tasks == 0 || exp.large_tasks == 0 {
            bail!("tasks must be positive");
        }
        Ok(exp)
    }

    /// Simulator configuration for one cell; the seed is set per run.
    pub fn sim_config(&self, layout: Arc<Layout>, n_robots: usize, total_tasks: usize) -> Result<SimConfig> {
        let s = &self.sim;
        let mut c = SimConfig::new(layout);
        c.n_robots = n_robots;
        c.total_tasks = total_tasks;
        c.nav_mode = self.nav_mode;
        c.queue_len = s.queue_len;
        c.dt = s.dt;
        c.radius = s.radius;
        c.v_max = s.v_max;
        c.nominal_speed = s.nominal_speed;
        c.arrival_threshold = s.arrival_threshold;
        c.stall_ticks = s.stall_ticks;
        c.time_horizon = s.time_horizon;
        c.obstacle_horizon = s.obstacle_horizon;
        c.sensing_radius = s.sensing_radius;
        c.max_neighbors = s.max_neighbors;
        c.lookahead = s.lookahead;
        c.parallel = s.parallel;
        c.seed = self.seeds[0];
        c.validate()?;
        Ok(c)
    }

    pub fn build_layouts(&self) -> Result<Vec<Arc<Layout>>> {
        self.layouts
            .iter()
            .map(|l| Ok(Arc::new(LayoutSource::parse(l)?.build(self.layout_seed)?)))
            .collect()
    }
}
