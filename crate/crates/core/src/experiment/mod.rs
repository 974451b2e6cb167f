//! Seeded multi-trial experiment engine.
//!
//! A run trains `trials` independent learners on a round-robin task set and
//! reports two families of learning curves:
//!
//! - the *online* curve: windowed average reward per environment step, the
//!   reward actually collected while training (exploration included),
//!   normalized so an optimal policy scores 1;
//! - the *greedy* curve: the frozen policy evaluated without exploration at
//!   fixed checkpoints, same normalization. Convergence claims are read off
//!   this one, since the online curve carries the exploration tax forever.
//!
//! Normalization divides by the optimal average reward per step of one
//! round-robin cycle, computed exactly by value iteration per map. When
//! shaping is on, learners train on the shaped machines but both curves are
//! measured against the original task rewards.
//!
//! Determinism: (config, seed) fixes every byte of output. Trial `i` draws
//! from a ChaCha8 stream seeded with `stream_seed(seed, TRIAL_DOMAIN, i)`;
//! craft map `j` from `stream_seed(seed, MAP_DOMAIN, j)`. Trials run on a
//! worker pool and are joined in trial order, so scheduling cannot leak into
//! the results.

mod csv;

use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rayon::prelude::*;
use thiserror::Error;

use crate::algos::{build_learner, AlgoKind, AlgosError, LearnerConfig};
use crate::envs::{
    generate_craft_map, load_map, CraftGenParams, EnvId, GenError, GridEnv, Legend, MapError,
    TaskSpec,
};
use crate::mdprm::{evaluate_greedy, AssemblyError, Mdprm, MultitaskRun, TrialRng};
use crate::oracle::{optimal_avg_reward, OracleError};
use crate::shaping::{shaped, ShapingError};

pub use csv::emit_csv;

/// SplitMix64 finalizer: the pinned mixer behind all seed derivation.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const TRIAL_DOMAIN: u64 = 0x7472_6961_6c73; // "trials"
pub const MAP_DOMAIN: u64 = 0x6d61_7073; // "maps"

/// Derives an independent stream seed from (base, domain, index).
pub fn stream_seed(base: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ domain).wrapping_add(index))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TaskSelection {
    All,
    /// 1-based task numbers, in the order given.
    Subset(Vec<usize>),
}

impl std::fmt::Display for TaskSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskSelection::All => write!(f, "all"),
            TaskSelection::Subset(ns) => {
                let parts: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

/// Everything a run needs. Field for field this is the CLI surface.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub env: EnvId,
    /// Explicit map file; otherwise the office default or generated craft
    /// maps.
    pub map_path: Option<PathBuf>,
    pub tasks: TaskSelection,
    pub algo: AlgoKind,
    /// Train on potential-shaped machines.
    pub rs: bool,
    pub trials: usize,
    pub total_steps: usize,
    pub seed: u64,
    /// Online metric sampling period (env steps).
    pub eval_every: usize,
    /// Online metric window (env steps).
    pub window: usize,
    pub max_episode_steps: usize,
    /// Greedy evaluation period (env steps).
    pub greedy_every: usize,
    /// Number of generated craft maps; trials cycle over them.
    pub craft_maps: usize,
    pub learner: LearnerConfig,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(env: EnvId, algo: AlgoKind) -> RunConfig {
        RunConfig {
            env,
            map_path: None,
            tasks: TaskSelection::All,
            algo,
            rs: false,
            trials: 30,
            total_steps: 200_000,
            seed: 1,
            eval_every: 100,
            window: 1000,
            max_episode_steps: 1000,
            greedy_every: 2000,
            craft_maps: 10,
            learner: LearnerConfig::default(),
            out: None,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.total_steps == 0 {
            return bad("total steps must be positive".into());
        }
        if self.window > self.total_steps {
            return bad(format!(
                "window {} exceeds total steps {}",
                self.window, self.total_steps
            ));
        }
        for (name, period) in [("eval-every", self.eval_every), ("greedy-every", self.greedy_every)]
        {
            if period == 0 || self.total_steps % period != 0 {
                return bad(format!(
                    "{name} ({period}) must divide the total steps ({}) evenly",
                    self.total_steps
                ));
            }
        }
        if self.max_episode_steps == 0 {
            return bad("max episode steps must be positive".into());
        }
        if self.env == EnvId::Craft && self.map_path.is_none() && self.craft_maps == 0 {
            return bad("craft runs need at least one generated map".into());
        }
        let l = &self.learner;
        if !(l.alpha > 0.0 && l.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", l.alpha));
        }
        if !(l.epsilon > 0.0 && l.epsilon <= 1.0) {
            return bad(format!("epsilon {} outside (0, 1]", l.epsilon));
        }
        if !(l.gamma > 0.0 && l.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", l.gamma));
        }
        Ok(())
    }
}

/// One point of a percentile curve over trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Map(#[from] MapError),
    #[error("{0}")]
    Gen(#[from] GenError),
    #[error("{0}")]
    Assembly(#[from] AssemblyError),
    #[error("{0}")]
    Algos(#[from] AlgosError),
    #[error("{0}")]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Shaping(#[from] ShapingError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// One world a trial can run in: training tasks (possibly shaped), the
/// original tasks for measurement, and the normalization constant.
struct World {
    train: Vec<Mdprm>,
    eval: Vec<Mdprm>,
    aggregate: f64,
}

pub struct ExperimentOutput {
    /// Percentiles of the online windowed metric, on the `eval_every` grid.
    pub online: Vec<CurvePoint>,
    /// Percentiles of the greedy checkpoint evaluations, on the
    /// `greedy_every` grid.
    pub greedy: Vec<CurvePoint>,
    /// Raw per-trial online series.
    pub online_series: Vec<Vec<f64>>,
    /// Raw per-trial greedy series.
    pub greedy_series: Vec<Vec<f64>>,
    /// Final greedy evaluation per trial.
    pub final_greedy: Vec<f64>,
    /// Optimal average reward per step of each world (one per map).
    pub oracle_aggregates: Vec<f64>,
}

pub fn selected_tasks(cfg: &RunConfig) -> Result<Vec<TaskSpec>, HarnessError> {
    let all = match cfg.env {
        EnvId::Office => crate::envs::office_tasks(),
        EnvId::Craft => crate::envs::craft_tasks(),
    };
    match &cfg.tasks {
        TaskSelection::All => Ok(all),
        TaskSelection::Subset(numbers) => {
            if numbers.is_empty() {
                return Err(HarnessError::Config("task selection is empty".into()));
            }
            numbers
                .iter()
                .map(|&n| {
                    all.get(n.checked_sub(1).ok_or_else(|| {
                        HarnessError::Config("task numbers are 1-based".into())
                    })?)
                    .cloned()
                    .ok_or_else(|| {
                        HarnessError::Config(format!(
                            "task {n} does not exist in the {} world",
                            cfg.env
                        ))
                    })
                })
                .collect()
        }
    }
}

fn build_worlds(cfg: &RunConfig) -> Result<Vec<World>, HarnessError> {
    let tasks = selected_tasks(cfg)?;
    let envs: Vec<GridEnv> = if let Some(path) = &cfg.map_path {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        let map = load_map(&text, &Legend::for_env(cfg.env))?;
        vec![GridEnv::new(Arc::new(map))]
    } else {
        match cfg.env {
            EnvId::Office => vec![GridEnv::office_default()],
            EnvId::Craft => (0..cfg.craft_maps)
                .map(|j| {
                    let seed = stream_seed(cfg.seed, MAP_DOMAIN, j as u64);
                    let map = generate_craft_map(seed, &CraftGenParams::default())?;
                    Ok(GridEnv::new(Arc::new(map)))
                })
                .collect::<Result<_, HarnessError>>()?,
        }
    };

    let mut worlds = Vec::with_capacity(envs.len());
    for env in envs {
        let mut train = Vec::with_capacity(tasks.len());
        let mut eval = Vec::with_capacity(tasks.len());
        for task in &tasks {
            let original = Mdprm::from_task(task, env.clone(), cfg.learner.gamma)?;
            let trained = if cfg.rs {
                let shaped_rm = shaped(&task.rm, cfg.learner.gamma, 1e-12)?;
                Mdprm::new_simple(env.clone(), Arc::new(shaped_rm), cfg.learner.gamma)?
            } else {
                original.clone()
            };
            train.push(trained);
            eval.push(original);
        }
        let aggregate = optimal_avg_reward(&eval, cfg.max_episode_steps)?.aggregate;
        worlds.push(World { train, eval, aggregate });
    }
    Ok(worlds)
}

struct TrialResult {
    online: Vec<f64>,
    greedy: Vec<f64>,
}

fn run_trial(cfg: &RunConfig, world: &World, trial: usize) -> Result<TrialResult, HarnessError> {
    let mut rng = TrialRng::seed_from_u64(stream_seed(cfg.seed, TRIAL_DOMAIN, trial as u64));
    let mut learner = build_learner(cfg.algo, &world.train, cfg.learner)?;
    let mut run = MultitaskRun::new(&world.train, cfg.max_episode_steps);

    let mut rewards = Vec::with_capacity(cfg.total_steps);
    let mut greedy_points = Vec::with_capacity(cfg.total_steps / cfg.greedy_every);
    let measure_original = cfg.rs;
    let checkpoints = cfg.total_steps / cfg.greedy_every;
    for _ in 0..checkpoints {
        run.advance(learner.as_mut(), &mut rng, cfg.greedy_every, |task, e| {
            let r = if measure_original {
                // learners see shaped rewards; curves report the real ones
                world.eval[task].mdprm_step(e.s, e.u, e.a).expect("validated task").r
            } else {
                e.r
            };
            rewards.push(r);
        });
        let mut policy = learner.eval_policy();
        let (total_r, total_len, _) =
            evaluate_greedy(&world.eval, policy.as_mut(), cfg.max_episode_steps);
        greedy_points.push(total_r / total_len as f64 / world.aggregate);
    }

    // windowed online metric on the eval_every grid
    let mut prefix = Vec::with_capacity(rewards.len() + 1);
    prefix.push(0.0f64);
    for r in &rewards {
        prefix.push(prefix.last().unwrap() + r);
    }
    let online = (1..=cfg.total_steps / cfg.eval_every)
        .map(|j| {
            let k = j * cfg.eval_every;
            let lo = k.saturating_sub(cfg.window);
            (prefix[k] - prefix[lo]) / cfg.window as f64 / world.aggregate
        })
        .collect();

    Ok(TrialResult { online, greedy: greedy_points })
}

/// Runs the full experiment: every trial, percentile aggregation, and (when
/// configured) the CSV artifact. Trials execute in parallel; outputs are
/// identical regardless of scheduling.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let worlds = build_worlds(cfg)?;

    let results: Vec<Result<TrialResult, HarnessError>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, &worlds[i % worlds.len()], i))
        .collect();
    let mut online_series = Vec::with_capacity(cfg.trials);
    let mut greedy_series = Vec::with_capacity(cfg.trials);
    for r in results {
        let r = r?;
        online_series.push(r.online);
        greedy_series.push(r.greedy);
    }

    let online = aggregate_on_grid(&online_series, cfg.eval_every);
    let greedy = aggregate_on_grid(&greedy_series, cfg.greedy_every);
    let final_greedy = greedy_series.iter().map(|s| *s.last().unwrap()).collect();
    let output = ExperimentOutput {
        online,
        greedy,
        online_series,
        greedy_series,
        final_greedy,
        oracle_aggregates: worlds.iter().map(|w| w.aggregate).collect(),
    };

    if let Some(path) = &cfg.out {
        emit_csv(path, cfg, &output.online)
            .map_err(|source| HarnessError::Io { path: path.clone(), source })?;
    }
    Ok(output)
}

/// Nearest-rank percentile (exclusive convention): the value at rank
/// `ceil(p/100 · (n+1))`, clamped into the sample.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((pct / 100.0) * (n + 1) as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Per-index percentiles across equal-length trial series.
pub fn aggregate(series: &[Vec<f64>]) -> Vec<(f64, f64, f64)> {
    if series.is_empty() {
        return Vec::new();
    }
    let len = series[0].len();
    assert!(series.iter().all(|s| s.len() == len), "trial series must align");
    (0..len)
        .map(|i| {
            let mut column: Vec<f64> = series.iter().map(|s| s[i]).collect();
            column.sort_by(f64::total_cmp);
            (
                nearest_rank(&column, 25.0),
                nearest_rank(&column, 50.0),
                nearest_rank(&column, 75.0),
            )
        })
        .collect()
}

fn aggregate_on_grid(series: &[Vec<f64>], period: usize) -> Vec<CurvePoint> {
    aggregate(series)
        .into_iter()
        .enumerate()
        .map(|(i, (p25, p50, p75))| CurvePoint { step: (i + 1) * period, p25, p50, p75 })
        .collect()
}

/// First step at which a curve's median reaches `threshold`, if ever.
pub fn first_reach(points: &[CurvePoint], threshold: f64) -> Option<usize> {
    points.iter().find(|p| p.p50 >= threshold).map(|p| p.step)
}
