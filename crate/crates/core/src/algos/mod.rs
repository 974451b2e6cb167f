//! The four tabular learners.
//!
//! All of them run over the same multitask loop and share one exploration
//! rule; they differ in what they learn from a single environment step:
//!
//! - `Ql` — q-learning on the cross-product state (env state, machine
//!   state); only the experienced tuple is updated.
//! - `Crm` — the same table, but every step is relabelled once per machine
//!   state of every task and each synthetic tuple is fed to the update rule.
//! - `Qrm` — one q-table per machine state, all updated from the shared
//!   step; in the tabular case this is the same algorithm as `Crm` down to
//!   the bit pattern of the tables, which the tests pin.
//! - `Hrm` — an option per connected machine-state pair plus a high-level
//!   SMDP policy choosing among them; see [`hrm`].

pub mod hrm;

use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::envs::{GridAction, GridMap, GridState};
use crate::mdprm::{EvalPolicy, Experience, Learner, Mdprm, StepCtx, TrialRng};
use crate::rm::{RmError, RmStateId};

pub use hrm::{hrm_option_reward, hrm_option_set, HrmLearner, OptionId};

use rand::Rng;

#[derive(Debug, Error)]
pub enum AlgosError {
    #[error("pruning leaves reachable state `{state}` of task {task} with no options")]
    EmptyOptionSet { task: usize, state: String },
    #[error("{0}")]
    Machine(#[from] RmError),
}

/// Hyper-parameters shared by every learner.
#[derive(Clone, Copy, Debug)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// Optimistic initial q-value. 1.0 upper-bounds the discounted return of
    /// every shipped task (single terminal reward of 1).
    pub q0: f64,
    /// Option bonus for reaching the option's target machine state.
    pub rplus: f64,
    /// Option penalty for landing in any other machine state.
    pub rminus: f64,
    pub prune_self_loops: bool,
    pub prune_bad: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            alpha: 0.5,
            epsilon: 0.1,
            gamma: 0.9,
            q0: 1.0,
            rplus: 1.0,
            rminus: -1.0,
            prune_self_loops: true,
            prune_bad: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgoKind {
    Ql,
    Crm,
    Qrm,
    Hrm,
}

impl FromStr for AlgoKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ql" => Ok(AlgoKind::Ql),
            "crm" => Ok(AlgoKind::Crm),
            "qrm" => Ok(AlgoKind::Qrm),
            "hrm" => Ok(AlgoKind::Hrm),
            other => Err(format!("unknown algorithm `{other}` (ql|crm|qrm|hrm)")),
        }
    }
}

impl std::fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AlgoKind::Ql => "ql",
            AlgoKind::Crm => "crm",
            AlgoKind::Qrm => "qrm",
            AlgoKind::Hrm => "hrm",
        };
        write!(f, "{s}")
    }
}

/// Dense action-value table keyed by (environment cell, machine state,
/// action). Unwritten entries read as the optimistic initial value.
#[derive(Clone, Debug)]
pub struct QTable {
    n_interior: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_cells: usize, n_interior: usize, q0: f64) -> QTable {
        QTable { n_interior, values: vec![q0; n_cells * n_interior.max(1) * 4] }
    }

    #[inline]
    fn base(&self, cell: usize, u: usize) -> usize {
        (cell * self.n_interior + u) * 4
    }

    #[inline]
    pub fn action_values(&self, cell: usize, u: usize) -> &[f64] {
        let b = self.base(cell, u);
        &self.values[b..b + 4]
    }

    #[inline]
    pub fn get(&self, cell: usize, u: usize, a: usize) -> f64 {
        self.values[self.base(cell, u) + a]
    }

    #[inline]
    pub fn nudge(&mut self, cell: usize, u: usize, a: usize, alpha: f64, target: f64) {
        let i = self.base(cell, u) + a;
        self.values[i] += alpha * (target - self.values[i]);
    }

    #[inline]
    pub fn max_value(&self, cell: usize, u: usize) -> f64 {
        max4(self.action_values(cell, u))
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }
}

/// Per-machine-state table keyed by (environment cell, action); the pieces
/// `Qrm` learns, and the option policies of `Hrm`.
#[derive(Clone, Debug)]
pub struct QTable2d {
    values: Vec<f64>,
}

impl QTable2d {
    pub fn new(n_cells: usize, q0: f64) -> QTable2d {
        QTable2d { values: vec![q0; n_cells * 4] }
    }

    #[inline]
    pub fn action_values(&self, cell: usize) -> &[f64] {
        &self.values[cell * 4..cell * 4 + 4]
    }

    #[inline]
    pub fn nudge(&mut self, cell: usize, a: usize, alpha: f64, target: f64) {
        let i = cell * 4 + a;
        self.values[i] += alpha * (target - self.values[i]);
    }

    #[inline]
    pub fn max_value(&self, cell: usize) -> f64 {
        max4(self.action_values(cell))
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }
}

#[inline]
fn max4(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Indices of all maximal entries, compared exactly. The caller breaks ties.
pub fn argmax_set(values: &[f64]) -> Vec<usize> {
    let best = max4(values);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .map(|(i, _)| i)
        .collect()
}

/// First maximal index; the deterministic tie-break used for evaluation.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy selection over a value slice: a uniformly random index
/// with probability `epsilon`, otherwise the argmax with ties broken
/// uniformly at random. Random tie-breaking avoids the systematic bias of
/// always taking the first index; it is seeded, hence reproducible.
pub fn epsilon_greedy(values: &[f64], epsilon: f64, rng: &mut TrialRng) -> usize {
    debug_assert!(!values.is_empty());
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..values.len());
    }
    let ties = argmax_set(values);
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// One q-learning update from an experience tuple. Transitions into a
/// machine terminal use the plain reward as the target; everything else —
/// including step-cap truncations — bootstraps from the successor.
pub fn ql_update(q: &mut QTable, map: &GridMap, e: &Experience, cfg: &LearnerConfig) {
    let s = map.state_index(e.s);
    let u = e.u.interior_index().expect("actions are only taken from interior states");
    let target = match e.u_next.interior_index() {
        None => e.r,
        Some(u_next) => e.r + cfg.gamma * q.max_value(map.state_index(e.s_next), u_next),
    };
    q.nudge(s, u, e.a.index(), cfg.alpha, target);
}

/// The counterfactual experience set of one environment step: the step
/// relabelled once per interior machine state, in ascending state order.
/// Each tuple carries the reward and successor that machine state would
/// have produced.
pub fn crm_experiences(
    task: &Mdprm,
    s: GridState,
    a: GridAction,
    s_next: GridState,
) -> Vec<Experience> {
    let sigma = task.project(task.label_env(s, a, s_next));
    let mut out = Vec::with_capacity(task.n_interior());
    for ui in 0..task.n_interior() {
        let u = RmStateId::Interior(ui as u8);
        let (u_next, r) = task
            .machine_step(u, sigma, s, a, s_next)
            .expect("validated machine steps every assignment");
        out.push(Experience { s, u, a, r, s_next, u_next, done: u_next.is_terminal() });
    }
    out
}

/// Applies [`ql_update`] to every tuple of the counterfactual set. The fixed
/// ascending order makes the table bit-identical to the per-state tables of
/// `Qrm` under the same stream.
pub fn crm_update(
    q: &mut QTable,
    map: &GridMap,
    task: &Mdprm,
    s: GridState,
    a: GridAction,
    s_next: GridState,
    cfg: &LearnerConfig,
) {
    for e in crm_experiences(task, s, a, s_next) {
        ql_update(q, map, &e, cfg);
    }
}

/// The per-machine-state formulation of the same update: every state's
/// table learns from the shared transition, bootstrapping from the
/// successor state's table.
pub fn qrm_update(
    tables: &mut [QTable2d],
    map: &GridMap,
    task: &Mdprm,
    s: GridState,
    a: GridAction,
    s_next: GridState,
    cfg: &LearnerConfig,
) {
    let sigma = task.project(task.label_env(s, a, s_next));
    let s_idx = map.state_index(s);
    let next_idx = map.state_index(s_next);
    for ui in 0..tables.len() {
        let u = RmStateId::Interior(ui as u8);
        let (u_next, r) = task
            .machine_step(u, sigma, s, a, s_next)
            .expect("validated machine steps every assignment");
        let target = match u_next.interior_index() {
            None => r,
            Some(un) => r + cfg.gamma * tables[un].max_value(next_idx),
        };
        tables[ui].nudge(s_idx, a.index(), cfg.alpha, target);
    }
}

/// Cross-product q-learning: the baseline that ignores machine structure.
pub struct QlLearner {
    map: Arc<GridMap>,
    tables: Vec<QTable>,
    cfg: LearnerConfig,
}

impl QlLearner {
    pub fn new(tasks: &[Mdprm], cfg: LearnerConfig) -> QlLearner {
        let map = tasks[0].env().map.clone();
        let tables = tasks
            .iter()
            .map(|t| QTable::new(map.n_cells(), t.n_interior(), cfg.q0))
            .collect();
        QlLearner { map, tables, cfg }
    }

    pub fn table(&self, task: usize) -> &QTable {
        &self.tables[task]
    }
}

impl Learner for QlLearner {
    fn begin_episode(&mut self, _task: usize) {}

    fn act(&mut self, task: usize, s: GridState, u: RmStateId, rng: &mut TrialRng) -> GridAction {
        let cell = self.map.state_index(s);
        let ui = u.interior_index().expect("acting from an interior state");
        let choice = epsilon_greedy(
            self.tables[task].action_values(cell, ui),
            self.cfg.epsilon,
            rng,
        );
        GridAction::from_index(choice)
    }

    fn observe(&mut self, ctx: &StepCtx<'_>, e: &Experience, _rng: &mut TrialRng) {
        ql_update(&mut self.tables[ctx.active], &self.map, e, &self.cfg);
    }

    fn eval_policy(&self) -> Box<dyn EvalPolicy + '_> {
        Box::new(TableGreedy { map: &self.map, tables: &self.tables })
    }
}

/// Counterfactual relabelling on a single cross-product table per task.
/// Every environment step updates every machine state of every task.
pub struct CrmLearner {
    map: Arc<GridMap>,
    tables: Vec<QTable>,
    cfg: LearnerConfig,
}

impl CrmLearner {
    pub fn new(tasks: &[Mdprm], cfg: LearnerConfig) -> CrmLearner {
        let map = tasks[0].env().map.clone();
        let tables = tasks
            .iter()
            .map(|t| QTable::new(map.n_cells(), t.n_interior(), cfg.q0))
            .collect();
        CrmLearner { map, tables, cfg }
    }

    pub fn table(&self, task: usize) -> &QTable {
        &self.tables[task]
    }
}

impl Learner for CrmLearner {
    fn begin_episode(&mut self, _task: usize) {}

    fn act(&mut self, task: usize, s: GridState, u: RmStateId, rng: &mut TrialRng) -> GridAction {
        let cell = self.map.state_index(s);
        let ui = u.interior_index().expect("acting from an interior state");
        let choice = epsilon_greedy(
            self.tables[task].action_values(cell, ui),
            self.cfg.epsilon,
            rng,
        );
        GridAction::from_index(choice)
    }

    fn observe(&mut self, ctx: &StepCtx<'_>, e: &Experience, _rng: &mut TrialRng) {
        for (j, task) in ctx.tasks.iter().enumerate() {
            crm_update(&mut self.tables[j], &self.map, task, e.s, e.a, e.s_next, &self.cfg);
        }
    }

    fn eval_policy(&self) -> Box<dyn EvalPolicy + '_> {
        Box::new(TableGreedy { map: &self.map, tables: &self.tables })
    }
}

/// Per-machine-state q-functions over shared experience.
pub struct QrmLearner {
    map: Arc<GridMap>,
    tables: Vec<Vec<QTable2d>>,
    cfg: LearnerConfig,
}

impl QrmLearner {
    pub fn new(tasks: &[Mdprm], cfg: LearnerConfig) -> QrmLearner {
        let map = tasks[0].env().map.clone();
        let tables = tasks
            .iter()
            .map(|t| (0..t.n_interior()).map(|_| QTable2d::new(map.n_cells(), cfg.q0)).collect())
            .collect();
        QrmLearner { map, tables, cfg }
    }

    /// Concatenates the per-state tables into the layout of [`QTable`],
    /// for direct comparison against a `Crm` table.
    pub fn flattened(&self, task: usize) -> Vec<f64> {
        let n_interior = self.tables[task].len();
        let n_cells = self.map.n_cells();
        let mut out = Vec::with_capacity(n_cells * n_interior * 4);
        for cell in 0..n_cells {
            for u in 0..n_interior {
                out.extend_from_slice(self.tables[task][u].action_values(cell));
            }
        }
        out
    }
}

impl Learner for QrmLearner {
    fn begin_episode(&mut self, _task: usize) {}

    fn act(&mut self, task: usize, s: GridState, u: RmStateId, rng: &mut TrialRng) -> GridAction {
        let cell = self.map.state_index(s);
        let ui = u.interior_index().expect("acting from an interior state");
        let choice = epsilon_greedy(
            self.tables[task][ui].action_values(cell),
            self.cfg.epsilon,
            rng,
        );
        GridAction::from_index(choice)
    }

    fn observe(&mut self, ctx: &StepCtx<'_>, e: &Experience, _rng: &mut TrialRng) {
        for (j, task) in ctx.tasks.iter().enumerate() {
            qrm_update(&mut self.tables[j], &self.map, task, e.s, e.a, e.s_next, &self.cfg);
        }
    }

    fn eval_policy(&self) -> Box<dyn EvalPolicy + '_> {
        Box::new(QrmGreedy { map: &self.map, tables: &self.tables })
    }
}

struct TableGreedy<'a> {
    map: &'a GridMap,
    tables: &'a [QTable],
}

impl EvalPolicy for TableGreedy<'_> {
    fn reset(&mut self) {}

    fn act(&mut self, task: usize, s: GridState, u: RmStateId) -> GridAction {
        let cell = self.map.state_index(s);
        let ui = u.interior_index().expect("evaluating from an interior state");
        GridAction::from_index(argmax_first(self.tables[task].action_values(cell, ui)))
    }
}

struct QrmGreedy<'a> {
    map: &'a GridMap,
    tables: &'a [Vec<QTable2d>],
}

impl EvalPolicy for QrmGreedy<'_> {
    fn reset(&mut self) {}

    fn act(&mut self, task: usize, s: GridState, u: RmStateId) -> GridAction {
        let cell = self.map.state_index(s);
        let ui = u.interior_index().expect("evaluating from an interior state");
        GridAction::from_index(argmax_first(self.tables[task][ui].action_values(cell)))
    }
}

/// Learner factory used by the experiment engine and the CLI.
pub fn build_learner(
    kind: AlgoKind,
    tasks: &[Mdprm],
    cfg: LearnerConfig,
) -> Result<Box<dyn Learner>, AlgosError> {
    Ok(match kind {
        AlgoKind::Ql => Box::new(QlLearner::new(tasks, cfg)),
        AlgoKind::Crm => Box::new(CrmLearner::new(tasks, cfg)),
        AlgoKind::Qrm => Box::new(QrmLearner::new(tasks, cfg)),
        AlgoKind::Hrm => Box::new(HrmLearner::new(tasks, cfg)?),
    })
}
