//! Hierarchical learning over machine structure.
//!
//! One option per connected pair of machine states: option ⟨u, u_t⟩ starts
//! whenever the machine sits at `u`, picks primitive actions from its own
//! q-table, and terminates the moment the machine leaves `u` (or the episode
//! ends). Its private reward pays `rplus` for landing exactly on `u_t`,
//! `rminus` for landing anywhere else, and the machine's own output while
//! `u` is unchanged. A high-level SMDP policy learns which option to launch
//! at each (environment state, machine state).
//!
//! Every option of every task is updated on every environment step — the
//! counterfactual transition of its own source state decides whether its
//! update bootstraps. The high-level table is updated only when the actually
//! running option terminates, with the accumulated discounted reward since
//! the option began.
//!
//! Options are greedy about their own subgoal, so the composed policy can be
//! (and on the office map, is) globally suboptimal; the learner trades that
//! for fast early progress.

use std::sync::Arc;

use super::{argmax_first, epsilon_greedy, AlgosError, LearnerConfig, QTable2d};
use crate::envs::{GridAction, GridMap, GridState};
use crate::mdprm::{EvalPolicy, Experience, Learner, Mdprm, StepCtx, TrialRng};
use crate::rm::{RmStateId, SimpleRewardMachine, TruthAssignment};

/// An option, named by the machine-state pair it tries to traverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OptionId {
    pub source: RmStateId,
    pub target: RmStateId,
}

/// All connected (source, target) pairs of a machine, minus the pruned ones:
/// self-loops (no high-level policy needs to stand still in the machine) and
/// edges into `bad` terminals (failing on purpose is never useful).
///
/// Errors when pruning leaves some machine-reachable interior state with no
/// options at all, because the high-level policy would have nothing to pick
/// there.
pub fn hrm_option_set(
    rm: &SimpleRewardMachine,
    cfg: &LearnerConfig,
) -> Result<Vec<OptionId>, AlgosError> {
    let mut connected: Vec<OptionId> = Vec::new();
    for ui in 0..rm.n_interior() {
        let source = RmStateId::Interior(ui as u8);
        for sigma in TruthAssignment::enumerate(rm.props().len()) {
            let (target, _) = rm.step(source, sigma)?;
            let id = OptionId { source, target };
            if !connected.contains(&id) {
                connected.push(id);
            }
        }
    }
    connected.sort();

    let options: Vec<OptionId> = connected
        .iter()
        .copied()
        .filter(|o| !(cfg.prune_self_loops && o.source == o.target))
        .filter(|o| !(cfg.prune_bad && rm.is_bad(o.target)))
        .collect();

    // machine-graph reachability over the unpruned transitions
    let mut reachable = vec![false; rm.n_interior()];
    let mut stack = vec![rm.initial().interior_index().unwrap()];
    reachable[stack[0]] = true;
    while let Some(u) = stack.pop() {
        for o in connected.iter().filter(|o| o.source == RmStateId::Interior(u as u8)) {
            if let Some(t) = o.target.interior_index() {
                if !reachable[t] {
                    reachable[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    for (ui, reached) in reachable.iter().enumerate() {
        if *reached && !options.iter().any(|o| o.source == RmStateId::Interior(ui as u8)) {
            return Err(AlgosError::EmptyOptionSet {
                task: 0,
                state: rm.interior_name(ui).to_string(),
            });
        }
    }
    Ok(options)
}

/// The private reward an option assigns to one environment transition,
/// given the counterfactual move of its own source state.
pub fn hrm_option_reward(
    task: &Mdprm,
    opt: OptionId,
    sigma: TruthAssignment,
    s: GridState,
    a: GridAction,
    s_next: GridState,
    cfg: &LearnerConfig,
) -> (RmStateId, f64) {
    let (u_next, machine_reward) = task
        .machine_step(opt.source, sigma, s, a, s_next)
        .expect("validated machine steps every assignment");
    let r = if u_next == opt.source {
        machine_reward
    } else if u_next == opt.target {
        cfg.rplus
    } else {
        cfg.rminus
    };
    (u_next, r)
}

/// SMDP target for the high-level update: the discounted in-option return,
/// the final transition's reward, and (when the successor is not terminal)
/// the discounted best continuation.
#[inline]
pub(crate) fn smdp_target(
    r_acc: f64,
    gamma_pow: f64,
    gamma: f64,
    r: f64,
    continuation: Option<f64>,
) -> f64 {
    let base = r_acc + gamma_pow * r;
    match continuation {
        Some(best) => base + gamma_pow * gamma * best,
        None => base,
    }
}

struct TaskOptions {
    options: Vec<OptionId>,
    /// Option indices available per interior source state.
    by_source: Vec<Vec<usize>>,
    /// High-level values: (cell, option) — the option encodes its source.
    high: Vec<f64>,
    option_q: Vec<QTable2d>,
    n_options: usize,
}

impl TaskOptions {
    fn high_value(&self, cell: usize, opt: usize) -> f64 {
        self.high[cell * self.n_options + opt]
    }

    fn nudge_high(&mut self, cell: usize, opt: usize, alpha: f64, target: f64) {
        let i = cell * self.n_options + opt;
        self.high[i] += alpha * (target - self.high[i]);
    }

    fn best_continuation(&self, cell: usize, u: usize) -> f64 {
        self.by_source[u]
            .iter()
            .map(|&o| self.high_value(cell, o))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct ActiveOption {
    task: usize,
    opt: usize,
    start_cell: usize,
    r_acc: f64,
    gamma_pow: f64,
}

/// The hierarchical learner.
pub struct HrmLearner {
    map: Arc<GridMap>,
    tasks: Vec<TaskOptions>,
    cfg: LearnerConfig,
    active: Option<ActiveOption>,
}

impl HrmLearner {
    pub fn new(tasks: &[Mdprm], cfg: LearnerConfig) -> Result<HrmLearner, AlgosError> {
        let map = tasks[0].env().map.clone();
        let mut built = Vec::with_capacity(tasks.len());
        for (j, task) in tasks.iter().enumerate() {
            let rm = task
                .simple_machine()
                .expect("hierarchical learning runs on simple machines");
            let options = hrm_option_set(rm, &cfg).map_err(|e| match e {
                AlgosError::EmptyOptionSet { state, .. } => {
                    AlgosError::EmptyOptionSet { task: j, state }
                }
                other => other,
            })?;
            let mut by_source = vec![Vec::new(); task.n_interior()];
            for (i, o) in options.iter().enumerate() {
                by_source[o.source.interior_index().unwrap()].push(i);
            }
            let n_options = options.len();
            built.push(TaskOptions {
                option_q: (0..n_options).map(|_| QTable2d::new(map.n_cells(), cfg.q0)).collect(),
                high: vec![cfg.q0; map.n_cells() * n_options],
                options,
                by_source,
                n_options,
            });
        }
        Ok(HrmLearner { map, tasks: built, cfg, active: None })
    }

    pub fn options(&self, task: usize) -> &[OptionId] {
        &self.tasks[task].options
    }

    pub fn option_table(&self, task: usize, option: usize) -> &QTable2d {
        &self.tasks[task].option_q[option]
    }

    pub fn has_active_option(&self) -> bool {
        self.active.is_some()
    }

    /// Convenience for single-task tests: act, step the environment, learn.
    pub fn step_env(
        &mut self,
        tasks: &[Mdprm],
        active: usize,
        s: GridState,
        u: RmStateId,
        rng: &mut TrialRng,
    ) -> Experience {
        let a = self.act(active, s, u, rng);
        let e = tasks[active].mdprm_step(s, u, a).expect("validated task");
        let ctx = StepCtx {
            tasks,
            active,
            sigma_env: tasks[active].label_env(e.s, e.a, e.s_next),
            cap: false,
        };
        self.observe(&ctx, &e, rng);
        e
    }
}

impl Learner for HrmLearner {
    fn begin_episode(&mut self, _task: usize) {
        self.active = None;
    }

    fn act(&mut self, task: usize, s: GridState, u: RmStateId, rng: &mut TrialRng) -> GridAction {
        let cell = self.map.state_index(s);
        let ui = u.interior_index().expect("acting from an interior state");
        if self.active.is_none() {
            let t = &self.tasks[task];
            let slots = &t.by_source[ui];
            let values: Vec<f64> = slots.iter().map(|&o| t.high_value(cell, o)).collect();
            let pick = epsilon_greedy(&values, self.cfg.epsilon, rng);
            self.active = Some(ActiveOption {
                task,
                opt: slots[pick],
                start_cell: cell,
                r_acc: 0.0,
                gamma_pow: 1.0,
            });
        }
        let active = self.active.as_ref().unwrap();
        debug_assert_eq!(active.task, task, "options never survive an episode switch");
        let choice = epsilon_greedy(
            self.tasks[task].option_q[active.opt].action_values(cell),
            self.cfg.epsilon,
            rng,
        );
        GridAction::from_index(choice)
    }

    fn observe(&mut self, ctx: &StepCtx<'_>, e: &Experience, _rng: &mut TrialRng) {
        let s_cell = self.map.state_index(e.s);
        let next_cell = self.map.state_index(e.s_next);
        let a = e.a.index();

        // every option of every task learns from this step
        for (j, task) in ctx.tasks.iter().enumerate() {
            let sigma = task.project(ctx.sigma_env);
            let t = &mut self.tasks[j];
            for oi in 0..t.options.len() {
                let opt = t.options[oi];
                let (u_next, r) =
                    hrm_option_reward(task, opt, sigma, e.s, e.a, e.s_next, &self.cfg);
                let target = if u_next == opt.source {
                    r + self.cfg.gamma * t.option_q[oi].max_value(next_cell)
                } else {
                    r
                };
                t.option_q[oi].nudge(s_cell, a, self.cfg.alpha, target);
            }
        }

        // the running option terminates when its machine state changes or
        // the episode ends; only then does the high-level table move
        let machine_moved = e.u_next != e.u;
        if machine_moved || e.done {
            let active = self.active.take().expect("an option is running inside an episode");
            let t = &mut self.tasks[active.task];
            let continuation = match e.u_next.interior_index() {
                Some(un) if !e.u_next.is_terminal() => Some(t.best_continuation(next_cell, un)),
                _ => None,
            };
            let target = smdp_target(
                active.r_acc,
                active.gamma_pow,
                self.cfg.gamma,
                e.r,
                continuation,
            );
            t.nudge_high(active.start_cell, active.opt, self.cfg.alpha, target);
        } else if let Some(active) = self.active.as_mut() {
            active.r_acc += active.gamma_pow * e.r;
            active.gamma_pow *= self.cfg.gamma;
        }
    }

    fn eval_policy(&self) -> Box<dyn EvalPolicy + '_> {
        Box::new(HrmGreedy { learner: self, current: None })
    }
}

struct HrmGreedy<'a> {
    learner: &'a HrmLearner,
    current: Option<(usize, RmStateId, usize)>,
}

impl EvalPolicy for HrmGreedy<'_> {
    fn reset(&mut self) {
        self.current = None;
    }

    fn act(&mut self, task: usize, s: GridState, u: RmStateId) -> GridAction {
        let cell = self.learner.map.state_index(s);
        let ui = u.interior_index().expect("evaluating from an interior state");
        let stale = match self.current {
            Some((t, cu, _)) => t != task || cu != u,
            None => true,
        };
        if stale {
            let t = &self.learner.tasks[task];
            let slots = &t.by_source[ui];
            let values: Vec<f64> = slots.iter().map(|&o| t.high_value(cell, o)).collect();
            self.current = Some((task, u, slots[argmax_first(&values)]));
        }
        let (_, _, opt) = self.current.unwrap();
        GridAction::from_index(argmax_first(
            self.learner.tasks[task].option_q[opt].action_values(cell),
        ))
    }
}
