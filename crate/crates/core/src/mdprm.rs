//! Assembly of environment + labelling + reward machine, episode running,
//! the explicit cross-product MDP, and the multitask training loop.
//!
//! An [`Mdprm`] owns everything needed to run episodes of one task. The
//! machine is validated at assembly and evaluator ids of general machines
//! are resolved against the environment registry, so nothing fails once an
//! episode is under way. The non-Markovian reward problem is equivalent to
//! an ordinary MDP over pairs (environment state, machine state);
//! [`build_cross_product`] materializes that MDP explicitly, which is what
//! the exact solvers in [`crate::oracle`] consume.

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::envs::{env_step, EnvId, GridAction, GridEnv, GridState, TaskSpec};
use crate::rm::{
    Prop, RewardEvaluatorId, RewardMachine, RmError, RmStateId, SimpleRewardMachine,
    TruthAssignment,
};

/// The pinned PRNG for everything stochastic in a trial. ChaCha8 is
/// algorithm-stable across releases, so seeded runs stay bit-reproducible.
pub type TrialRng = ChaCha8Rng;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("machine fails validation:\n{0}")]
    InvalidMachine(crate::rm::ValidationReport),
    #[error("{0}")]
    Machine(#[from] RmError),
    #[error("machine proposition `{0}` does not exist in the environment alphabet")]
    UnknownMachineProp(String),
    #[error("no evaluator named `{0}` is registered")]
    UnknownEvaluator(String),
    #[error("general machine has no backing simple machine for its edge-reward evaluator")]
    MissingSimpleSource,
    #[error("machine was built for labelling `{expected}` but the environment uses `{actual}`")]
    LabellingMismatch { expected: String, actual: String },
    #[error("gamma must lie in (0, 1], got {0}")]
    BadGamma(f64),
}

/// An environment reward function: called on every transition of a general
/// machine whose state names it.
pub type EnvEvaluator = Arc<dyn Fn(&GridEnv, GridState, GridAction, GridState) -> f64 + Send + Sync>;

/// Named environment-reward evaluators that general machines may reference.
#[derive(Clone, Default)]
pub struct EvaluatorRegistry {
    entries: HashMap<String, EnvEvaluator>,
}

impl EvaluatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        f: impl Fn(&GridEnv, GridState, GridAction, GridState) -> f64 + Send + Sync + 'static,
    ) {
        self.entries.insert(name.into(), Arc::new(f));
    }

    fn get(&self, name: &str) -> Option<&EnvEvaluator> {
        self.entries.get(name)
    }
}

#[derive(Clone)]
enum ResolvedEvaluator {
    Constant(f64),
    SimpleEdge(Arc<SimpleRewardMachine>),
    Env(EnvEvaluator),
}

/// A general machine with every evaluator resolved; ready to run.
#[derive(Clone)]
pub struct ResolvedRm {
    rm: Arc<RewardMachine>,
    evaluators: Vec<ResolvedEvaluator>,
}

impl ResolvedRm {
    pub fn resolve(
        rm: Arc<RewardMachine>,
        registry: &EvaluatorRegistry,
    ) -> Result<ResolvedRm, AssemblyError> {
        let mut evaluators = Vec::with_capacity(rm.n_interior());
        for u in 0..rm.n_interior() {
            let resolved = match rm.evaluator(u) {
                RewardEvaluatorId::Constant(c) => ResolvedEvaluator::Constant(*c),
                RewardEvaluatorId::SimpleEdgeReward => ResolvedEvaluator::SimpleEdge(
                    rm.simple_source().ok_or(AssemblyError::MissingSimpleSource)?.clone(),
                ),
                RewardEvaluatorId::Named(name) => ResolvedEvaluator::Env(
                    registry
                        .get(name)
                        .ok_or_else(|| AssemblyError::UnknownEvaluator(name.clone()))?
                        .clone(),
                ),
            };
            evaluators.push(resolved);
        }
        Ok(ResolvedRm { rm, evaluators })
    }

    pub fn machine(&self) -> &RewardMachine {
        &self.rm
    }

    /// One step of the general machine: the reward comes from the source
    /// state's evaluator, the successor from the guard table.
    pub fn step(
        &self,
        env: &GridEnv,
        u: RmStateId,
        sigma: TruthAssignment,
        s: GridState,
        a: GridAction,
        s_next: GridState,
    ) -> Result<(RmStateId, f64), RmError> {
        let ui = u.interior_index().ok_or_else(|| {
            RmError::SteppedTerminal(self.rm.state_name(u).to_string())
        })?;
        let next = self.rm.transition(u, sigma)?;
        let reward = match &self.evaluators[ui] {
            ResolvedEvaluator::Constant(c) => *c,
            ResolvedEvaluator::SimpleEdge(simple) => simple.step(u, sigma)?.1,
            ResolvedEvaluator::Env(f) => f(env, s, a, s_next),
        };
        Ok((next, reward))
    }
}

/// The machine actually attached to an environment.
#[derive(Clone)]
pub enum MachineRuntime {
    Simple(Arc<SimpleRewardMachine>),
    General(ResolvedRm),
}

/// Maps environment truth assignments into a machine's (possibly smaller)
/// proposition alphabet.
#[derive(Clone, Debug)]
struct PropProjection {
    env_to_machine: Vec<Option<Prop>>,
}

impl PropProjection {
    fn build(env: &GridEnv, machine_props: &crate::rm::PropSet) -> Result<Self, AssemblyError> {
        for name in machine_props.names() {
            if env.props().get(name).is_none() {
                return Err(AssemblyError::UnknownMachineProp(name.to_string()));
            }
        }
        let env_to_machine = env
            .props()
            .names()
            .map(|name| machine_props.get(name))
            .collect();
        Ok(PropProjection { env_to_machine })
    }

    fn apply(&self, sigma_env: TruthAssignment) -> TruthAssignment {
        let mut out = TruthAssignment::EMPTY;
        for p in sigma_env.props() {
            if let Some(mp) = self.env_to_machine[p.index()] {
                out.insert(mp);
            }
        }
        out
    }
}

/// One transition of a task: the full tuple a learner consumes.
///
/// `done` is true when `u_next` is terminal or the episode step cap fired on
/// this step; learners distinguish the two by looking at `u_next` — cap
/// truncation is not a true terminal and bootstraps.
#[derive(Clone, Copy, Debug)]
pub struct Experience {
    pub s: GridState,
    pub u: RmStateId,
    pub a: GridAction,
    pub r: f64,
    pub s_next: GridState,
    pub u_next: RmStateId,
    pub done: bool,
}

/// Environment + labelling + validated machine + discount: a complete task.
#[derive(Clone)]
pub struct Mdprm {
    env: GridEnv,
    machine: MachineRuntime,
    gamma: f64,
    projection: PropProjection,
}

impl Mdprm {
    /// Assembles a simple-machine task. Validation runs here; an invalid
    /// machine never reaches an episode.
    pub fn new_simple(
        env: GridEnv,
        rm: Arc<SimpleRewardMachine>,
        gamma: f64,
    ) -> Result<Mdprm, AssemblyError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(AssemblyError::BadGamma(gamma));
        }
        let report = rm.validate()?;
        if !report.is_ok() {
            return Err(AssemblyError::InvalidMachine(report));
        }
        let projection = PropProjection::build(&env, rm.props())?;
        Ok(Mdprm { env, machine: MachineRuntime::Simple(rm), gamma, projection })
    }

    /// Assembles a general-machine task, resolving evaluator names against
    /// the registry.
    pub fn new_general(
        env: GridEnv,
        rm: Arc<RewardMachine>,
        registry: &EvaluatorRegistry,
        gamma: f64,
    ) -> Result<Mdprm, AssemblyError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(AssemblyError::BadGamma(gamma));
        }
        let report = rm.validate()?;
        if !report.is_ok() {
            return Err(AssemblyError::InvalidMachine(report));
        }
        if let Some(expected) = rm.labelling_id() {
            if expected != env.labelling_id {
                return Err(AssemblyError::LabellingMismatch {
                    expected: expected.to_string(),
                    actual: env.labelling_id.clone(),
                });
            }
        }
        let projection = PropProjection::build(&env, rm.props())?;
        let resolved = ResolvedRm::resolve(rm, registry)?;
        Ok(Mdprm { env, machine: MachineRuntime::General(resolved), gamma, projection })
    }

    pub fn from_task(task: &TaskSpec, env: GridEnv, gamma: f64) -> Result<Mdprm, AssemblyError> {
        Mdprm::new_simple(env, task.rm.clone(), gamma)
    }

    pub fn env(&self) -> &GridEnv {
        &self.env
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_rm_state(&self) -> RmStateId {
        match &self.machine {
            MachineRuntime::Simple(m) => m.initial(),
            MachineRuntime::General(r) => r.machine().initial(),
        }
    }

    pub fn n_interior(&self) -> usize {
        match &self.machine {
            MachineRuntime::Simple(m) => m.n_interior(),
            MachineRuntime::General(r) => r.machine().n_interior(),
        }
    }

    pub fn n_terminal(&self) -> usize {
        match &self.machine {
            MachineRuntime::Simple(m) => m.n_terminal(),
            MachineRuntime::General(r) => r.machine().n_terminal(),
        }
    }

    pub fn is_bad(&self, id: RmStateId) -> bool {
        match &self.machine {
            MachineRuntime::Simple(m) => m.is_bad(id),
            MachineRuntime::General(r) => r.machine().is_bad(id),
        }
    }

    pub fn simple_machine(&self) -> Option<&Arc<SimpleRewardMachine>> {
        match &self.machine {
            MachineRuntime::Simple(m) => Some(m),
            MachineRuntime::General(_) => None,
        }
    }

    /// Environment truth assignment of a transition.
    pub fn label_env(&self, s: GridState, a: GridAction, s_next: GridState) -> TruthAssignment {
        self.env.label(s, a, s_next)
    }

    /// Projects an environment assignment into the machine's alphabet.
    pub fn project(&self, sigma_env: TruthAssignment) -> TruthAssignment {
        self.projection.apply(sigma_env)
    }

    /// Machine transition under an already-projected assignment.
    pub fn machine_step(
        &self,
        u: RmStateId,
        sigma: TruthAssignment,
        s: GridState,
        a: GridAction,
        s_next: GridState,
    ) -> Result<(RmStateId, f64), RmError> {
        match &self.machine {
            MachineRuntime::Simple(m) => m.step(u, sigma),
            MachineRuntime::General(r) => r.step(&self.env, u, sigma, s, a, s_next),
        }
    }

    /// One full task step: environment move, labelling, machine update.
    pub fn mdprm_step(
        &self,
        s: GridState,
        u: RmStateId,
        a: GridAction,
    ) -> Result<Experience, RmError> {
        let s_next = env_step(&self.env.map, s, a);
        let sigma = self.project(self.env.label(s, a, s_next));
        let (u_next, r) = self.machine_step(u, sigma, s, a, s_next)?;
        Ok(Experience {
            s,
            u,
            a,
            r,
            s_next,
            u_next,
            done: u_next.is_terminal(),
        })
    }
}

/// Runs one episode from the start cell and the machine's initial state.
/// Stops at a machine terminal or after `cap` steps; a cap-truncated episode
/// has `done = true` on its last experience even though `u_next` is
/// interior.
pub fn run_episode(
    task: &Mdprm,
    mut policy: impl FnMut(GridState, RmStateId, &mut TrialRng) -> GridAction,
    rng: &mut TrialRng,
    cap: usize,
) -> Vec<Experience> {
    let mut out = Vec::new();
    let mut s = task.env.map.start();
    let mut u = task.initial_rm_state();
    for step in 0..cap {
        let a = policy(s, u, rng);
        let mut e = task.mdprm_step(s, u, a).expect("validated task never fails to step");
        if step + 1 == cap {
            e.done = true;
        }
        let done = e.done;
        s = e.s_next;
        u = e.u_next;
        out.push(e);
        if done {
            break;
        }
    }
    out
}

/// A state of the explicit cross-product MDP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CrossState {
    pub s: GridState,
    pub u: RmStateId,
}

#[derive(Clone, Copy, Debug)]
pub struct CrossTransition {
    pub next: u32,
    pub reward: f64,
}

/// The cross-product MDP over (environment state, machine state), restricted
/// to states reachable from the start. The environment is deterministic, so
/// each (state, action) row is a single probability-1 transition. Rows out
/// of machine-terminal states keep the machine state fixed and pay zero.
pub struct CrossProductMdp {
    pub states: Vec<CrossState>,
    pub transitions: Vec<[CrossTransition; 4]>,
    pub gamma: f64,
    index: HashMap<CrossState, u32>,
}

impl CrossProductMdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, s: CrossState) -> Option<usize> {
        self.index.get(&s).map(|&i| i as usize)
    }

    pub fn initial_index(&self) -> usize {
        0
    }

    pub fn is_terminal(&self, idx: usize) -> bool {
        self.states[idx].u.is_terminal()
    }

    /// Steps the explicit MDP.
    pub fn step(&self, idx: usize, a: GridAction) -> (usize, f64) {
        let t = self.transitions[idx][a.index()];
        (t.next as usize, t.reward)
    }
}

/// Enumerates the reachable cross-product MDP by breadth-first expansion
/// from (start, initial machine state).
pub fn build_cross_product(task: &Mdprm) -> CrossProductMdp {
    let start = CrossState { s: task.env.map.start(), u: task.initial_rm_state() };
    let mut states = vec![start];
    let mut index = HashMap::new();
    index.insert(start, 0u32);
    let mut transitions: Vec<[CrossTransition; 4]> = Vec::new();
    let mut cursor = 0usize;
    while cursor < states.len() {
        let x = states[cursor];
        let mut row = [CrossTransition { next: 0, reward: 0.0 }; 4];
        for a in GridAction::ALL {
            let (next, reward) = if x.u.is_terminal() {
                // absorbing in the machine dimension, zero reward
                let s_next = env_step(&task.env.map, x.s, a);
                (CrossState { s: s_next, u: x.u }, 0.0)
            } else {
                let e = task.mdprm_step(x.s, x.u, a).expect("validated task");
                (CrossState { s: e.s_next, u: e.u_next }, e.r)
            };
            let id = *index.entry(next).or_insert_with(|| {
                states.push(next);
                (states.len() - 1) as u32
            });
            row[a.index()] = CrossTransition { next: id, reward };
        }
        transitions.push(row);
        cursor += 1;
    }
    CrossProductMdp { states, transitions, gamma: task.gamma, index }
}

/// What a learner sees after each environment step, beyond the experience of
/// the active task: the full task list (for counterfactual updates across
/// machines), the raw environment assignment, and whether the step cap fired.
pub struct StepCtx<'a> {
    pub tasks: &'a [Mdprm],
    pub active: usize,
    pub sigma_env: TruthAssignment,
    pub cap: bool,
}

/// A tabular learner driven by the multitask loop. `act` consumes the trial
/// RNG (exploration); `observe` applies whatever updates the algorithm
/// derives from one environment step.
pub trait Learner {
    fn begin_episode(&mut self, task: usize);
    fn act(&mut self, task: usize, s: GridState, u: RmStateId, rng: &mut TrialRng) -> GridAction;
    fn observe(&mut self, ctx: &StepCtx<'_>, e: &Experience, rng: &mut TrialRng);
    /// Deterministic greedy policy view for evaluation; never touches the
    /// trial RNG.
    fn eval_policy(&self) -> Box<dyn EvalPolicy + '_>;
}

/// Greedy execution of a learned policy. Stateful so that option-based
/// learners can hold an option across steps.
pub trait EvalPolicy {
    fn reset(&mut self);
    fn act(&mut self, task: usize, s: GridState, u: RmStateId) -> GridAction;
}

/// Resumable multitask training over a round-robin task schedule. Tasks
/// share one environment; episode `k` runs task `k mod n`. The global step
/// counter advances once per environment step no matter how many updates a
/// learner performs.
pub struct MultitaskRun<'a> {
    tasks: &'a [Mdprm],
    cap: usize,
    episode: usize,
    cursor: Option<(usize, GridState, RmStateId, usize)>,
    global_step: usize,
}

impl<'a> MultitaskRun<'a> {
    pub fn new(tasks: &'a [Mdprm], max_episode_steps: usize) -> Self {
        assert!(!tasks.is_empty(), "at least one task");
        assert!(max_episode_steps > 0, "episodes need at least one step");
        MultitaskRun { tasks, cap: max_episode_steps, episode: 0, cursor: None, global_step: 0 }
    }

    pub fn global_step(&self) -> usize {
        self.global_step
    }

    /// Advances exactly `n` environment steps (unless `n == 0`). The sink
    /// receives every experience with its task index.
    pub fn advance(
        &mut self,
        learner: &mut dyn Learner,
        rng: &mut TrialRng,
        n: usize,
        mut sink: impl FnMut(usize, &Experience),
    ) {
        for _ in 0..n {
            let (task_idx, s, u, in_ep) = match self.cursor.take() {
                Some(state) => state,
                None => {
                    let task_idx = self.episode % self.tasks.len();
                    learner.begin_episode(task_idx);
                    let task = &self.tasks[task_idx];
                    (task_idx, task.env().map.start(), task.initial_rm_state(), 0)
                }
            };
            let task = &self.tasks[task_idx];
            let a = learner.act(task_idx, s, u, rng);
            let mut e = task.mdprm_step(s, u, a).expect("validated task");
            let cap_fired = in_ep + 1 >= self.cap && !e.u_next.is_terminal();
            if cap_fired {
                e.done = true;
            }
            let ctx = StepCtx {
                tasks: self.tasks,
                active: task_idx,
                sigma_env: task.label_env(e.s, e.a, e.s_next),
                cap: cap_fired,
            };
            learner.observe(&ctx, &e, rng);
            sink(task_idx, &e);
            self.global_step += 1;
            if e.done {
                self.episode += 1;
                self.cursor = None;
            } else {
                self.cursor = Some((task_idx, e.s_next, e.u_next, in_ep + 1));
            }
        }
    }
}

/// Convenience wrapper over [`MultitaskRun`]: runs `total_steps` environment
/// steps and returns the task-attributed experience stream.
pub fn multitask_loop(
    tasks: &[Mdprm],
    learner: &mut dyn Learner,
    rng: &mut TrialRng,
    total_steps: usize,
    max_episode_steps: usize,
) -> Vec<(usize, Experience)> {
    let mut run = MultitaskRun::new(tasks, max_episode_steps);
    let mut out = Vec::with_capacity(total_steps);
    run.advance(learner, rng, total_steps, |task, e| out.push((task, *e)));
    out
}

/// Greedy round-robin evaluation: one episode per task under the frozen
/// policy, no exploration, no learning. Returns total reward, total steps
/// and the per-task breakdown.
pub fn evaluate_greedy(
    tasks: &[Mdprm],
    policy: &mut dyn EvalPolicy,
    cap: usize,
) -> (f64, usize, Vec<(f64, usize)>) {
    let mut per_task = Vec::with_capacity(tasks.len());
    let mut total_r = 0.0;
    let mut total_len = 0usize;
    for (idx, task) in tasks.iter().enumerate() {
        policy.reset();
        let mut s = task.env().map.start();
        let mut u = task.initial_rm_state();
        let mut ep_r = 0.0;
        let mut ep_len = 0usize;
        for _ in 0..cap {
            let a = policy.act(idx, s, u);
            let e = task.mdprm_step(s, u, a).expect("validated task");
            ep_r += e.r;
            ep_len += 1;
            s = e.s_next;
            u = e.u_next;
            if u.is_terminal() {
                break;
            }
        }
        total_r += ep_r;
        total_len += ep_len;
        per_task.push((ep_r, ep_len));
    }
    (total_r, total_len, per_task)
}

/// Builds the default environment for an env id; craft worlds come from
/// seeds via `generate_craft_map`.
pub fn default_env(env: EnvId) -> GridEnv {
    match env {
        EnvId::Office => GridEnv::office_default(),
        EnvId::Craft => {
            let map = crate::envs::generate_craft_map(0, &crate::envs::CraftGenParams::default())
                .expect("default craft generation succeeds");
            GridEnv::new(Arc::new(map))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::office_tasks;
    use rand::Rng;
    use rand::SeedableRng;

    fn coffee_task() -> Mdprm {
        let env = GridEnv::office_default();
        let task = &office_tasks()[0];
        Mdprm::from_task(task, env, 0.9).unwrap()
    }

    #[test]
    fn stepping_onto_coffee_advances_the_machine() {
        let t = coffee_task();
        // (8,3) is a coffee cell; approach from the west
        let s = GridState { x: 7, y: 3 };
        let e = t.mdprm_step(s, t.initial_rm_state(), GridAction::East).unwrap();
        assert_eq!(e.u_next, RmStateId::Interior(1));
        assert_eq!(e.r, 0.0);
        assert!(!e.done);

        // office is at (10,3); from u1 it finishes the task
        let s = GridState { x: 9, y: 3 };
        let e = t.mdprm_step(s, RmStateId::Interior(1), GridAction::East).unwrap();
        assert_eq!(e.r, 1.0);
        assert!(e.done);
        assert!(e.u_next.is_terminal());

        // an empty cell self-loops
        let e = t.mdprm_step(t.env().map.start(), t.initial_rm_state(), GridAction::East).unwrap();
        assert_eq!(e.u_next, t.initial_rm_state());
        assert_eq!(e.r, 0.0);
    }

    #[test]
    fn decoration_ends_the_episode_with_nothing() {
        let t = coffee_task();
        // decoration at (8,2); step down onto it... approach from (8,1)? that
        // row is open; easier from the west at (7,2)
        let s = GridState { x: 7, y: 2 };
        let e = t.mdprm_step(s, t.initial_rm_state(), GridAction::East).unwrap();
        assert!(e.done);
        assert_eq!(e.r, 0.0);
        assert!(t.is_bad(e.u_next));
    }

    #[test]
    fn capped_episode_marks_done_without_terminal() {
        let t = coffee_task();
        let mut rng = TrialRng::seed_from_u64(7);
        // spin in place by bumping the western wall
        let eps = run_episode(&t, |_, _, _| GridAction::North, &mut rng, 5);
        assert_eq!(eps.len(), 5);
        assert!(eps.last().unwrap().done);
        assert!(!eps.last().unwrap().u_next.is_terminal());
        assert!(eps[..4].iter().all(|e| !e.done));
    }

    #[test]
    fn episode_starts_at_start_and_initial() {
        let t = coffee_task();
        let mut rng = TrialRng::seed_from_u64(3);
        let eps = run_episode(
            &t,
            |_, _, r: &mut TrialRng| GridAction::from_index(r.random_range(0..4)),
            &mut rng,
            50,
        );
        assert_eq!(eps[0].s, t.env().map.start());
        assert_eq!(eps[0].u, t.initial_rm_state());
    }

    #[test]
    fn cross_product_rows_are_deterministic_and_absorbing() {
        let t = coffee_task();
        let cp = build_cross_product(&t);
        // open cells times two interior states, plus reachable terminal block
        let open = t.env().map.open_cells().count();
        assert!(cp.n_states() > open, "must cover both machine stages");
        for (i, st) in cp.states.iter().enumerate() {
            for a in GridAction::ALL {
                let (next, r) = cp.step(i, a);
                if st.u.is_terminal() {
                    assert_eq!(cp.states[next].u, st.u, "terminal block is machine-absorbing");
                    assert_eq!(r, 0.0);
                }
                assert!(next < cp.n_states());
            }
        }
    }

    #[test]
    fn cross_product_reward_stream_matches_the_task() {
        let t = coffee_task();
        let cp = build_cross_product(&t);
        let mut rng = TrialRng::seed_from_u64(11);
        for _ in 0..200 {
            let mut s = t.env().map.start();
            let mut u = t.initial_rm_state();
            let mut x = cp.initial_index();
            for _ in 0..60 {
                let a = GridAction::from_index(rng.random_range(0..4));
                let e = t.mdprm_step(s, u, a).unwrap();
                let (x2, r2) = cp.step(x, a);
                assert_eq!(e.r.to_bits(), r2.to_bits());
                s = e.s_next;
                u = e.u_next;
                x = x2;
                if u.is_terminal() {
                    break;
                }
            }
        }
    }

    #[test]
    fn projection_drops_foreign_events() {
        let t = coffee_task(); // machine props: c, o, d
        let env = t.env().clone();
        let m = env.props().get("m").unwrap();
        let sigma_env = TruthAssignment::singleton(m);
        assert!(t.project(sigma_env).is_empty());
        let c = env.props().get("c").unwrap();
        let projected = t.project(TruthAssignment::singleton(c));
        assert_eq!(projected.props().count(), 1);
    }

    #[test]
    fn general_machine_with_constant_evaluator_runs() {
        let env = GridEnv::office_default();
        let rm = crate::rm::from_markovian_reward(RewardEvaluatorId::Constant(1.0));
        let t = Mdprm::new_general(env, Arc::new(rm), &EvaluatorRegistry::new(), 0.9).unwrap();
        let mut rng = TrialRng::seed_from_u64(5);
        let eps = run_episode(
            &t,
            |_, _, r: &mut TrialRng| GridAction::from_index(r.random_range(0..4)),
            &mut rng,
            100,
        );
        assert_eq!(eps.len(), 100, "never-ending machine only stops at the cap");
        assert!(eps.iter().all(|e| e.r == 1.0));
    }

    #[test]
    fn named_evaluator_resolution_is_fail_fast() {
        let env = GridEnv::office_default();
        let rm = crate::rm::from_markovian_reward(RewardEvaluatorId::Named("step_cost".into()));
        let err = match Mdprm::new_general(
            env.clone(),
            Arc::new(rm.clone()),
            &EvaluatorRegistry::new(),
            0.9,
        ) {
            Err(e) => e,
            Ok(_) => panic!("resolution must fail"),
        };
        assert!(matches!(err, AssemblyError::UnknownEvaluator(name) if name == "step_cost"));

        let mut registry = EvaluatorRegistry::new();
        registry.register("step_cost", |_, _, _, _| -1.0);
        let t = Mdprm::new_general(env, Arc::new(rm), &registry, 0.9).unwrap();
        let e = t
            .mdprm_step(t.env().map.start(), t.initial_rm_state(), GridAction::East)
            .unwrap();
        assert_eq!(e.r, -1.0);
    }

    #[test]
    fn round_robin_schedule_and_step_accounting() {
        let env = GridEnv::office_default();
        let tasks: Vec<Mdprm> = office_tasks()
            .iter()
            .map(|t| Mdprm::from_task(t, env.clone(), 0.9).unwrap())
            .collect();
        struct RandomWalker;
        impl Learner for RandomWalker {
            fn begin_episode(&mut self, _: usize) {}
            fn act(&mut self, _: usize, _: GridState, _: RmStateId, rng: &mut TrialRng) -> GridAction {
                GridAction::from_index(rng.random_range(0..4))
            }
            fn observe(&mut self, _: &StepCtx<'_>, _: &Experience, _: &mut TrialRng) {}
            fn eval_policy(&self) -> Box<dyn EvalPolicy + '_> {
                unimplemented!("not evaluated")
            }
        }
        let mut rng = TrialRng::seed_from_u64(1);
        let mut learner = RandomWalker;
        let stream = multitask_loop(&tasks, &mut learner, &mut rng, 500, 20);
        assert_eq!(stream.len(), 500, "budget 0 < n: counter advances once per env step");

        // episodes cycle tasks in declaration order
        let mut episode_tasks = Vec::new();
        let mut current = None;
        for (task, e) in &stream {
            if current.is_none() {
                episode_tasks.push(*task);
                current = Some(*task);
            }
            if e.done {
                current = None;
            }
        }
        for (k, task) in episode_tasks.iter().enumerate() {
            assert_eq!(*task, k % 4);
        }

        // sum of episode lengths equals total steps
        let done_count = stream.iter().filter(|(_, e)| e.done).count();
        assert!(done_count >= 1);
        assert!(multitask_loop(&tasks, &mut learner, &mut rng, 0, 20).is_empty());
    }
}
