//! Reward-machine toolkit and benchmark harness.
//!
//! A reward machine is a finite state machine over propositional events that
//! supplies the reward signal of an RL problem; it makes non-Markovian tasks
//! ("deliver coffee, then go to the office, never step on a decoration")
//! expressible as plain machine structure. This crate bundles:
//!
//! - [`rm`]: machine types, stepping semantics and validation;
//! - [`dsl`]: the `.rm` text format, parser and canonical serializer;
//! - [`envs`]: deterministic gridworlds (office, craft), labelling functions
//!   and the built-in task library;
//! - [`mdprm`]: environment + labelling + machine assembly, episode running,
//!   the explicit cross-product MDP and the multitask training loop;
//! - [`algos`]: four tabular learners (cross-product q-learning,
//!   counterfactual relabelling, per-state q-functions, hierarchical options);
//! - [`shaping`]: automated potential-based reward shaping from the machine;
//! - [`oracle`]: exact solvers and trace/path checkers used for evaluation
//!   and as independent test oracles;
//! - [`experiment`]: the seeded multi-trial experiment engine and CSV output.

pub mod dsl;
pub mod experiment;
pub mod envs;
pub mod mdprm;
pub mod algos;
pub mod oracle;
pub mod shaping;
pub mod rm;

pub use algos::{AlgoKind, LearnerConfig, QTable};
pub use envs::{EnvId, GridAction, GridEnv, GridMap, GridState, TaskSpec};
pub use experiment::{run_experiment, CurvePoint, RunConfig};
pub use mdprm::{Experience, Learner, Mdprm};
pub use rm::{Formula, PropSet, RewardMachine, RmStateId, SimpleRewardMachine, TruthAssignment};
