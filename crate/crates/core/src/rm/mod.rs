//! Reward machines: propositions, truth assignments, guard formulas, machine
//! types and the stepping semantics.
//!
//! Two machine flavours exist. A [`SimpleRewardMachine`] attaches a plain
//! number to every transition. A [`RewardMachine`] is the general (Moore)
//! form: each interior state names a reward *evaluator* that is resolved
//! against the environment when the machine is assembled into an MDP; see
//! [`crate::mdprm`]. Every simple machine embeds into the general form via
//! [`simple_to_general`], and any Markovian reward function is a one-state
//! general machine ([`from_markovian_reward`]).

mod validate;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use validate::{ValidationReport, Violation};

/// Hard cap on the proposition alphabet; truth assignments are bitmasks.
pub const MAX_PROPS: usize = 32;

/// Default exhaustive-enumeration bound used by `validate`. Checking
/// determinism enumerates `2^|P|` assignments per interior state, so anything
/// past this needs an explicit opt-in via `validate_with_prop_limit`.
pub const DEFAULT_PROP_LIMIT: usize = 16;

#[derive(Debug, Error)]
pub enum RmError {
    #[error("proposition set holds {0} names, the maximum is {MAX_PROPS}")]
    TooManyPropositions(usize),
    #[error("duplicate proposition name `{0}`")]
    DuplicateProposition(String),
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("formula references proposition index {index} but only {known} are declared")]
    UnknownProposition { index: usize, known: usize },
    #[error("initial state index {0} is out of range")]
    BadInitialState(usize),
    #[error("stepped a terminal state `{0}`")]
    SteppedTerminal(String),
    #[error("state id {0:?} does not exist in this machine")]
    UnknownState(RmStateId),
    #[error(
        "machine is nondeterministic at state `{state}`: edges {first} and {second} both match"
    )]
    NondeterministicMachine {
        state: String,
        first: usize,
        second: usize,
    },
    #[error("no edge of state `{state}` matches the assignment and there is no otherwise edge")]
    NoMatchingEdge { state: String },
    #[error("state `{0}` has {1} reward evaluators, expected exactly one")]
    BadEvaluatorCount(String, usize),
    #[error("validation enumerates 2^{props} assignments which exceeds the limit of 2^{limit}")]
    EnumerationBound { props: usize, limit: usize },
}

/// Index of a proposition within its [`PropSet`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Prop(pub(crate) u8);

impl Prop {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Builds a raw proposition handle. Whether the index is meaningful
    /// depends on the [`PropSet`] it is used against; prefer
    /// [`PropSet::get`].
    pub fn from_index(index: usize) -> Prop {
        Prop(index as u8)
    }
}

/// An ordered set of named propositions; the alphabet a machine listens to.
///
/// Names are unique and case-sensitive. Order is declaration order and is
/// significant: it fixes bit positions in [`TruthAssignment`] and the
/// canonical serialization.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PropSet {
    names: Vec<String>,
}

impl PropSet {
    pub fn new<I, S>(names: I) -> Result<Self, RmError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        for name in names {
            let name = name.into();
            if out.contains(&name) {
                return Err(RmError::DuplicateProposition(name));
            }
            out.push(name);
        }
        if out.len() > MAX_PROPS {
            return Err(RmError::TooManyPropositions(out.len()));
        }
        Ok(PropSet { names: out })
    }

    pub fn empty() -> Self {
        PropSet::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, p: Prop) -> &str {
        &self.names[p.index()]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<Prop> {
        self.names.iter().position(|n| n == name).map(|i| Prop(i as u8))
    }

    /// True when every proposition of `self` also exists in `other`.
    pub fn subset_of(&self, other: &PropSet) -> bool {
        self.names().all(|n| other.get(n).is_some())
    }

    /// Builds an assignment from proposition names; handy in tests and the CLI.
    pub fn assignment(&self, names: &[&str]) -> Option<TruthAssignment> {
        let mut sigma = TruthAssignment::EMPTY;
        for name in names {
            sigma.insert(self.get(name)?);
        }
        Some(sigma)
    }
}

/// The set of propositions currently true, as a bitmask over a [`PropSet`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TruthAssignment(u32);

impl TruthAssignment {
    pub const EMPTY: TruthAssignment = TruthAssignment(0);

    pub fn singleton(p: Prop) -> Self {
        TruthAssignment(1 << p.0)
    }

    pub fn from_bits(bits: u32) -> Self {
        TruthAssignment(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, p: Prop) -> bool {
        self.0 & (1 << p.0) != 0
    }

    pub fn insert(&mut self, p: Prop) {
        self.0 |= 1 << p.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn props(self) -> impl Iterator<Item = Prop> {
        (0..32u8).filter(move |i| self.0 & (1 << i) != 0).map(Prop)
    }

    /// Every assignment over an alphabet of `n_props` propositions.
    pub fn enumerate(n_props: usize) -> impl Iterator<Item = TruthAssignment> {
        debug_assert!(n_props <= MAX_PROPS);
        let count: u64 = 1 << n_props;
        (0..count).map(|bits| TruthAssignment(bits as u32))
    }

    /// Renders as `{a, b}` against the owning proposition set.
    pub fn describe(self, props: &PropSet) -> String {
        let names: Vec<&str> = self.props().map(|p| props.name(p)).collect();
        format!("{{{}}}", names.join(", "))
    }
}

impl fmt::Debug for TruthAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TruthAssignment({:#b})", self.0)
    }
}

/// Propositional guard formula. Atoms index into the machine's [`PropSet`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    True,
    False,
    Atom(Prop),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(p: Prop) -> Formula {
        Formula::Atom(p)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    fn eval_unchecked(&self, sigma: TruthAssignment) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(p) => sigma.contains(*p),
            Formula::Not(f) => !f.eval_unchecked(sigma),
            Formula::And(a, b) => a.eval_unchecked(sigma) && b.eval_unchecked(sigma),
            Formula::Or(a, b) => a.eval_unchecked(sigma) || b.eval_unchecked(sigma),
        }
    }

    /// Errors if any atom indexes outside `props`.
    pub fn check_props(&self, props: &PropSet) -> Result<(), RmError> {
        match self {
            Formula::True | Formula::False => Ok(()),
            Formula::Atom(p) => {
                if p.index() < props.len() {
                    Ok(())
                } else {
                    Err(RmError::UnknownProposition {
                        index: p.index(),
                        known: props.len(),
                    })
                }
            }
            Formula::Not(f) => f.check_props(props),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.check_props(props)?;
                b.check_props(props)
            }
        }
    }
}

/// Standard propositional semantics: an atom holds iff its proposition is in
/// `sigma`. Errors only when the formula mentions a proposition outside
/// `props`, which cannot happen for formulas built through the DSL.
pub fn eval_formula(
    f: &Formula,
    sigma: TruthAssignment,
    props: &PropSet,
) -> Result<bool, RmError> {
    f.check_props(props)?;
    Ok(f.eval_unchecked(sigma))
}

/// Compact handle to a machine state. Interior and terminal states live in
/// disjoint index spaces.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum RmStateId {
    Interior(u8),
    Terminal(u8),
}

impl RmStateId {
    pub fn is_terminal(self) -> bool {
        matches!(self, RmStateId::Terminal(_))
    }

    pub fn interior_index(self) -> Option<usize> {
        match self {
            RmStateId::Interior(i) => Some(i as usize),
            RmStateId::Terminal(_) => None,
        }
    }

    pub fn terminal_index(self) -> Option<usize> {
        match self {
            RmStateId::Terminal(i) => Some(i as usize),
            RmStateId::Interior(_) => None,
        }
    }
}

/// Edge guard: an explicit formula, or the catch-all that fires when no
/// guarded edge of the same state matches.
#[derive(Clone, Debug, PartialEq)]
pub enum Guard {
    When(Formula),
    Otherwise,
}

/// A guarded transition of a simple machine, carrying its output reward.
#[derive(Clone, Debug)]
pub struct Edge {
    pub source: RmStateId,
    pub guard: Guard,
    pub target: RmStateId,
    pub reward: f64,
}

/// A guarded transition of a general machine (no attached number; rewards
/// come from the per-state evaluator).
#[derive(Clone, Debug)]
pub struct GuardEdge {
    pub source: RmStateId,
    pub guard: Guard,
    pub target: RmStateId,
}

/// Terminal state metadata. `bad` marks failure terminals; option pruning is
/// its only consumer.
#[derive(Clone, Debug)]
pub struct TerminalInfo {
    pub name: String,
    pub bad: bool,
}

/// Finite state machine over truth assignments whose transitions output
/// plain numbers.
///
/// Machines are immutable once built and safe to share across threads.
/// Construction performs only index sanity checks; call [`validate`] (or let
/// `Mdprm` assembly do it) before trusting the stepping semantics —
/// [`SimpleRewardMachine::step`] detects nondeterminism and gaps dynamically
/// and reports them as errors on unvalidated machines.
#[derive(Clone, Debug)]
pub struct SimpleRewardMachine {
    props: PropSet,
    interiors: Vec<String>,
    terminals: Vec<TerminalInfo>,
    initial: u8,
    edges: Vec<Edge>,
    // guarded edges per interior state, declaration order
    by_source: Vec<Vec<u32>>,
    // first otherwise edge per interior state
    otherwise: Vec<Option<u32>>,
}

impl SimpleRewardMachine {
    pub fn new(
        props: PropSet,
        interiors: Vec<String>,
        terminals: Vec<TerminalInfo>,
        initial: usize,
        edges: Vec<Edge>,
    ) -> Result<Self, RmError> {
        if initial >= interiors.len() {
            return Err(RmError::BadInitialState(initial));
        }
        check_unique_names(&interiors, &terminals)?;
        let (by_source, otherwise) = index_edges(
            interiors.len(),
            edges.iter().map(|e| (e.source, &e.guard)),
        );
        Ok(SimpleRewardMachine {
            props,
            interiors,
            terminals,
            initial: initial as u8,
            edges,
            by_source,
            otherwise,
        })
    }

    pub fn props(&self) -> &PropSet {
        &self.props
    }

    pub fn initial(&self) -> RmStateId {
        RmStateId::Interior(self.initial)
    }

    pub fn n_interior(&self) -> usize {
        self.interiors.len()
    }

    pub fn n_terminal(&self) -> usize {
        self.terminals.len()
    }

    /// Machines with no terminal states model never-ending tasks.
    pub fn is_never_ending(&self) -> bool {
        self.terminals.is_empty()
    }

    pub fn interior_name(&self, index: usize) -> &str {
        &self.interiors[index]
    }

    pub fn terminal_info(&self, index: usize) -> &TerminalInfo {
        &self.terminals[index]
    }

    pub fn state_name(&self, id: RmStateId) -> &str {
        match id {
            RmStateId::Interior(i) => &self.interiors[i as usize],
            RmStateId::Terminal(i) => &self.terminals[i as usize].name,
        }
    }

    pub fn state_by_name(&self, name: &str) -> Option<RmStateId> {
        if let Some(i) = self.interiors.iter().position(|n| n == name) {
            return Some(RmStateId::Interior(i as u8));
        }
        self.terminals
            .iter()
            .position(|t| t.name == name)
            .map(|i| RmStateId::Terminal(i as u8))
    }

    pub fn is_bad(&self, id: RmStateId) -> bool {
        match id {
            RmStateId::Terminal(i) => self.terminals.get(i as usize).map_or(false, |t| t.bad),
            RmStateId::Interior(_) => false,
        }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids leaving an interior state: guarded edges in declaration
    /// order, then the otherwise edge if present.
    pub fn edges_from(&self, interior: usize) -> impl Iterator<Item = usize> + '_ {
        self.by_source[interior]
            .iter()
            .map(|&i| i as usize)
            .chain(self.otherwise[interior].map(|i| i as usize))
    }

    /// One machine step: consumes a truth assignment, returns the successor
    /// state and the emitted reward.
    ///
    /// Exactly one edge must match. On a validated machine that is
    /// guaranteed; otherwise two matching guards surface as
    /// `NondeterministicMachine` and a missing match as `NoMatchingEdge`.
    pub fn step(
        &self,
        u: RmStateId,
        sigma: TruthAssignment,
    ) -> Result<(RmStateId, f64), RmError> {
        let ui = match u {
            RmStateId::Terminal(i) => {
                let name = self
                    .terminals
                    .get(i as usize)
                    .map(|t| t.name.clone())
                    .unwrap_or_else(|| format!("#{i}"));
                return Err(RmError::SteppedTerminal(name));
            }
            RmStateId::Interior(i) if (i as usize) < self.interiors.len() => i as usize,
            other => return Err(RmError::UnknownState(other)),
        };
        let mut hit: Option<u32> = None;
        for &ei in &self.by_source[ui] {
            let edge = &self.edges[ei as usize];
            if let Guard::When(f) = &edge.guard {
                if eval_formula(f, sigma, &self.props)? {
                    if let Some(first) = hit {
                        return Err(RmError::NondeterministicMachine {
                            state: self.interiors[ui].clone(),
                            first: first as usize,
                            second: ei as usize,
                        });
                    }
                    hit = Some(ei);
                }
            }
        }
        let ei = match hit.or(self.otherwise[ui]) {
            Some(ei) => ei,
            None => {
                return Err(RmError::NoMatchingEdge {
                    state: self.interiors[ui].clone(),
                })
            }
        };
        let edge = &self.edges[ei as usize];
        Ok((edge.target, edge.reward))
    }

    /// Exhaustive determinism/shape check with the default `2^16` bound.
    pub fn validate(&self) -> Result<ValidationReport, RmError> {
        self.validate_with_prop_limit(DEFAULT_PROP_LIMIT)
    }

    pub fn validate_with_prop_limit(&self, limit: usize) -> Result<ValidationReport, RmError> {
        validate::validate_transitions(
            &self.props,
            &self.interiors,
            self.terminals.len(),
            &self
                .edges
                .iter()
                .map(|e| (e.source, e.guard.clone(), e.target))
                .collect::<Vec<_>>(),
            limit,
        )
    }
}

/// Names the reward source of one interior state of a general machine.
///
/// `Named` ids are looked up in the environment evaluator registry when the
/// machine is attached to an environment; resolution failures abort assembly
/// before any episode runs.
#[derive(Clone, Debug, PartialEq)]
pub enum RewardEvaluatorId {
    /// Emits `c` on every transition.
    Constant(f64),
    /// Replays the backing simple machine's edge reward for the observed
    /// assignment; produced by [`simple_to_general`].
    SimpleEdgeReward,
    /// Resolved against the registry of environment-reward evaluators.
    Named(String),
}

/// General (Moore-style) reward machine: transitions are guarded exactly as
/// in the simple form, but each interior state outputs a reward *function*
/// over environment transitions, referenced by [`RewardEvaluatorId`].
#[derive(Clone, Debug)]
pub struct RewardMachine {
    props: PropSet,
    interiors: Vec<String>,
    terminals: Vec<TerminalInfo>,
    initial: u8,
    edges: Vec<GuardEdge>,
    state_reward: Vec<RewardEvaluatorId>,
    by_source: Vec<Vec<u32>>,
    otherwise: Vec<Option<u32>>,
    simple_source: Option<Arc<SimpleRewardMachine>>,
    labelling_id: Option<String>,
}

impl RewardMachine {
    pub fn new(
        props: PropSet,
        interiors: Vec<String>,
        terminals: Vec<TerminalInfo>,
        initial: usize,
        edges: Vec<GuardEdge>,
        state_reward: Vec<RewardEvaluatorId>,
    ) -> Result<Self, RmError> {
        if initial >= interiors.len() {
            return Err(RmError::BadInitialState(initial));
        }
        check_unique_names(&interiors, &terminals)?;
        if state_reward.len() != interiors.len() {
            // report against the first state lacking (or duplicating) one
            let idx = state_reward.len().min(interiors.len().saturating_sub(1));
            return Err(RmError::BadEvaluatorCount(
                interiors[idx].clone(),
                state_reward.len(),
            ));
        }
        let (by_source, otherwise) = index_edges(
            interiors.len(),
            edges.iter().map(|e| (e.source, &e.guard)),
        );
        Ok(RewardMachine {
            props,
            interiors,
            terminals,
            initial: initial as u8,
            edges,
            state_reward,
            by_source,
            otherwise,
            simple_source: None,
            labelling_id: None,
        })
    }

    pub fn props(&self) -> &PropSet {
        &self.props
    }

    pub fn initial(&self) -> RmStateId {
        RmStateId::Interior(self.initial)
    }

    pub fn n_interior(&self) -> usize {
        self.interiors.len()
    }

    pub fn n_terminal(&self) -> usize {
        self.terminals.len()
    }

    pub fn state_name(&self, id: RmStateId) -> &str {
        match id {
            RmStateId::Interior(i) => &self.interiors[i as usize],
            RmStateId::Terminal(i) => &self.terminals[i as usize].name,
        }
    }

    pub fn is_bad(&self, id: RmStateId) -> bool {
        match id {
            RmStateId::Terminal(i) => self.terminals.get(i as usize).map_or(false, |t| t.bad),
            RmStateId::Interior(_) => false,
        }
    }

    pub fn evaluator(&self, interior: usize) -> &RewardEvaluatorId {
        &self.state_reward[interior]
    }

    pub fn simple_source(&self) -> Option<&Arc<SimpleRewardMachine>> {
        self.simple_source.as_ref()
    }

    pub fn labelling_id(&self) -> Option<&str> {
        self.labelling_id.as_deref()
    }

    /// State transition only; the reward side is applied by the resolved
    /// runner in `mdprm`.
    pub fn transition(&self, u: RmStateId, sigma: TruthAssignment) -> Result<RmStateId, RmError> {
        let ui = match u {
            RmStateId::Terminal(i) => {
                let name = self
                    .terminals
                    .get(i as usize)
                    .map(|t| t.name.clone())
                    .unwrap_or_else(|| format!("#{i}"));
                return Err(RmError::SteppedTerminal(name));
            }
            RmStateId::Interior(i) if (i as usize) < self.interiors.len() => i as usize,
            other => return Err(RmError::UnknownState(other)),
        };
        let mut hit: Option<u32> = None;
        for &ei in &self.by_source[ui] {
            let edge = &self.edges[ei as usize];
            if let Guard::When(f) = &edge.guard {
                if eval_formula(f, sigma, &self.props)? {
                    if let Some(first) = hit {
                        return Err(RmError::NondeterministicMachine {
                            state: self.interiors[ui].clone(),
                            first: first as usize,
                            second: ei as usize,
                        });
                    }
                    hit = Some(ei);
                }
            }
        }
        match hit.or(self.otherwise[ui]) {
            Some(ei) => Ok(self.edges[ei as usize].target),
            None => Err(RmError::NoMatchingEdge {
                state: self.interiors[ui].clone(),
            }),
        }
    }

    pub fn validate(&self) -> Result<ValidationReport, RmError> {
        self.validate_with_prop_limit(DEFAULT_PROP_LIMIT)
    }

    pub fn validate_with_prop_limit(&self, limit: usize) -> Result<ValidationReport, RmError> {
        validate::validate_transitions(
            &self.props,
            &self.interiors,
            self.terminals.len(),
            &self
                .edges
                .iter()
                .map(|e| (e.source, e.guard.clone(), e.target))
                .collect::<Vec<_>>(),
            limit,
        )
    }
}

/// Embeds a simple machine into the general form: same states and guards,
/// and every interior state's evaluator replays the simple machine's edge
/// reward for the observed assignment. Run with the same labelling function,
/// both machines visit the same states and emit the same rewards on every
/// environment trace.
pub fn simple_to_general(m: &SimpleRewardMachine, labelling_id: &str) -> RewardMachine {
    let edges = m
        .edges
        .iter()
        .map(|e| GuardEdge {
            source: e.source,
            guard: e.guard.clone(),
            target: e.target,
        })
        .collect();
    let mut out = RewardMachine::new(
        m.props.clone(),
        m.interiors.clone(),
        m.terminals.clone(),
        m.initial as usize,
        edges,
        vec![RewardEvaluatorId::SimpleEdgeReward; m.interiors.len()],
    )
    .expect("structure of a constructed simple machine is well formed");
    out.simple_source = Some(Arc::new(m.clone()));
    out.labelling_id = Some(labelling_id.to_string());
    out
}

/// Wraps a Markovian reward function as a one-state, never-ending machine:
/// a single interior state with an otherwise self-loop and the given
/// evaluator.
pub fn from_markovian_reward(evaluator: RewardEvaluatorId) -> RewardMachine {
    RewardMachine::new(
        PropSet::empty(),
        vec!["u0".to_string()],
        Vec::new(),
        0,
        vec![GuardEdge {
            source: RmStateId::Interior(0),
            guard: Guard::Otherwise,
            target: RmStateId::Interior(0),
        }],
        vec![evaluator],
    )
    .expect("one-state machine is well formed")
}

fn check_unique_names(interiors: &[String], terminals: &[TerminalInfo]) -> Result<(), RmError> {
    let mut seen: Vec<&str> = Vec::new();
    for name in interiors
        .iter()
        .map(String::as_str)
        .chain(terminals.iter().map(|t| t.name.as_str()))
    {
        if seen.contains(&name) {
            return Err(RmError::DuplicateState(name.to_string()));
        }
        seen.push(name);
    }
    Ok(())
}

fn index_edges<'a>(
    n_interior: usize,
    edges: impl Iterator<Item = (RmStateId, &'a Guard)>,
) -> (Vec<Vec<u32>>, Vec<Option<u32>>) {
    let mut by_source = vec![Vec::new(); n_interior];
    let mut otherwise = vec![None; n_interior];
    for (i, (source, guard)) in edges.enumerate() {
        if let RmStateId::Interior(s) = source {
            let s = s as usize;
            if s >= n_interior {
                continue; // dangling source; validate reports it
            }
            match guard {
                Guard::When(_) => by_source[s].push(i as u32),
                Guard::Otherwise => {
                    if otherwise[s].is_none() {
                        otherwise[s] = Some(i as u32);
                    }
                }
            }
        }
    }
    (by_source, otherwise)
}
