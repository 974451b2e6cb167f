//! Exhaustive machine validation.
//!
//! The transition function of a machine must be total and deterministic:
//! for every interior state and every truth assignment, exactly one edge
//! matches (the otherwise edge matches iff no guarded edge does). The check
//! enumerates all `2^|P|` assignments per interior state, which is why the
//! proposition count is bounded.

use std::fmt;

use super::{
    eval_formula, Guard, PropSet, RmError, RmStateId, TruthAssignment,
};

/// One structural or semantic defect, with enough context to fix the source.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Two guarded edges of the same state both match `witness`.
    Overlap {
        state: String,
        first_edge: usize,
        second_edge: usize,
        witness: Vec<String>,
    },
    /// No edge of the state matches `witness` and there is no otherwise edge.
    Gap { state: String, witness: Vec<String> },
    /// Edge target index is out of range.
    DanglingTarget { edge: usize },
    /// More than one otherwise edge on a single state.
    MultipleOtherwise { state: String },
    /// An edge leaves a terminal state.
    TerminalOutEdge { edge: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap {
                state,
                first_edge,
                second_edge,
                witness,
            } => write!(
                f,
                "overlap at state `{state}`: edges {first_edge} and {second_edge} both match {{{}}}",
                witness.join(", ")
            ),
            Violation::Gap { state, witness } => write!(
                f,
                "gap at state `{state}`: no edge matches {{{}}}",
                witness.join(", ")
            ),
            Violation::DanglingTarget { edge } => {
                write!(f, "edge {edge} targets a state that does not exist")
            }
            Violation::MultipleOtherwise { state } => {
                write!(f, "state `{state}` declares more than one otherwise edge")
            }
            Violation::TerminalOutEdge { edge } => {
                write!(f, "edge {edge} leaves a terminal state")
            }
        }
    }
}

/// Outcome of a validation run; empty means the machine is well formed.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn into_violations(self) -> Vec<Violation> {
        self.violations
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub(super) fn validate_transitions(
    props: &PropSet,
    interiors: &[String],
    n_terminal: usize,
    edges: &[(RmStateId, Guard, RmStateId)],
    prop_limit: usize,
) -> Result<ValidationReport, RmError> {
    if props.len() > prop_limit {
        return Err(RmError::EnumerationBound {
            props: props.len(),
            limit: prop_limit,
        });
    }

    let mut violations = Vec::new();
    let in_range = |id: RmStateId| match id {
        RmStateId::Interior(i) => (i as usize) < interiors.len(),
        RmStateId::Terminal(i) => (i as usize) < n_terminal,
    };

    // structural checks
    let mut otherwise_seen = vec![false; interiors.len()];
    for (i, (source, guard, target)) in edges.iter().enumerate() {
        match source {
            RmStateId::Terminal(_) => violations.push(Violation::TerminalOutEdge { edge: i }),
            RmStateId::Interior(s) => {
                if (*s as usize) >= interiors.len() {
                    violations.push(Violation::DanglingTarget { edge: i });
                    continue;
                }
                if matches!(guard, Guard::Otherwise) {
                    let s = *s as usize;
                    if otherwise_seen[s] {
                        violations.push(Violation::MultipleOtherwise {
                            state: interiors[s].clone(),
                        });
                    }
                    otherwise_seen[s] = true;
                }
            }
        }
        if !in_range(*target) {
            violations.push(Violation::DanglingTarget { edge: i });
        }
        if let Guard::When(f) = guard {
            f.check_props(props)?;
        }
    }

    // determinism and totality, by exhaustive enumeration
    for (ui, name) in interiors.iter().enumerate() {
        let guarded: Vec<usize> = edges
            .iter()
            .enumerate()
            .filter(|(_, (s, g, _))| {
                *s == RmStateId::Interior(ui as u8) && matches!(g, Guard::When(_))
            })
            .map(|(i, _)| i)
            .collect();
        let has_otherwise = otherwise_seen[ui];
        let mut overlap_pairs: Vec<(usize, usize)> = Vec::new();
        let mut gap_reported = false;
        for sigma in TruthAssignment::enumerate(props.len()) {
            let mut first: Option<usize> = None;
            let mut matched = 0usize;
            for &ei in &guarded {
                if let Guard::When(f) = &edges[ei].1 {
                    if eval_formula(f, sigma, props)? {
                        matched += 1;
                        match first {
                            None => first = Some(ei),
                            Some(fe) => {
                                if !overlap_pairs.contains(&(fe, ei)) {
                                    overlap_pairs.push((fe, ei));
                                    violations.push(Violation::Overlap {
                                        state: name.clone(),
                                        first_edge: fe,
                                        second_edge: ei,
                                        witness: sigma_names(sigma, props),
                                    });
                                }
                            }
                        }
                    }
                }
            }
            if matched == 0 && !has_otherwise && !gap_reported {
                violations.push(Violation::Gap {
                    state: name.clone(),
                    witness: sigma_names(sigma, props),
                });
                gap_reported = true; // first witness per state is enough
            }
        }
    }

    Ok(ValidationReport { violations })
}

fn sigma_names(sigma: TruthAssignment, props: &PropSet) -> Vec<String> {
    sigma.props().map(|p| props.name(p).to_string()).collect()
}
