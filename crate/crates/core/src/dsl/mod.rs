//! The `.rm` text format: a line-oriented description of a simple reward
//! machine, plus the propositional-formula grammar used in edge guards.
//!
//! ```text
//! # comment
//! props: c o d
//! state: u0 init
//! state: done terminal
//! state: fail terminal bad
//! edge: u0 -> done if "o & !d" reward 1
//! edge: u0 -> fail if "d" reward 0
//! edge: u0 -> u0 otherwise reward 0
//! ```
//!
//! Declaration order matters: `props:` first, then every `state:`, then
//! every `edge:`; a name must be declared before it is referenced. Formula
//! grammar (binding tightest first): `!`, `&`, `|`; both binary operators
//! associate left; parentheses and the constants `true`/`false` are
//! available. Reward literals are plain integers or decimals — scientific
//! notation is rejected so files stay diff-friendly.
//!
//! [`serialize_rm`] emits the canonical form: props in declaration order,
//! interior states before terminals, edges grouped by source state with the
//! otherwise edge last. Reparsing canonical output yields a machine with
//! identical stepping behaviour.

mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::rm::{
    Edge, Formula, Guard, PropSet, RmError, RmStateId, SimpleRewardMachine, ValidationReport,
};

pub use parser::{parse_formula, parse_rm};

/// Where and how a source text failed to parse. `line` and `column` are
/// 1-based and point at the first offending token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// A character that cannot start any token.
    Lex,
    /// Tokens in an order the grammar does not allow.
    Syntax,
    /// Reference to a name that was never declared.
    UnknownName,
    /// A name declared twice.
    Duplicate,
    /// Declaration-order or machine-shape rules broken (two `init` states,
    /// edges before states, ...).
    Structure,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {:?}: {}",
            self.line, self.column, self.kind, self.message
        )
    }
}

impl std::error::Error for ParseError {}

/// Everything that can go wrong turning text into a validated machine.
#[derive(Debug, Error)]
pub enum DslError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("machine fails validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("{0}")]
    Machine(#[from] RmError),
}

/// Canonical text form of a validated machine. `parse_rm` of the output
/// agrees with the input machine on every `(state, assignment)` step.
pub fn serialize_rm(m: &SimpleRewardMachine) -> String {
    let mut out = String::new();
    out.push_str("props:");
    for name in m.props().names() {
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');

    for i in 0..m.n_interior() {
        out.push_str("state: ");
        out.push_str(m.interior_name(i));
        if m.initial() == RmStateId::Interior(i as u8) {
            out.push_str(" init");
        }
        out.push('\n');
    }
    for i in 0..m.n_terminal() {
        let t = m.terminal_info(i);
        out.push_str("state: ");
        out.push_str(&t.name);
        out.push_str(" terminal");
        if t.bad {
            out.push_str(" bad");
        }
        out.push('\n');
    }

    for source in 0..m.n_interior() {
        for ei in m.edges_from(source) {
            let edge: &Edge = &m.edges()[ei];
            out.push_str("edge: ");
            out.push_str(m.interior_name(source));
            out.push_str(" -> ");
            out.push_str(m.state_name(edge.target));
            match &edge.guard {
                Guard::When(f) => {
                    out.push_str(" if \"");
                    out.push_str(&format_formula(f, m.props()));
                    out.push('"');
                }
                Guard::Otherwise => out.push_str(" otherwise"),
            }
            out.push_str(" reward ");
            out.push_str(&format_reward(edge.reward));
            out.push('\n');
        }
    }
    out
}

/// Renders a formula with the fewest parentheses the precedence rules allow.
pub fn format_formula(f: &Formula, props: &PropSet) -> String {
    fn go(f: &Formula, props: &PropSet, out: &mut String) {
        match f {
            Formula::True => out.push_str("true"),
            Formula::False => out.push_str("false"),
            Formula::Atom(p) => out.push_str(props.name(*p)),
            Formula::Not(inner) => {
                out.push('!');
                if matches!(**inner, Formula::And(..) | Formula::Or(..)) {
                    out.push('(');
                    go(inner, props, out);
                    out.push(')');
                } else {
                    go(inner, props, out);
                }
            }
            Formula::And(a, b) => {
                paren_if(a, props, out, |f| matches!(f, Formula::Or(..)));
                out.push_str(" & ");
                // right operand needs parens when it is an And as well, to
                // preserve the original tree under left association
                paren_if(b, props, out, |f| matches!(f, Formula::Or(..) | Formula::And(..)));
            }
            Formula::Or(a, b) => {
                go(a, props, out);
                out.push_str(" | ");
                paren_if(b, props, out, |f| matches!(f, Formula::Or(..)));
            }
        }
    }
    fn paren_if(
        f: &Formula,
        props: &PropSet,
        out: &mut String,
        needs: impl Fn(&Formula) -> bool,
    ) {
        if needs(f) {
            out.push('(');
            go(f, props, out);
            out.push(')');
        } else {
            go(f, props, out);
        }
    }
    let mut out = String::new();
    go(f, props, &mut out);
    out
}

/// Reward literal formatting. Plain decimal, no exponent, shortest text that
/// reparses to the same `f64`.
fn format_reward(r: f64) -> String {
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests;
