//! Recursive-descent parsers for guard formulas and whole `.rm` files.

use super::lexer::{Lexer, Spanned, Token};
use super::{DslError, ParseError, ParseErrorKind};
use crate::rm::{
    Edge, Formula, Guard, PropSet, RmStateId, SimpleRewardMachine, TerminalInfo,
};

/// Parses a guard formula against a known proposition set.
///
/// Grammar: `disj := conj ('|' conj)*`, `conj := unary ('&' unary)*`,
/// `unary := '!' unary | atom`, `atom := ident | 'true' | 'false' |
/// '(' disj ')'`. `!` binds tighter than `&`, which binds tighter than `|`;
/// the binary operators associate left.
pub fn parse_formula(text: &str, props: &PropSet) -> Result<Formula, ParseError> {
    parse_formula_at(text, props, 1, 0)
}

pub(super) fn parse_formula_at(
    text: &str,
    props: &PropSet,
    line: usize,
    col_offset: usize,
) -> Result<Formula, ParseError> {
    let tokens = Lexer::new(text, line, col_offset).tokenize()?;
    let mut p = FormulaParser { tokens, pos: 0, props, line };
    let f = p.disjunction()?;
    let t = p.peek();
    if !matches!(t.token, Token::End) {
        return Err(p.err_at(t.column, ParseErrorKind::Syntax, "unexpected trailing input"));
    }
    Ok(f)
}

struct FormulaParser<'a> {
    tokens: Vec<Spanned>,
    pos: usize,
    props: &'a PropSet,
    line: usize,
}

impl<'a> FormulaParser<'a> {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, column: usize, kind: ParseErrorKind, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column, kind, message: msg.into() }
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.conjunction()?;
        while matches!(self.peek().token, Token::Pipe) {
            self.bump();
            let right = self.conjunction()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while matches!(self.peek().token, Token::Amp) {
            self.bump();
            let right = self.unary()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if matches!(self.peek().token, Token::Bang) {
            self.bump();
            return Ok(Formula::not(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let t = self.bump();
        match t.token {
            Token::True => Ok(Formula::True),
            Token::False => Ok(Formula::False),
            Token::Ident(name) => match self.props.get(&name) {
                Some(p) => Ok(Formula::atom(p)),
                None => Err(self.err_at(
                    t.column,
                    ParseErrorKind::UnknownName,
                    format!("unknown proposition `{name}`"),
                )),
            },
            Token::LParen => {
                let inner = self.disjunction()?;
                let close = self.bump();
                if !matches!(close.token, Token::RParen) {
                    return Err(self.err_at(
                        close.column,
                        ParseErrorKind::Syntax,
                        "expected `)`",
                    ));
                }
                Ok(inner)
            }
            Token::End => Err(self.err_at(
                t.column,
                ParseErrorKind::Syntax,
                "expected a formula atom, found end of input",
            )),
            other => Err(self.err_at(
                t.column,
                ParseErrorKind::Syntax,
                format!("expected a formula atom, found {other:?}"),
            )),
        }
    }
}

#[derive(PartialEq, PartialOrd, Clone, Copy)]
enum Phase {
    Start,
    Props,
    States,
    Edges,
}

struct StateDecl {
    name: String,
    init: bool,
    terminal: bool,
    bad: bool,
}

/// Parses a whole `.rm` file, builds the machine and validates it. Anything
/// short of a clean validation report is an error.
pub fn parse_rm(src: &str) -> Result<SimpleRewardMachine, DslError> {
    struct EdgeDecl {
        line: usize,
        src: (String, usize),
        dst: (String, usize),
        guard: Guard,
        reward: f64,
    }

    let mut props: Option<PropSet> = None;
    let mut states: Vec<StateDecl> = Vec::new();
    let mut edges: Vec<EdgeDecl> = Vec::new();
    let mut phase = Phase::Start;

    for (line_idx, raw_line) in src.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = match raw_line.find('#') {
            Some(i) => &raw_line[..i],
            None => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }
        let tokens = Lexer::new(line, line_no, 0).tokenize()?;
        let mut p = LineParser { tokens, pos: 0, line: line_no };

        let head = p.expect_ident("declaration keyword")?;
        p.expect(Token::Colon, "`:`")?;
        match head.0.as_str() {
            "props" => {
                if phase != Phase::Start {
                    return Err(p
                        .err_at(head.1, ParseErrorKind::Structure, "props must be declared first, exactly once")
                        .into());
                }
                let mut names: Vec<(String, usize)> = Vec::new();
                loop {
                    let t = p.bump();
                    match t.token {
                        Token::Ident(name) => {
                            if names.iter().any(|(n, _)| *n == name) {
                                return Err(p
                                    .err_at(
                                        t.column,
                                        ParseErrorKind::Duplicate,
                                        format!("proposition `{name}` declared twice"),
                                    )
                                    .into());
                            }
                            names.push((name, t.column));
                        }
                        Token::End => break,
                        other => {
                            return Err(p
                                .err_at(
                                    t.column,
                                    ParseErrorKind::Syntax,
                                    format!("expected a proposition name, found {other:?}"),
                                )
                                .into())
                        }
                    }
                }
                let set = PropSet::new(names.iter().map(|(n, _)| n.clone()))
                    .map_err(DslError::Machine)?;
                props = Some(set);
                phase = Phase::Props;
            }
            "state" => {
                if phase == Phase::Start {
                    return Err(p
                        .err_at(head.1, ParseErrorKind::Structure, "props must be declared before states")
                        .into());
                }
                if phase == Phase::Edges {
                    return Err(p
                        .err_at(head.1, ParseErrorKind::Structure, "states must be declared before edges")
                        .into());
                }
                let (name, name_col) = p.expect_ident("state name")?;
                if states.iter().any(|s| s.name == name) {
                    return Err(p
                        .err_at(
                            name_col,
                            ParseErrorKind::Duplicate,
                            format!("state `{name}` declared twice"),
                        )
                        .into());
                }
                let mut decl = StateDecl { name, init: false, terminal: false, bad: false };
                loop {
                    let t = p.bump();
                    match t.token {
                        Token::Ident(flag) => match flag.as_str() {
                            "init" if !decl.init && !decl.terminal && !decl.bad => decl.init = true,
                            "terminal" if !decl.terminal && !decl.bad => decl.terminal = true,
                            "bad" if !decl.bad => {
                                if !decl.terminal {
                                    return Err(p
                                        .err_at(
                                            t.column,
                                            ParseErrorKind::Structure,
                                            "`bad` may only tag terminal states",
                                        )
                                        .into());
                                }
                                decl.bad = true;
                            }
                            other => {
                                return Err(p
                                    .err_at(
                                        t.column,
                                        ParseErrorKind::Syntax,
                                        format!("unexpected state flag `{other}`"),
                                    )
                                    .into())
                            }
                        },
                        Token::End => break,
                        other => {
                            return Err(p
                                .err_at(
                                    t.column,
                                    ParseErrorKind::Syntax,
                                    format!("expected a state flag, found {other:?}"),
                                )
                                .into())
                        }
                    }
                }
                if decl.init && decl.terminal {
                    return Err(p
                        .err_at(
                            head.1,
                            ParseErrorKind::Structure,
                            "the initial state cannot be terminal",
                        )
                        .into());
                }
                if decl.init && states.iter().any(|s| s.init) {
                    return Err(p
                        .err_at(head.1, ParseErrorKind::Structure, "a second `init` state")
                        .into());
                }
                states.push(decl);
                phase = Phase::States;
            }
            "edge" => {
                if phase < Phase::States {
                    return Err(p
                        .err_at(head.1, ParseErrorKind::Structure, "edges must come after states")
                        .into());
                }
                let (src_name, src_col) = p.expect_ident("source state")?;
                p.expect(Token::Arrow, "`->`")?;
                let (dst_name, dst_col) = p.expect_ident("target state")?;
                let t = p.bump();
                let guard = match t.token {
                    Token::Ident(ref w) if w == "if" => {
                        let q = p.bump();
                        match q.token {
                            Token::Quoted(text, inner_col) => {
                                let props_ref = props.as_ref().expect("props parsed");
                                let f = parse_formula_at(&text, props_ref, line_no, inner_col - 1)?;
                                Guard::When(f)
                            }
                            other => {
                                return Err(p
                                    .err_at(
                                        q.column,
                                        ParseErrorKind::Syntax,
                                        format!("expected a quoted formula, found {other:?}"),
                                    )
                                    .into())
                            }
                        }
                    }
                    Token::Ident(ref w) if w == "otherwise" => Guard::Otherwise,
                    other => {
                        return Err(p
                            .err_at(
                                t.column,
                                ParseErrorKind::Syntax,
                                format!("expected `if` or `otherwise`, found {other:?}"),
                            )
                            .into())
                    }
                };
                let kw = p.expect_ident("`reward`")?;
                if kw.0 != "reward" {
                    return Err(p
                        .err_at(kw.1, ParseErrorKind::Syntax, "expected `reward`")
                        .into());
                }
                let t = p.bump();
                let reward = match t.token {
                    Token::Number(v) => v,
                    other => {
                        return Err(p
                            .err_at(
                                t.column,
                                ParseErrorKind::Syntax,
                                format!("expected a reward literal, found {other:?}"),
                            )
                            .into())
                    }
                };
                p.expect(Token::End, "end of line")?;
                edges.push(EdgeDecl {
                    line: line_no,
                    src: (src_name, src_col),
                    dst: (dst_name, dst_col),
                    guard,
                    reward,
                });
                phase = Phase::Edges;
            }
            other => {
                return Err(p
                    .err_at(
                        head.1,
                        ParseErrorKind::Syntax,
                        format!("unknown declaration `{other}`"),
                    )
                    .into())
            }
        }
    }

    let props = props.ok_or_else(|| ParseError {
        line: 1,
        column: 1,
        kind: ParseErrorKind::Structure,
        message: "empty source: expected a props declaration".into(),
    })?;

    // resolve states into the two index spaces
    let mut interiors: Vec<String> = Vec::new();
    let mut terminals: Vec<TerminalInfo> = Vec::new();
    let mut initial: Option<usize> = None;
    for s in &states {
        if s.terminal {
            terminals.push(TerminalInfo { name: s.name.clone(), bad: s.bad });
        } else {
            if s.init {
                initial = Some(interiors.len());
            }
            interiors.push(s.name.clone());
        }
    }
    let initial = initial.ok_or_else(|| ParseError {
        line: src.lines().count().max(1),
        column: 1,
        kind: ParseErrorKind::Structure,
        message: "no state is tagged `init`".into(),
    })?;

    let lookup = |name: &str, line: usize, column: usize| -> Result<RmStateId, ParseError> {
        if let Some(i) = interiors.iter().position(|n| n == name) {
            return Ok(RmStateId::Interior(i as u8));
        }
        if let Some(i) = terminals.iter().position(|t| t.name == name) {
            return Ok(RmStateId::Terminal(i as u8));
        }
        Err(ParseError {
            line,
            column,
            kind: ParseErrorKind::UnknownName,
            message: format!("unknown state `{name}`"),
        })
    };

    let mut resolved: Vec<Edge> = Vec::new();
    for e in edges {
        let source = lookup(&e.src.0, e.line, e.src.1)?;
        let target = lookup(&e.dst.0, e.line, e.dst.1)?;
        resolved.push(Edge { source, guard: e.guard, target, reward: e.reward });
    }

    let machine = SimpleRewardMachine::new(props, interiors, terminals, initial, resolved)
        .map_err(DslError::Machine)?;
    let report = machine.validate().map_err(DslError::Machine)?;
    if !report.is_ok() {
        return Err(DslError::Invalid(report));
    }
    Ok(machine)
}

struct LineParser {
    tokens: Vec<Spanned>,
    pos: usize,
    line: usize,
}

impl LineParser {
    fn bump(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, column: usize, kind: ParseErrorKind, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column, kind, message: msg.into() }
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        let t = self.bump();
        if std::mem::discriminant(&t.token) == std::mem::discriminant(&want) {
            Ok(())
        } else {
            Err(self.err_at(
                t.column,
                ParseErrorKind::Syntax,
                format!("expected {what}, found {:?}", t.token),
            ))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        let t = self.bump();
        match t.token {
            Token::Ident(name) => Ok((name, t.column)),
            other => Err(self.err_at(
                t.column,
                ParseErrorKind::Syntax,
                format!("expected {what}, found {other:?}"),
            )),
        }
    }
}
