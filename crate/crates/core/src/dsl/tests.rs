use super::*;
use crate::rm::TruthAssignment;

const COFFEE: &str = include_str!("../../../../tasks/office_1_coffee.rm");

fn props_cd() -> PropSet {
    PropSet::new(["a", "b", "c", "d"]).unwrap()
}

#[test]
fn formula_parsing_follows_precedence() {
    let props = props_cd();
    let a = Formula::atom(props.get("a").unwrap());
    let b = Formula::atom(props.get("b").unwrap());
    let c = Formula::atom(props.get("c").unwrap());
    let d = Formula::atom(props.get("d").unwrap());

    assert_eq!(
        parse_formula("c & !d", &props).unwrap(),
        Formula::and(c.clone(), Formula::not(d.clone()))
    );
    assert_eq!(
        parse_formula("a | b & c", &props).unwrap(),
        Formula::or(a.clone(), Formula::and(b.clone(), c.clone()))
    );
    assert_eq!(
        parse_formula("!(a | b)", &props).unwrap(),
        Formula::not(Formula::or(a.clone(), b.clone()))
    );
    // left association
    assert_eq!(
        parse_formula("a & b & c", &props).unwrap(),
        Formula::and(Formula::and(a.clone(), b.clone()), c.clone())
    );
    assert_eq!(parse_formula("true", &props).unwrap(), Formula::True);
    assert_eq!(parse_formula("false", &props).unwrap(), Formula::False);
}

#[test]
fn trailing_operator_is_a_syntax_error() {
    let props = props_cd();
    let err = parse_formula("a &", &props).unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::Syntax);
    assert_eq!(err.line, 1);
    assert!(err.column >= 3, "column {} should be at or after the `&`", err.column);
}

#[test]
fn unknown_atom_is_pinpointed() {
    let props = props_cd();
    let err = parse_formula("a & zz", &props).unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::UnknownName);
    assert_eq!((err.line, err.column), (1, 5));
}

#[test]
fn coffee_fixture_parses_to_the_documented_shape() {
    let m = parse_rm(COFFEE).unwrap();
    assert_eq!(m.n_interior(), 2);
    assert_eq!(m.n_terminal(), 2);
    assert_eq!(m.edges().len(), 6);
    assert_eq!(m.state_name(m.initial()), "u0");
    assert!(m.is_bad(m.state_by_name("fail").unwrap()));
}

#[test]
fn two_init_states_is_a_structure_error() {
    let src = "props: a\nstate: u0 init\nstate: u1 init\n";
    match parse_rm(src).unwrap_err() {
        DslError::Parse(e) => {
            assert_eq!(e.kind, ParseErrorKind::Structure);
            assert_eq!(e.line, 3);
        }
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn overlapping_guards_surface_as_validation_errors() {
    let src = "\
props: a b
state: u0 init
edge: u0 -> u0 if \"a\" reward 0
edge: u0 -> u0 if \"a & b\" reward 0
edge: u0 -> u0 otherwise reward 0
";
    match parse_rm(src).unwrap_err() {
        DslError::Invalid(report) => {
            let text = report.to_string();
            assert!(text.contains("overlap"), "{text}");
            assert!(text.contains("a, b"), "witness must be listed: {text}");
        }
        other => panic!("expected validation failure, got {other}"),
    }
}

#[test]
fn edge_before_states_is_a_structure_error() {
    let src = "props: a\nedge: u0 -> u0 otherwise reward 0\n";
    match parse_rm(src).unwrap_err() {
        DslError::Parse(e) => assert_eq!(e.kind, ParseErrorKind::Structure),
        other => panic!("unexpected: {other}"),
    }
}

#[test]
fn unknown_state_reference() {
    let src = "props: a\nstate: u0 init\nedge: u0 -> nowhere otherwise reward 0\n";
    match parse_rm(src).unwrap_err() {
        DslError::Parse(e) => {
            assert_eq!(e.kind, ParseErrorKind::UnknownName);
            assert_eq!(e.line, 3);
        }
        other => panic!("unexpected: {other}"),
    }
}

#[test]
fn scientific_notation_is_rejected() {
    let src = "props: a\nstate: u0 init\nedge: u0 -> u0 otherwise reward 1e5\n";
    assert!(matches!(parse_rm(src), Err(DslError::Parse(_))));
}

#[test]
fn roundtrip_preserves_stepping_exactly() {
    let m = parse_rm(COFFEE).unwrap();
    let text = serialize_rm(&m);
    let back = parse_rm(&text).unwrap();
    assert_eq!(m.n_interior(), back.n_interior());
    for sigma in TruthAssignment::enumerate(m.props().len()) {
        for ui in 0..m.n_interior() {
            let u = crate::rm::RmStateId::Interior(ui as u8);
            let a = m.step(u, sigma).unwrap();
            let b = back.step(u, sigma).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }
    // canonical output is a fixed point
    assert_eq!(text, serialize_rm(&back));
}

#[test]
fn minimal_machine_serializes_to_three_lines() {
    let src = "props:\nstate: u0 init\nedge: u0 -> u0 otherwise reward 1\n";
    let m = parse_rm(src).unwrap();
    let text = serialize_rm(&m);
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text, src.replace("props:\n", "props:\n")); // identical canonical form
}

#[test]
fn formula_rendering_reparses_to_the_same_tree() {
    let props = props_cd();
    let cases = [
        "a & !d",
        "a | b & c",
        "!(a | b)",
        "a & b & c",
        "a | b | c & !d",
        "!(a & (b | !c)) | d",
        "true",
        "false & a",
    ];
    for case in cases {
        let f = parse_formula(case, &props).unwrap();
        let rendered = format_formula(&f, &props);
        let re = parse_formula(&rendered, &props).unwrap();
        assert_eq!(f, re, "case `{case}` rendered as `{rendered}`");
    }
}
