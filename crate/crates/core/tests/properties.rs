//! Property tests: machine determinism under generated formulas, text-format
//! round-trips, parser totality, and the windowed-metric bound.

use proptest::prelude::*;

use rmbench_core::dsl::{format_formula, parse_formula, parse_rm, serialize_rm};
use rmbench_core::envs::{office_tasks, GridAction, GridEnv};
use rmbench_core::mdprm::{run_episode, Mdprm, TrialRng};
use rmbench_core::rm::{
    Edge, Formula, Guard, Prop, PropSet, RmStateId, SimpleRewardMachine, TerminalInfo,
    TruthAssignment,
};

fn arb_formula(n_props: u8) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        (0..n_props).prop_map(|i| Formula::Atom(Prop::from_index(i as usize))),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::or(a, b)),
        ]
    })
}

// `Prop` is crate-private to construct; go through the name table instead.
fn props(n: u8) -> PropSet {
    PropSet::new((0..n).map(|i| format!("p{i}"))).unwrap()
}

prop_compose! {
    /// A machine with one guarded edge plus an otherwise edge per interior
    /// state: always deterministic and total, with arbitrary guard formulas.
    fn arb_machine()(
        n_props in 1u8..5,
        n_interior in 1usize..4,
        n_terminal in 0usize..3,
        seed_formulas in proptest::collection::vec(arb_formula(4), 1..4),
        targets in proptest::collection::vec((0usize..6, 0usize..6), 1..4),
        rewards in proptest::collection::vec(-2.0f64..2.0, 1..8),
    ) -> SimpleRewardMachine {
        let props = props(n_props);
        let interiors: Vec<String> = (0..n_interior).map(|i| format!("u{i}")).collect();
        let terminals: Vec<TerminalInfo> = (0..n_terminal)
            .map(|i| TerminalInfo { name: format!("t{i}"), bad: i % 2 == 1 })
            .collect();
        let pick_state = |raw: usize| {
            let total = n_interior + n_terminal;
            let idx = raw % total;
            if idx < n_interior {
                RmStateId::Interior(idx as u8)
            } else {
                RmStateId::Terminal((idx - n_interior) as u8)
            }
        };
        let mut edges = Vec::new();
        for ui in 0..n_interior {
            let source = RmStateId::Interior(ui as u8);
            let formula = seed_formulas[ui % seed_formulas.len()].clone();
            // clamp atoms into the live alphabet
            let formula = clamp_atoms(&formula, n_props);
            let (raw_a, raw_b) = targets[ui % targets.len()];
            edges.push(Edge {
                source,
                guard: Guard::When(formula),
                target: pick_state(raw_a),
                reward: rewards[(2 * ui) % rewards.len()],
            });
            edges.push(Edge {
                source,
                guard: Guard::Otherwise,
                target: pick_state(raw_b),
                reward: rewards[(2 * ui + 1) % rewards.len()],
            });
        }
        SimpleRewardMachine::new(props, interiors, terminals, 0, edges).unwrap()
    }
}

fn clamp_atoms(f: &Formula, n_props: u8) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(p) => Formula::Atom(Prop::from_index(p.index() % n_props as usize)),
        Formula::Not(inner) => Formula::not(clamp_atoms(inner, n_props)),
        Formula::And(a, b) => Formula::and(clamp_atoms(a, n_props), clamp_atoms(b, n_props)),
        Formula::Or(a, b) => Formula::or(clamp_atoms(a, n_props), clamp_atoms(b, n_props)),
    }
}

proptest! {
    /// Rendering and reparsing a formula gives back the same tree.
    #[test]
    fn formula_print_parse_roundtrip(f in arb_formula(4)) {
        let set = props(4);
        let text = format_formula(&f, &set);
        let back = parse_formula(&text, &set).unwrap();
        prop_assert_eq!(f, back);
    }

    /// Generated machines validate clean and step deterministically on
    /// every assignment.
    #[test]
    fn generated_machines_are_deterministic(m in arb_machine()) {
        prop_assert!(m.validate().unwrap().is_ok());
        for sigma in TruthAssignment::enumerate(m.props().len()) {
            for ui in 0..m.n_interior() {
                let u = RmStateId::Interior(ui as u8);
                let a = m.step(u, sigma).unwrap();
                let b = m.step(u, sigma).unwrap();
                prop_assert_eq!(a.0, b.0);
                prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
            }
        }
    }

    /// Serialize → parse preserves stepping exactly, and the canonical text
    /// is a fixed point of the serializer.
    #[test]
    fn machine_text_roundtrip(m in arb_machine()) {
        let text = serialize_rm(&m);
        let back = parse_rm(&text).unwrap();
        for sigma in TruthAssignment::enumerate(m.props().len()) {
            for ui in 0..m.n_interior() {
                let u = RmStateId::Interior(ui as u8);
                let (t1, r1) = m.step(u, sigma).unwrap();
                let (t2, r2) = back.step(u, sigma).unwrap();
                prop_assert_eq!(t1, t2);
                prop_assert_eq!(r1.to_bits(), r2.to_bits());
            }
        }
        prop_assert_eq!(text, serialize_rm(&back));
    }

    /// The parser returns errors, never panics, on arbitrary input.
    #[test]
    fn parser_is_total(input in "\\PC{0,200}") {
        let _ = parse_rm(&input);
        let _ = parse_formula(&input, &props(3));
    }
}

/// Random policies never beat the optimum: the windowed online metric of
/// any behaviour stays within one episode-reward of the normalized ceiling.
#[test]
fn windowed_metric_bound_under_random_play() {
    use rand::Rng;
    use rand::SeedableRng;
    let env = GridEnv::office_default();
    let task = Mdprm::from_task(&office_tasks()[0], env, 0.9).unwrap();
    let optimal = rmbench_core::oracle::optimal_avg_reward(std::slice::from_ref(&task), 1000)
        .unwrap()
        .aggregate;
    let window = 500usize;
    let mut rng = TrialRng::seed_from_u64(4);
    let mut rewards = Vec::new();
    while rewards.len() < 20_000 {
        for e in run_episode(
            &task,
            |_, _, r: &mut TrialRng| GridAction::from_index(r.random_range(0..4)),
            &mut rng,
            400,
        ) {
            rewards.push(e.r);
        }
    }
    let bound = optimal + 1.0 / window as f64;
    for k in (window..rewards.len()).step_by(100) {
        let metric: f64 = rewards[k - window..k].iter().sum::<f64>() / window as f64;
        assert!(metric <= bound + 1e-12, "windowed metric {metric} above {bound}");
    }
}
