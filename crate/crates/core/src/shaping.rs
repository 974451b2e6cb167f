//! Automated potential-based reward shaping.
//!
//! The machine itself is a tiny MDP: states are machine states, actions are
//! truth assignments, transitions follow the guard table, rewards are the
//! edge outputs, and terminals absorb at zero. Value iteration over that MDP
//! gives `v*`, and the potential of a machine state is `Φ(u) = -v*(u)`
//! (terminals are pinned at zero). Rewriting every edge reward `r` as
//! `r + γ·Φ(target) - Φ(source)` leaves the optimal policies of the full
//! problem untouched while paying the agent for progress toward completion.
//!
//! Shaping is exposed as a machine-to-machine transformation so every
//! learner composes with it unchanged.

use thiserror::Error;

use crate::rm::{Edge, RmError, RmStateId, SimpleRewardMachine, TruthAssignment};

#[derive(Debug, Error)]
pub enum ShapingError {
    #[error("shaping needs a discount strictly below 1, got {0}")]
    BadGamma(f64),
    #[error("{0}")]
    Machine(#[from] RmError),
}

/// Per-state optimal values of the machine-as-MDP, and the potentials
/// derived from them.
#[derive(Clone, Debug)]
pub struct RmPotential {
    v_star: Vec<f64>,
    pub gamma: f64,
}

impl RmPotential {
    pub fn v_star(&self, u: RmStateId) -> f64 {
        match u {
            RmStateId::Interior(i) => self.v_star[i as usize],
            RmStateId::Terminal(_) => 0.0,
        }
    }

    /// `Φ(u) = -v*(u)`; zero on terminals.
    pub fn potential(&self, u: RmStateId) -> f64 {
        -self.v_star(u)
    }
}

/// Value iteration over the machine. Sweeps update states in index order,
/// in place, until the largest change drops to `tol`.
///
/// A literal "iterate while anything changes" loop only terminates in
/// floating point once updates fall below representable precision, so the
/// cutoff is an explicit tolerance (the shipped task machines converge
/// exactly, in at most one sweep per machine state, because their reward
/// structure is acyclic).
pub fn rm_value_iteration(
    m: &SimpleRewardMachine,
    gamma: f64,
    tol: f64,
) -> Result<RmPotential, ShapingError> {
    Ok(rm_value_iteration_history(m, gamma, tol)?.0)
}

/// Distinct `(reward, successor)` outcomes actually reachable from each
/// interior state; taking the max over these is the same as maxing over all
/// `2^|P|` assignments, without re-walking the guards every sweep.
fn reachable_outcomes(
    m: &SimpleRewardMachine,
) -> Result<Vec<Vec<(f64, RmStateId)>>, RmError> {
    let mut per_state = vec![Vec::<(f64, RmStateId)>::new(); m.n_interior()];
    for ui in 0..m.n_interior() {
        let u = RmStateId::Interior(ui as u8);
        for sigma in TruthAssignment::enumerate(m.props().len()) {
            let (target, reward) = m.step(u, sigma)?;
            let seen = per_state[ui]
                .iter()
                .any(|&(r, t)| r.to_bits() == reward.to_bits() && t == target);
            if !seen {
                per_state[ui].push((reward, target));
            }
        }
    }
    Ok(per_state)
}

fn rm_value_iteration_history(
    m: &SimpleRewardMachine,
    gamma: f64,
    tol: f64,
) -> Result<(RmPotential, Vec<Vec<f64>>), ShapingError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(ShapingError::BadGamma(gamma));
    }
    if m.props().len() > crate::rm::DEFAULT_PROP_LIMIT {
        return Err(ShapingError::Machine(RmError::EnumerationBound {
            props: m.props().len(),
            limit: crate::rm::DEFAULT_PROP_LIMIT,
        }));
    }
    let outcomes = reachable_outcomes(m).map_err(ShapingError::Machine)?;
    let mut v = vec![0.0f64; m.n_interior()];
    let mut history = vec![v.clone()];
    loop {
        let mut e = 0.0f64;
        for ui in 0..m.n_interior() {
            let best = outcomes[ui]
                .iter()
                .map(|&(r, target)| {
                    let tail = match target {
                        RmStateId::Interior(i) => v[i as usize],
                        RmStateId::Terminal(_) => 0.0,
                    };
                    r + gamma * tail
                })
                .fold(f64::NEG_INFINITY, f64::max);
            e = e.max((v[ui] - best).abs());
            v[ui] = best;
        }
        history.push(v.clone());
        if e <= tol {
            break;
        }
    }
    Ok((RmPotential { v_star: v, gamma }, history))
}

/// The potential-based rewrite of one reward.
pub fn shape_reward(r: f64, phi_u: f64, phi_u_next: f64, gamma: f64) -> f64 {
    r + gamma * phi_u_next - phi_u
}

/// Same machine, shaped edge rewards. Usable by every learner unchanged.
pub fn shaped(
    m: &SimpleRewardMachine,
    gamma: f64,
    tol: f64,
) -> Result<SimpleRewardMachine, ShapingError> {
    let pot = rm_value_iteration(m, gamma, tol)?;
    let edges = m
        .edges()
        .iter()
        .map(|e| Edge {
            source: e.source,
            guard: e.guard.clone(),
            target: e.target,
            reward: shape_reward(e.reward, pot.potential(e.source), pot.potential(e.target), gamma),
        })
        .collect();
    let interiors = (0..m.n_interior()).map(|i| m.interior_name(i).to_string()).collect();
    let terminals = (0..m.n_terminal()).map(|i| m.terminal_info(i).clone()).collect();
    let initial = m.initial().interior_index().unwrap();
    SimpleRewardMachine::new(m.props().clone(), interiors, terminals, initial, edges)
        .map_err(ShapingError::Machine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_rm;
    use crate::envs::office_tasks;
    use crate::rm::Guard;
    use rand::Rng;
    use rand::SeedableRng;

    const TOL: f64 = 1e-12;

    #[test]
    fn coffee_machine_values_and_potentials() {
        let rm = &office_tasks()[0].rm;
        let pot = rm_value_iteration(rm, 0.9, TOL).unwrap();
        assert!((pot.v_star(RmStateId::Interior(0)) - 0.9).abs() < 1e-9);
        assert!((pot.v_star(RmStateId::Interior(1)) - 1.0).abs() < 1e-9);
        assert!((pot.potential(RmStateId::Interior(0)) + 0.9).abs() < 1e-9);
        assert!((pot.potential(RmStateId::Interior(1)) + 1.0).abs() < 1e-9);
        assert_eq!(pot.potential(RmStateId::Terminal(0)), 0.0);
    }

    #[test]
    fn zero_reward_machine_has_zero_values() {
        let src = "props: a\nstate: u0 init\nstate: u1\nedge: u0 -> u1 if \"a\" reward 0\nedge: u0 -> u0 otherwise reward 0\nedge: u1 -> u0 if \"a\" reward 0\nedge: u1 -> u1 otherwise reward 0\n";
        let rm = parse_rm(src).unwrap();
        let pot = rm_value_iteration(&rm, 0.5, TOL).unwrap();
        assert_eq!(pot.v_star(RmStateId::Interior(0)), 0.0);
        assert_eq!(pot.v_star(RmStateId::Interior(1)), 0.0);
    }

    #[test]
    fn diamond_machine_values() {
        let rm = &office_tasks()[3].rm; // coffee-and-mail diamond
        let pot = rm_value_iteration(rm, 0.9, TOL).unwrap();
        let v = |name: &str| pot.v_star(rm.state_by_name(name).unwrap());
        assert!((v("u3") - 1.0).abs() < 1e-9);
        assert!((v("u1") - 0.9).abs() < 1e-9);
        assert!((v("u2") - 0.9).abs() < 1e-9);
        assert!((v("u0") - 0.81).abs() < 1e-9);
    }

    #[test]
    fn shaped_reward_cases() {
        // self-loop before progress: small positive nudge
        assert!((shape_reward(0.0, -0.9, -0.9, 0.9) - 0.09).abs() < 1e-12);
        // progress edge: shaping contributes nothing
        assert!((shape_reward(0.0, -0.9, -1.0, 0.9) - 0.0).abs() < 1e-12);
        // completing edge: original 1 plus the released potential
        assert!((shape_reward(1.0, -1.0, 0.0, 0.9) - 2.0).abs() < 1e-12);
        // failing from the first stage
        assert!((shape_reward(0.0, -0.9, 0.0, 0.9) - 0.9).abs() < 1e-12);
        // identity potential changes nothing
        assert_eq!(shape_reward(0.25, 0.0, 0.0, 0.9), 0.25);
    }

    #[test]
    fn shaped_coffee_machine_edge_totals() {
        let rm = &office_tasks()[0].rm;
        let shaped_rm = shaped(rm, 0.9, TOL).unwrap();
        let mut rewards: Vec<f64> = shaped_rm.edges().iter().map(|e| e.reward).collect();
        rewards.sort_by(f64::total_cmp);
        let mut expected = vec![0.09, 0.0, 0.9, 2.0, 0.1, 1.0];
        expected.sort_by(f64::total_cmp);
        for (got, want) in rewards.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-9, "got {rewards:?}");
        }
    }

    #[test]
    fn zero_reward_never_ending_machine_is_unchanged() {
        let src = "props: a\nstate: u0 init\nedge: u0 -> u0 otherwise reward 0\n";
        let rm = parse_rm(src).unwrap();
        let out = shaped(&rm, 0.9, TOL).unwrap();
        assert_eq!(out.edges()[0].reward, 0.0);
    }

    #[test]
    fn sweeps_are_monotone_from_zero_with_nonnegative_rewards() {
        for task in office_tasks().iter().chain(crate::envs::craft_tasks().iter()) {
            let (_, history) = rm_value_iteration_history(&task.rm, 0.9, TOL).unwrap();
            for w in history.windows(2) {
                for (before, after) in w[0].iter().zip(&w[1]) {
                    assert!(after >= before, "task {}", task.name);
                }
            }
        }
    }

    #[test]
    fn telescoping_along_random_label_sequences() {
        let mut rng = crate::mdprm::TrialRng::seed_from_u64(17);
        let gamma = 0.9;
        for task in office_tasks() {
            let rm = &task.rm;
            let shaped_rm = shaped(rm, gamma, TOL).unwrap();
            let pot = rm_value_iteration(rm, gamma, TOL).unwrap();
            let n = rm.props().len();
            for _ in 0..200 {
                let mut u = rm.initial();
                let mut plain = 0.0f64;
                let mut shaped_sum = 0.0f64;
                let mut discount = 1.0f64;
                let mut steps = 0;
                while !u.is_terminal() && steps < 40 {
                    let sigma = TruthAssignment::from_bits(rng.random_range(0..(1u32 << n)));
                    let (u2, r) = rm.step(u, sigma).unwrap();
                    let (u2b, rs) = shaped_rm.step(u, sigma).unwrap();
                    assert_eq!(u2, u2b);
                    plain += discount * r;
                    shaped_sum += discount * rs;
                    discount *= gamma;
                    u = u2;
                    steps += 1;
                }
                // telescoped tail: γ^T Φ(u_T) − Φ(u_0); Φ of a terminal is 0
                let want = plain + discount * pot.potential(u) - pot.potential(rm.initial());
                assert!(
                    (shaped_sum - want).abs() < 1e-9,
                    "shaped {shaped_sum} vs {want}"
                );
            }
        }
    }

    #[test]
    fn shaping_rejects_undiscounted_machines() {
        let rm = &office_tasks()[0].rm;
        assert!(matches!(rm_value_iteration(rm, 1.0, TOL), Err(ShapingError::BadGamma(_))));
    }

    #[test]
    fn guards_survive_shaping_untouched() {
        let rm = &office_tasks()[0].rm;
        let out = shaped(rm, 0.9, TOL).unwrap();
        assert_eq!(rm.edges().len(), out.edges().len());
        for (a, b) in rm.edges().iter().zip(out.edges()) {
            assert_eq!(a.source, b.source);
            assert_eq!(a.target, b.target);
            assert_eq!(
                matches!(a.guard, Guard::Otherwise),
                matches!(b.guard, Guard::Otherwise)
            );
        }
    }
}
