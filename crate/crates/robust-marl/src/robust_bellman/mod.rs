//! Maximin robust Bellman operator over finite robust Markov games, value
//! iteration to its fixed point, and numerical verification that the
//! operator contracts with modulus gamma.
//!
//! The per-agent backup at a true state `s` maximizes over the agent's own
//! pure actions and minimizes over an adversary that picks, jointly and
//! per-state: one transition kernel, one reward row, a perceived state for
//! every *other* agent (their fixed policies are evaluated at those), and an
//! executed-action substitute for each realized action. Rewards and
//! transitions are always evaluated at the true state with the perturbed
//! executed actions. The maximizing agent acts on the true state, so its own
//! perceived-state channel cannot influence its one-step backup and is not
//! enumerated.
//!
//! Every adversary choice yields a value affine in `v` whose transition
//! coefficients are non-negative and sum to one; max-min over finitely many
//! such functions is monotone, shifts constants by `gamma`, and contracts in
//! the sup norm. [`verify_contraction`] checks that inequality directly on
//! random value-function pairs.

pub mod game;
pub mod random;

pub use game::{
    for_each_assignment, load_game, save_game, sup_norm_diff, uniform_profile, validate_profile,
    zero_values, FixedPolicyProfile, GameError, GameFileError, JointActionSpace, RobustGame,
    ValueFunction,
};
pub use random::{random_game, random_profile, random_values, GameGenConfig};

use rand::Rng;
use thiserror::Error;

/// Worst-case one-step payoffs per realized joint action for a fixed
/// transition kernel and reward row: the adversary substitutes whichever
/// candidate executed action minimizes `r(executed) + gamma * P(executed) . v`.
fn worst_case_q(game: &RobustGame, kernel: &[Vec<f64>], reward_row: &[f64], v_agent: &[f64]) -> Vec<f64> {
    let cache = game.cache();
    let n_joint = cache.joint.len();
    // Payoff of each executed joint action; shared by every realized action
    // that can be perturbed into it.
    let mut executed = vec![0.0; n_joint];
    for (a_exec, value) in executed.iter_mut().enumerate() {
        let row = &kernel[a_exec];
        let mut acc = 0.0;
        for sp in 0..game.n_states {
            acc += row[sp] * v_agent[sp];
        }
        *value = reward_row[a_exec] + game.gamma * acc;
    }
    (0..n_joint)
        .map(|a| {
            cache.exec_candidates[a]
                .iter()
                .map(|&c| executed[c])
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Worst-case value of each pure action of `agent` at state `s`:
/// `min` over the adversary's joint choices of the expected one-step payoff,
/// with the other agents playing `others` at their perceived states.
pub fn robust_action_values(
    game: &RobustGame,
    agent: usize,
    others: &FixedPolicyProfile,
    v: &ValueFunction,
    s: usize,
) -> Vec<f64> {
    let joint = game.joint();
    let n_own = game.n_actions[agent];
    let other_agents: Vec<usize> = (0..game.n_agents).filter(|&j| j != agent).collect();
    let perception_lists: Vec<&[usize]> = other_agents
        .iter()
        .map(|_| game.state_perturbations[s].as_slice())
        .collect();

    let mut best = vec![f64::INFINITY; n_own];
    for kernel in &game.transition_sets[s] {
        for reward_row in &game.reward_sets[agent][s] {
            let q = worst_case_q(game, kernel, reward_row, &v[agent]);
            for_each_assignment(&perception_lists, |perceived| {
                let mut totals = vec![0.0; n_own];
                for (a_joint, &qa) in q.iter().enumerate() {
                    let mut w = 1.0;
                    for (k, &j) in other_agents.iter().enumerate() {
                        w *= others[j][perceived[k]][joint.component(a_joint, j)];
                    }
                    totals[joint.component(a_joint, agent)] += w * qa;
                }
                for (b, t) in best.iter_mut().zip(&totals) {
                    *b = b.min(*t);
                }
            });
        }
    }
    best
}

/// The maximin backup: best pure action against the worst adversary.
pub fn robust_backup(
    game: &RobustGame,
    agent: usize,
    others: &FixedPolicyProfile,
    v: &ValueFunction,
    s: usize,
) -> f64 {
    robust_action_values(game, agent, others, v, s)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Applies the operator at every (agent, state); a pure function of `v`.
pub fn apply_operator(game: &RobustGame, others: &FixedPolicyProfile, v: &ValueFunction) -> ValueFunction {
    (0..game.n_agents)
        .map(|i| (0..game.n_states).map(|s| robust_backup(game, i, others, v, s)).collect())
        .collect()
}

#[derive(Clone, Debug)]
pub struct ValueIterationResult {
    pub values: ValueFunction,
    pub iterations: usize,
    /// Residual after the first application, for convergence-rate checks.
    pub first_residual: f64,
    pub final_residual: f64,
}

#[derive(Debug, Error)]
#[error("value iteration did not reach residual {tol} in {max_iters} iterations (last {residual})")]
pub struct NonConvergence {
    pub tol: f64,
    pub max_iters: usize,
    pub residual: f64,
}

/// Iterates the operator from zero until the sup-norm residual drops to
/// `tol`. The fixed point is unique, so the result is
/// initialization-independent up to `2 tol / (1 - gamma)`.
pub fn value_iterate(
    game: &RobustGame,
    others: &FixedPolicyProfile,
    tol: f64,
    max_iters: usize,
) -> Result<ValueIterationResult, NonConvergence> {
    value_iterate_from(game, others, zero_values(game), tol, max_iters)
}

pub fn value_iterate_from(
    game: &RobustGame,
    others: &FixedPolicyProfile,
    init: ValueFunction,
    tol: f64,
    max_iters: usize,
) -> Result<ValueIterationResult, NonConvergence> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut v = init;
    let mut first_residual = f64::NAN;
    let mut residual = f64::INFINITY;
    for k in 0..max_iters {
        let next = apply_operator(game, others, &v);
        residual = sup_norm_diff(&next, &v);
        if k == 0 {
            first_residual = residual;
        }
        v = next;
        if residual <= tol {
            return Ok(ValueIterationResult {
                values: v,
                iterations: k + 1,
                first_residual,
                final_residual: residual,
            });
        }
    }
    Err(NonConvergence {
        tol,
        max_iters,
        residual,
    })
}

/// Draws `trials` random value-function pairs and returns the largest
/// observed ratio `||Lu - Lv|| / ||u - v||` (sup norms over agents and
/// states). The contraction property promises this never exceeds gamma.
pub fn verify_contraction<R: Rng + ?Sized>(
    game: &RobustGame,
    others: &FixedPolicyProfile,
    trials: usize,
    rng: &mut R,
) -> f64 {
    assert!(trials >= 1);
    let mut max_ratio = 0.0f64;
    for _ in 0..trials {
        let u = random_values(game, rng);
        let v = random_values(game, rng);
        let den = sup_norm_diff(&u, &v);
        if den == 0.0 {
            continue;
        }
        let num = sup_norm_diff(&apply_operator(game, others, &u), &apply_operator(game, others, &v));
        max_ratio = max_ratio.max(num / den);
    }
    max_ratio
}

/// Pure best responses read off the backup: for every agent and state the
/// lowest-index action attaining the worst-case maximum.
pub fn greedy_profile(game: &RobustGame, v: &ValueFunction, others: &FixedPolicyProfile) -> FixedPolicyProfile {
    (0..game.n_agents)
        .map(|i| {
            (0..game.n_states)
                .map(|s| {
                    let action_values = robust_action_values(game, i, others, v, s);
                    let mut best = 0usize;
                    for (a, &value) in action_values.iter().enumerate() {
                        if value > action_values[best] {
                            best = a;
                        }
                    }
                    let mut row = vec![0.0; game.n_actions[i]];
                    row[best] = 1.0;
                    row
                })
                .collect()
        })
        .collect()
}
