//! Random generation of robust games, policy profiles, and value functions
//! for verification sweeps and tests.

use rand::Rng;
use std::ops::RangeInclusive;

use super::game::{FixedPolicyProfile, RobustGame, ValueFunction};

#[derive(Clone, Debug)]
pub struct GameGenConfig {
    pub n_agents: RangeInclusive<usize>,
    pub n_states: RangeInclusive<usize>,
    /// Per-agent action count range.
    pub n_actions: RangeInclusive<usize>,
    /// Maximum elements per uncertainty set (actual sizes drawn in 1..=max).
    pub max_set_len: usize,
    /// Discounts cycled through by repeated generation; one is drawn per game.
    pub gammas: Vec<f64>,
}

impl Default for GameGenConfig {
    fn default() -> Self {
        GameGenConfig {
            n_agents: 2..=3,
            n_states: 2..=6,
            n_actions: 1..=3,
            max_set_len: 4,
            gammas: vec![0.5, 0.9, 0.99],
        }
    }
}

fn random_stochastic_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Strictly positive entries so normalization is well conditioned.
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

fn random_kernel<R: Rng + ?Sized>(n_joint: usize, n_states: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n_joint).map(|_| random_stochastic_row(n_states, rng)).collect()
}

/// Draws a validated random game under the size caps in `cfg`. Every
/// uncertainty set lists its nominal element first.
pub fn random_game<R: Rng + ?Sized>(cfg: &GameGenConfig, rng: &mut R) -> RobustGame {
    let n_agents = rng.random_range(cfg.n_agents.clone());
    let n_states = rng.random_range(cfg.n_states.clone());
    let n_actions: Vec<usize> = (0..n_agents)
        .map(|_| rng.random_range(cfg.n_actions.clone()))
        .collect();
    let n_joint: usize = n_actions.iter().product();
    let gamma = cfg.gammas[rng.random_range(0..cfg.gammas.len())];

    let rewards: Vec<Vec<Vec<f64>>> = (0..n_agents)
        .map(|_| {
            (0..n_states)
                .map(|_| (0..n_joint).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    let transitions: Vec<Vec<Vec<f64>>> = (0..n_states)
        .map(|_| random_kernel(n_joint, n_states, rng))
        .collect();

    let mut set_len = |rng: &mut R| rng.random_range(1..=cfg.max_set_len.max(1));

    let reward_sets: Vec<Vec<Vec<Vec<f64>>>> = (0..n_agents)
        .map(|i| {
            (0..n_states)
                .map(|s| {
                    let mut set = vec![rewards[i][s].clone()];
                    for _ in 1..set_len(rng) {
                        set.push(
                            rewards[i][s]
                                .iter()
                                .map(|r| r + rng.random_range(-0.5..0.5))
                                .collect(),
                        );
                    }
                    set
                })
                .collect()
        })
        .collect();
    let transition_sets: Vec<Vec<Vec<Vec<f64>>>> = (0..n_states)
        .map(|s| {
            let mut set = vec![transitions[s].clone()];
            for _ in 1..set_len(rng) {
                set.push(random_kernel(n_joint, n_states, rng));
            }
            set
        })
        .collect();
    let state_perturbations: Vec<Vec<usize>> = (0..n_states)
        .map(|s| {
            let mut set = vec![s];
            for _ in 1..set_len(rng) {
                let cand = rng.random_range(0..n_states);
                if !set.contains(&cand) {
                    set.push(cand);
                }
            }
            set
        })
        .collect();
    let action_perturbations: Vec<Vec<Vec<usize>>> = (0..n_agents)
        .map(|i| {
            (0..n_actions[i])
                .map(|a| {
                    let mut set = vec![a];
                    for _ in 1..set_len(rng) {
                        let cand = rng.random_range(0..n_actions[i]);
                        if !set.contains(&cand) {
                            set.push(cand);
                        }
                    }
                    set
                })
                .collect()
        })
        .collect();

    RobustGame::new(
        n_agents,
        n_states,
        n_actions,
        gamma,
        rewards,
        transitions,
        reward_sets,
        transition_sets,
        state_perturbations,
        action_perturbations,
    )
    .expect("generated game is valid by construction")
}

/// Random stochastic policy rows for every agent and state.
pub fn random_profile<R: Rng + ?Sized>(game: &RobustGame, rng: &mut R) -> FixedPolicyProfile {
    (0..game.n_agents)
        .map(|i| {
            (0..game.n_states)
                .map(|_| random_stochastic_row(game.n_actions[i], rng))
                .collect()
        })
        .collect()
}

/// Random value function with entries in [-5, 5].
pub fn random_values<R: Rng + ?Sized>(game: &RobustGame, rng: &mut R) -> ValueFunction {
    (0..game.n_agents)
        .map(|_| (0..game.n_states).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect()
}
