//! Finite robust Markov games: explicit tables plus finite uncertainty sets
//! for rewards, transitions, perceived states, and executed actions.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Tolerance for transition rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Joint-action indexing: the last agent varies fastest, i.e. the joint
/// index of components `(a_0, .., a_{N-1})` is built by repeated
/// `idx = idx * |A_j| + a_j` over ascending `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointActionSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    n_joint: usize,
}

impl JointActionSpace {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(!sizes.is_empty() && sizes.iter().all(|&n| n > 0));
        let mut strides = vec![1; sizes.len()];
        for j in (0..sizes.len() - 1).rev() {
            strides[j] = strides[j + 1] * sizes[j + 1];
        }
        let n_joint = sizes.iter().product();
        JointActionSpace {
            sizes: sizes.to_vec(),
            strides,
            n_joint,
        }
    }

    pub fn len(&self) -> usize {
        self.n_joint
    }

    pub fn is_empty(&self) -> bool {
        self.n_joint == 0
    }

    pub fn n_agents(&self) -> usize {
        self.sizes.len()
    }

    pub fn size_of(&self, agent: usize) -> usize {
        self.sizes[agent]
    }

    pub fn index(&self, components: &[usize]) -> usize {
        debug_assert_eq!(components.len(), self.sizes.len());
        components
            .iter()
            .zip(&self.strides)
            .map(|(&a, &s)| a * s)
            .sum()
    }

    /// Agent `j`'s action inside a joint index.
    pub fn component(&self, joint: usize, agent: usize) -> usize {
        (joint / self.strides[agent]) % self.sizes[agent]
    }
}

/// Finite robust Markov game.
///
/// Table layout (all row-major):
/// - `rewards[agent][state][joint_action]` — nominal rewards.
/// - `transitions[state][joint_action][next_state]` — nominal kernel.
/// - `reward_sets[agent][state]` — candidate reward rows the adversary picks
///   from at that state; each candidate spans all joint actions.
/// - `transition_sets[state]` — candidate kernels at that state; each
///   candidate spans all joint actions.
/// - `state_perturbations[state]` — perceived-state candidates.
/// - `action_perturbations[agent][action]` — executed-action candidates.
///
/// Every uncertainty set must contain its nominal element (the identity for
/// the two perturbation maps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustGame {
    pub n_agents: usize,
    pub n_states: usize,
    pub n_actions: Vec<usize>,
    pub gamma: f64,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub reward_sets: Vec<Vec<Vec<Vec<f64>>>>,
    pub transition_sets: Vec<Vec<Vec<Vec<f64>>>>,
    pub state_perturbations: Vec<Vec<usize>>,
    pub action_perturbations: Vec<Vec<Vec<usize>>>,
    #[serde(skip)]
    cached: Option<GameCache>,
}

/// Derived lookup tables; rebuilt on construction/load, never serialized.
#[derive(Clone, Debug, PartialEq)]
pub struct GameCache {
    pub joint: JointActionSpace,
    /// Per joint action: the joint indices the executed action may become
    /// (Cartesian product of per-agent candidates).
    pub exec_candidates: Vec<Vec<usize>>,
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("game shape error: {0}")]
    Shape(String),
    #[error("transition row (state {state}, joint action {joint}) sums to {sum}, not 1")]
    RowSum { state: usize, joint: usize, sum: f64 },
    #[error("negative transition probability at state {state}, joint action {joint}")]
    NegativeProbability { state: usize, joint: usize },
    #[error("{what} uncertainty set at {at} is empty")]
    EmptySet { what: &'static str, at: String },
    #[error("{what} uncertainty set at {at} does not contain the nominal element")]
    MissingNominal { what: &'static str, at: String },
    #[error("perturbation candidate out of range at {0}")]
    BadCandidate(String),
    #[error("gamma must lie in [0, 1), got {0}")]
    BadGamma(f64),
}

impl RobustGame {
    /// Validates all invariants and builds the derived caches.
    pub fn new(
        n_agents: usize,
        n_states: usize,
        n_actions: Vec<usize>,
        gamma: f64,
        rewards: Vec<Vec<Vec<f64>>>,
        transitions: Vec<Vec<Vec<f64>>>,
        reward_sets: Vec<Vec<Vec<Vec<f64>>>>,
        transition_sets: Vec<Vec<Vec<Vec<f64>>>>,
        state_perturbations: Vec<Vec<usize>>,
        action_perturbations: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self, GameError> {
        let mut game = RobustGame {
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
            cached: None,
        };
        game.validate_and_cache()?;
        Ok(game)
    }

    /// A game with singleton nominal uncertainty sets and identity
    /// perturbations; the degenerate case that must reduce to the standard
    /// Bellman backup.
    pub fn singleton_nominal(
        n_agents: usize,
        n_states: usize,
        n_actions: Vec<usize>,
        gamma: f64,
        rewards: Vec<Vec<Vec<f64>>>,
        transitions: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, GameError> {
        let reward_sets = (0..n_agents)
            .map(|i| (0..n_states).map(|s| vec![rewards[i][s].clone()]).collect())
            .collect();
        let transition_sets = (0..n_states).map(|s| vec![transitions[s].clone()]).collect();
        let state_perturbations = (0..n_states).map(|s| vec![s]).collect();
        let action_perturbations = (0..n_agents)
            .map(|i| (0..n_actions[i]).map(|a| vec![a]).collect())
            .collect();
        Self::new(
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
    }

    pub fn joint(&self) -> &JointActionSpace {
        &self.cache().joint
    }

    pub fn cache(&self) -> &GameCache {
        self.cached.as_ref().expect("RobustGame cache built on construction")
    }

    fn validate_and_cache(&mut self) -> Result<(), GameError> {
        if self.n_agents == 0 || self.n_states == 0 {
            return Err(GameError::Shape("need at least one agent and one state".into()));
        }
        if self.n_actions.len() != self.n_agents || self.n_actions.iter().any(|&n| n == 0) {
            return Err(GameError::Shape("n_actions must list a positive size per agent".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(GameError::BadGamma(self.gamma));
        }
        let joint = JointActionSpace::new(&self.n_actions);
        let n_joint = joint.len();

        let shape_err = |msg: String| Err(GameError::Shape(msg));
        if self.rewards.len() != self.n_agents {
            return shape_err("rewards must have one block per agent".into());
        }
        for (i, per_state) in self.rewards.iter().enumerate() {
            if per_state.len() != self.n_states {
                return shape_err(format!("rewards[{i}] must have one row per state"));
            }
            for (s, row) in per_state.iter().enumerate() {
                if row.len() != n_joint {
                    return shape_err(format!("rewards[{i}][{s}] must span all joint actions"));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return shape_err(format!("rewards[{i}][{s}] contains non-finite values"));
                }
            }
        }
        if self.transitions.len() != self.n_states {
            return shape_err("transitions must have one block per state".into());
        }
        let check_kernel = |kernel: &Vec<Vec<f64>>, state: usize| -> Result<(), GameError> {
            if kernel.len() != n_joint {
                return Err(GameError::Shape(format!(
                    "transition kernel at state {state} must span all joint actions"
                )));
            }
            for (joint_a, row) in kernel.iter().enumerate() {
                if row.len() != self.n_states {
                    return Err(GameError::Shape(format!(
                        "transition row (state {state}, joint {joint_a}) has wrong length"
                    )));
                }
                if row.iter().any(|&p| p < 0.0) {
                    return Err(GameError::NegativeProbability { state, joint: joint_a });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(GameError::RowSum { state, joint: joint_a, sum });
                }
            }
            Ok(())
        };
        for (s, kernel) in self.transitions.iter().enumerate() {
            check_kernel(kernel, s)?;
        }

        if self.reward_sets.len() != self.n_agents {
            return shape_err("reward_sets must have one block per agent".into());
        }
        for (i, per_state) in self.reward_sets.iter().enumerate() {
            if per_state.len() != self.n_states {
                return shape_err(format!("reward_sets[{i}] must have one set per state"));
            }
            for (s, set) in per_state.iter().enumerate() {
                if set.is_empty() {
                    return Err(GameError::EmptySet {
                        what: "reward",
                        at: format!("agent {i}, state {s}"),
                    });
                }
                for cand in set {
                    if cand.len() != n_joint || cand.iter().any(|v| !v.is_finite()) {
                        return shape_err(format!("reward candidate at agent {i}, state {s} malformed"));
                    }
                }
                if !set.iter().any(|c| c == &self.rewards[i][s]) {
                    return Err(GameError::MissingNominal {
                        what: "reward",
                        at: format!("agent {i}, state {s}"),
                    });
                }
            }
        }
        if self.transition_sets.len() != self.n_states {
            return shape_err("transition_sets must have one set per state".into());
        }
        for (s, set) in self.transition_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(GameError::EmptySet {
                    what: "transition",
                    at: format!("state {s}"),
                });
            }
            for kernel in set {
                check_kernel(kernel, s)?;
            }
            if !set.iter().any(|k| k == &self.transitions[s]) {
                return Err(GameError::MissingNominal {
                    what: "transition",
                    at: format!("state {s}"),
                });
            }
        }
        if self.state_perturbations.len() != self.n_states {
            return shape_err("state_perturbations must have one set per state".into());
        }
        for (s, set) in self.state_perturbations.iter().enumerate() {
            if set.is_empty() {
                return Err(GameError::EmptySet {
                    what: "perceived-state",
                    at: format!("state {s}"),
                });
            }
            if set.iter().any(|&c| c >= self.n_states) {
                return Err(GameError::BadCandidate(format!("state {s}")));
            }
            if !set.contains(&s) {
                return Err(GameError::MissingNominal {
                    what: "perceived-state",
                    at: format!("state {s}"),
                });
            }
        }
        if self.action_perturbations.len() != self.n_agents {
            return shape_err("action_perturbations must have one block per agent".into());
        }
        for (i, per_action) in self.action_perturbations.iter().enumerate() {
            if per_action.len() != self.n_actions[i] {
                return shape_err(format!("action_perturbations[{i}] must cover every action"));
            }
            for (a, set) in per_action.iter().enumerate() {
                if set.is_empty() {
                    return Err(GameError::EmptySet {
                        what: "executed-action",
                        at: format!("agent {i}, action {a}"),
                    });
                }
                if set.iter().any(|&c| c >= self.n_actions[i]) {
                    return Err(GameError::BadCandidate(format!("agent {i}, action {a}")));
                }
                if !set.contains(&a) {
                    return Err(GameError::MissingNominal {
                        what: "executed-action",
                        at: format!("agent {i}, action {a}"),
                    });
                }
            }
        }

        // Executed-action candidate joints per realized joint action.
        let mut exec_candidates = Vec::with_capacity(n_joint);
        for a_joint in 0..n_joint {
            let lists: Vec<&[usize]> = (0..self.n_agents)
                .map(|j| self.action_perturbations[j][joint.component(a_joint, j)].as_slice())
                .collect();
            let mut cands = Vec::new();
            for_each_assignment(&lists, |components| {
                cands.push(joint.index(components));
            });
            exec_candidates.push(cands);
        }

        self.cached = Some(GameCache { joint, exec_candidates });
        Ok(())
    }
}

/// Iterates the Cartesian product of the given index lists in odometer order
/// (last position fastest), passing each assignment to `f`.
pub fn for_each_assignment(lists: &[&[usize]], mut f: impl FnMut(&[usize])) {
    if lists.iter().any(|l| l.is_empty()) {
        return;
    }
    let mut cursor = vec![0usize; lists.len()];
    let mut current: Vec<usize> = lists.iter().map(|l| l[0]).collect();
    loop {
        f(&current);
        // Advance the odometer.
        let mut pos = lists.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < lists[pos].len() {
                current[pos] = lists[pos][cursor[pos]];
                break;
            }
            cursor[pos] = 0;
            current[pos] = lists[pos][0];
        }
    }
}

/// Per-agent, per-state values: `v[agent][state]`.
pub type ValueFunction = Vec<Vec<f64>>;

pub fn zero_values(game: &RobustGame) -> ValueFunction {
    vec![vec![0.0; game.n_states]; game.n_agents]
}

/// Sup-norm over all agents and states.
pub fn sup_norm_diff(a: &ValueFunction, b: &ValueFunction) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Stochastic policies over perceived states: `profile[agent][state][action]`,
/// rows summing to one.
pub type FixedPolicyProfile = Vec<Vec<Vec<f64>>>;

pub fn validate_profile(game: &RobustGame, profile: &FixedPolicyProfile) -> Result<(), GameError> {
    if profile.len() != game.n_agents {
        return Err(GameError::Shape("profile must cover every agent".into()));
    }
    for (i, per_state) in profile.iter().enumerate() {
        if per_state.len() != game.n_states {
            return Err(GameError::Shape(format!("profile[{i}] must cover every state")));
        }
        for (s, row) in per_state.iter().enumerate() {
            if row.len() != game.n_actions[i] {
                return Err(GameError::Shape(format!("profile[{i}][{s}] has wrong arity")));
            }
            if row.iter().any(|&p| p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(GameError::Shape(format!("profile[{i}][{s}] is not a distribution")));
            }
        }
    }
    Ok(())
}

/// Uniform-random policy rows for every agent and state.
pub fn uniform_profile(game: &RobustGame) -> FixedPolicyProfile {
    (0..game.n_agents)
        .map(|i| vec![vec![1.0 / game.n_actions[i] as f64; game.n_actions[i]]; game.n_states])
        .collect()
}

#[derive(Debug, Error)]
pub enum GameFileError {
    #[error("game file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("game file parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] GameError),
}

/// Loads a game from its JSON description and validates it.
pub fn load_game(path: &Path) -> Result<RobustGame, GameFileError> {
    let text = std::fs::read_to_string(path)?;
    let mut game: RobustGame = serde_json::from_str(&text)?;
    game.validate_and_cache()?;
    Ok(game)
}

/// Writes the JSON description (pretty-printed, stable field order).
pub fn save_game(game: &RobustGame, path: &Path) -> Result<(), GameFileError> {
    let text = serde_json::to_string_pretty(game)?;
    std::fs::write(path, text)?;
    Ok(())
}
