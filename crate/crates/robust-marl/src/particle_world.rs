//! Deterministic 2D multi-particle simulator.
//!
//! Three tasks are supported:
//!
//! - **Cooperative Navigation (CN)**: 3 agents spread out to occupy 3
//!   landmarks while avoiding collisions. Shared reward.
//! - **Keep-Away (KA)**: 1 agent tries to reach a goal landmark (one of 2,
//!   chosen at reset); 1 adversary, which does not know the goal, is paid to
//!   sit on the goal and keep the agent away.
//! - **Physical Deception (PD)**: 2 cooperators cover 2 landmarks so that an
//!   adversary cannot tell which one is the true goal.
//!
//! Dynamics are a damped double integrator stepped at a fixed `world_dt`:
//! `v' = (1 - damping) * v + clip(a) * dt`, `p' = p + v' * dt`. Identical
//! `(spec, seed, action sequence)` inputs give bitwise-identical
//! trajectories. The step function reads only the true [`WorldState`]; agent
//! observations are produced separately by [`observe`], so perturbing what an
//! agent sees can never change physics except through the actions it returns.
//!
//! Entity order everywhere is: cooperative agents first, then adversaries,
//! then landmarks. Success predicates treat "within r" as `dist <= r`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::math::Vec2;
use crate::rng::derive_rng;

/// Penalty per colliding agent pair in Cooperative Navigation.
///
/// The tasks define collisions but no magnitude; 1.0 is this repo's
/// convention, as are `success_radius`/`contact_radius` defaults below.
pub const COLLISION_PENALTY: f64 = 1.0;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    /// Cooperative Navigation.
    Cn,
    /// Keep-Away.
    Ka,
    /// Physical Deception.
    Pd,
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvId::Cn => write!(f, "cn"),
            EnvId::Ka => write!(f, "ka"),
            EnvId::Pd => write!(f, "pd"),
        }
    }
}

/// Static description of an environment instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: EnvId,
    /// Cooperative agents (entity indices `0..n_agents`).
    pub n_agents: usize,
    /// Adversaries (entity indices `n_agents..n_agents + n_adversaries`).
    pub n_adversaries: usize,
    pub n_landmarks: usize,
    pub episode_len: u32,
    pub world_dt: f64,
    pub damping: f64,
    pub max_force: f64,
    pub contact_radius: f64,
    pub success_radius: f64,
}

impl EnvSpec {
    /// 3 agents, 3 landmarks, 25-step episodes.
    pub fn cooperative_navigation() -> Self {
        EnvSpec {
            env_id: EnvId::Cn,
            n_agents: 3,
            n_adversaries: 0,
            n_landmarks: 3,
            episode_len: 25,
            ..Self::base()
        }
    }

    /// 1 agent vs 1 adversary, 2 landmarks. Episodes run 100 steps, the
    /// horizon the success predicate is defined over.
    pub fn keep_away() -> Self {
        EnvSpec {
            env_id: EnvId::Ka,
            n_agents: 1,
            n_adversaries: 1,
            n_landmarks: 2,
            episode_len: 100,
            ..Self::base()
        }
    }

    /// 2 cooperators vs 1 adversary, 2 landmarks, 25-step episodes.
    pub fn physical_deception() -> Self {
        EnvSpec {
            env_id: EnvId::Pd,
            n_agents: 2,
            n_adversaries: 1,
            n_landmarks: 2,
            episode_len: 25,
            ..Self::base()
        }
    }

    pub fn for_env(env_id: EnvId) -> Self {
        match env_id {
            EnvId::Cn => Self::cooperative_navigation(),
            EnvId::Ka => Self::keep_away(),
            EnvId::Pd => Self::physical_deception(),
        }
    }

    fn base() -> Self {
        // max_force 5.0 matches the effective force scale of standard
        // multi-particle environments (unit action times sensitivity 5);
        // with 1.0 the terminal speed is 0.4 units/step-time and distant
        // landmarks are unreachable inside a 25-step episode.
        EnvSpec {
            env_id: EnvId::Cn,
            n_agents: 0,
            n_adversaries: 0,
            n_landmarks: 0,
            episode_len: 25,
            world_dt: 0.1,
            damping: 0.25,
            max_force: 5.0,
            contact_radius: 0.15,
            success_radius: 0.1,
        }
    }

    /// Checks entity counts against the task and the basic numeric ranges.
    pub fn validate(&self) -> Result<(), String> {
        let counts = (self.n_agents, self.n_adversaries, self.n_landmarks);
        let expected = match self.env_id {
            EnvId::Cn => (3, 0, 3),
            EnvId::Ka => (1, 1, 2),
            EnvId::Pd => (2, 1, 2),
        };
        if counts != expected {
            return Err(format!(
                "{} requires (agents, adversaries, landmarks) = {:?}, got {:?}",
                self.env_id, expected, counts
            ));
        }
        if self.episode_len == 0 {
            return Err("episode_len must be > 0".into());
        }
        if !(self.world_dt > 0.0) {
            return Err("world_dt must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err("damping must lie in [0, 1)".into());
        }
        if !(self.max_force > 0.0) {
            return Err("max_force must be > 0".into());
        }
        if !(self.success_radius > 0.0) {
            return Err("success_radius must be > 0".into());
        }
        if !(self.contact_radius > 0.0) {
            return Err("contact_radius must be > 0".into());
        }
        Ok(())
    }

    /// Movable entities: cooperative agents plus adversaries.
    pub fn n_movers(&self) -> usize {
        self.n_agents + self.n_adversaries
    }

    pub fn is_adversary(&self, mover: usize) -> bool {
        mover >= self.n_agents
    }

    /// Whether this mover observes the goal landmark's identity.
    /// Cooperators in KA/PD know the goal; adversaries never do; CN has none.
    pub fn goal_aware(&self, mover: usize) -> bool {
        match self.env_id {
            EnvId::Cn => false,
            EnvId::Ka | EnvId::Pd => !self.is_adversary(mover),
        }
    }

    pub fn has_goal(&self) -> bool {
        !matches!(self.env_id, EnvId::Cn)
    }

    /// Observation length for one mover:
    /// own velocity (2) + own position (2) + landmark offsets (2 each)
    /// + other-mover offsets (2 each) + goal offset (2, goal-aware only).
    pub fn obs_dim(&self, mover: usize) -> usize {
        4 + 2 * self.n_landmarks + 2 * (self.n_movers() - 1) + if self.goal_aware(mover) { 2 } else { 0 }
    }

    /// Input width of a centralized critic: all observations and all actions.
    pub fn joint_obs_action_dim(&self) -> usize {
        (0..self.n_movers()).map(|i| self.obs_dim(i) + 2).sum()
    }
}

/// True joint physical state. Only [`step`] evolves it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Mover positions, agents then adversaries.
    pub positions: Vec<Vec2>,
    /// Mover velocities, same order.
    pub velocities: Vec<Vec2>,
    pub landmark_positions: Vec<Vec2>,
    /// Goal landmark (KA/PD); `None` for CN.
    pub goal_index: Option<usize>,
    /// Steps taken so far; `0..=episode_len`.
    pub t: u32,
}

impl WorldState {
    pub fn goal_position(&self) -> Vec2 {
        self.landmark_positions[self.goal_index.expect("environment has no goal landmark")]
    }
}

/// Flat per-agent feature vector; layout documented on [`EnvSpec::obs_dim`].
pub type Observation = Vec<f64>;

/// One force vector per mover, agents then adversaries. Components are
/// clipped to `[-max_force, max_force]` by the physics before integration.
pub type JointAction = Vec<Vec2>;

/// Samples the initial state: mover and landmark positions uniform in
/// [-1, 1]^2, velocities zero, goal landmark drawn uniformly where the task
/// has one. The same seed always produces the same state.
pub fn reset(spec: &EnvSpec, seed: u64) -> WorldState {
    let mut rng = derive_rng(seed, &[stream_tags::ENV_RESET]);
    let draw = |rng: &mut rand_chacha::ChaCha12Rng| {
        let x = rng.random_range(-1.0..1.0);
        let y = rng.random_range(-1.0..1.0);
        Vec2::new(x, y)
    };
    let positions: Vec<Vec2> = (0..spec.n_movers()).map(|_| draw(&mut rng)).collect();
    let landmark_positions: Vec<Vec2> = (0..spec.n_landmarks).map(|_| draw(&mut rng)).collect();
    let goal_index = spec.has_goal().then(|| rng.random_range(0..spec.n_landmarks));
    WorldState {
        velocities: vec![Vec2::ZERO; spec.n_movers()],
        positions,
        landmark_positions,
        goal_index,
        t: 0,
    }
}

/// Advances the world by one step and returns `(next_state, rewards, done)`.
///
/// Rewards are evaluated on the post-step positions. Panics if called on a
/// finished episode (`t == episode_len`): that is a caller bug, not a
/// recoverable condition.
pub fn step(spec: &EnvSpec, state: &WorldState, actions: &JointAction) -> (WorldState, Vec<f64>, bool) {
    assert!(
        state.t < spec.episode_len,
        "step called on a finished episode (t = {} = episode_len)",
        state.t
    );
    assert_eq!(actions.len(), spec.n_movers(), "one action per mover required");

    let mut next = state.clone();
    for i in 0..spec.n_movers() {
        let force = actions[i].clamp_abs(spec.max_force);
        next.velocities[i] = next.velocities[i] * (1.0 - spec.damping) + force * spec.world_dt;
        next.positions[i] = next.positions[i] + next.velocities[i] * spec.world_dt;
    }
    next.t += 1;
    let done = next.t == spec.episode_len;
    let rewards = reward_of(spec, &next, actions);
    (next, rewards, done)
}

/// Per-mover rewards for a state.
///
/// - CN: all agents share `-(sum over landmarks of the nearest agent's
///   distance) - COLLISION_PENALTY * (number of colliding agent pairs)`.
/// - KA: agent gets `-d(agent, goal)`; the adversary gets
///   `-d(adversary, goal) + d(agent, goal)`.
/// - PD: cooperators share `-(min cooperator-to-goal distance)
///   + d(adversary, goal)`; the adversary gets `-d(adversary, goal)`.
///
/// `actions` is part of the contract for forward compatibility; none of the
/// current tasks shape rewards on forces.
pub fn reward_of(spec: &EnvSpec, state: &WorldState, _actions: &JointAction) -> Vec<f64> {
    match spec.env_id {
        EnvId::Cn => {
            let mut r = 0.0;
            for lm in &state.landmark_positions {
                let nearest = state
                    .positions
                    .iter()
                    .map(|p| p.dist(*lm))
                    .fold(f64::INFINITY, f64::min);
                r -= nearest;
            }
            let mut collisions = 0usize;
            for i in 0..spec.n_movers() {
                for j in (i + 1)..spec.n_movers() {
                    if state.positions[i].dist(state.positions[j]) <= spec.contact_radius {
                        collisions += 1;
                    }
                }
            }
            r -= COLLISION_PENALTY * collisions as f64;
            vec![r; spec.n_movers()]
        }
        EnvId::Ka => {
            let goal = state.goal_position();
            let d_agent = state.positions[0].dist(goal);
            let d_adv = state.positions[1].dist(goal);
            vec![-d_agent, -d_adv + d_agent]
        }
        EnvId::Pd => {
            let goal = state.goal_position();
            let d_min = (0..spec.n_agents)
                .map(|i| state.positions[i].dist(goal))
                .fold(f64::INFINITY, f64::min);
            let d_adv = state.positions[spec.n_agents].dist(goal);
            let coop = -d_min + d_adv;
            let mut r = vec![coop; spec.n_agents];
            r.push(-d_adv);
            r
        }
    }
}

/// Builds the observation for one mover. Layout (all offsets relative to the
/// observer's position):
/// `[vx, vy, px, py, landmark offsets.., other-mover offsets.., goal offset?]`
pub fn observe(spec: &EnvSpec, state: &WorldState, mover: usize) -> Observation {
    let pos = state.positions[mover];
    let mut obs = Vec::with_capacity(spec.obs_dim(mover));
    obs.push(state.velocities[mover].x);
    obs.push(state.velocities[mover].y);
    obs.push(pos.x);
    obs.push(pos.y);
    for lm in &state.landmark_positions {
        let rel = *lm - pos;
        obs.push(rel.x);
        obs.push(rel.y);
    }
    for j in 0..spec.n_movers() {
        if j != mover {
            let rel = state.positions[j] - pos;
            obs.push(rel.x);
            obs.push(rel.y);
        }
    }
    if spec.goal_aware(mover) {
        let rel = state.goal_position() - pos;
        obs.push(rel.x);
        obs.push(rel.y);
    }
    debug_assert_eq!(obs.len(), spec.obs_dim(mover));
    obs
}

pub fn observe_all(spec: &EnvSpec, state: &WorldState) -> Vec<Observation> {
    (0..spec.n_movers()).map(|i| observe(spec, state, i)).collect()
}

/// A complete episode: the initial state, each post-step state, and the
/// rewards earned at each step.
#[derive(Clone, Debug, Default)]
pub struct EpisodeRecord {
    pub states: Vec<WorldState>,
    pub rewards: Vec<Vec<f64>>,
}

impl EpisodeRecord {
    pub fn new(initial: WorldState) -> Self {
        EpisodeRecord {
            states: vec![initial],
            rewards: Vec::new(),
        }
    }

    pub fn push(&mut self, state: WorldState, rewards: Vec<f64>) {
        self.states.push(state);
        self.rewards.push(rewards);
    }

    pub fn final_state(&self) -> &WorldState {
        self.states.last().expect("episode record is never empty")
    }
}

/// Task success predicate over a completed episode.
///
/// - CN: at the final step every landmark has some agent within
///   `success_radius`.
/// - KA: the agent comes within `success_radius` of the goal at any recorded
///   step with `t <= 100`.
/// - PD: at the final step some cooperator is within `success_radius` of the
///   true goal and the adversary is not closer to the goal than the nearest
///   cooperator (repo convention; the task itself defines no PD success).
pub fn episode_success(spec: &EnvSpec, trajectory: &EpisodeRecord) -> bool {
    match spec.env_id {
        EnvId::Cn => {
            let fin = trajectory.final_state();
            fin.landmark_positions.iter().all(|lm| {
                fin.positions
                    .iter()
                    .any(|p| p.dist(*lm) <= spec.success_radius)
            })
        }
        EnvId::Ka => trajectory
            .states
            .iter()
            .filter(|s| s.t <= 100)
            .any(|s| s.positions[0].dist(s.goal_position()) <= spec.success_radius),
        EnvId::Pd => {
            let fin = trajectory.final_state();
            let goal = fin.goal_position();
            let d_min = (0..spec.n_agents)
                .map(|i| fin.positions[i].dist(goal))
                .fold(f64::INFINITY, f64::min);
            let d_adv = fin.positions[spec.n_agents].dist(goal);
            d_min <= spec.success_radius && d_adv >= d_min
        }
    }
}

/// Writes a trajectory as CSV with header
/// `t,entity,x,y,vx,vy,reward`. Entities are listed per step as
/// `agent<i>`, `adversary<i>`, then `landmark<i>`; landmark rows carry zero
/// velocity and an empty reward field. Rewards appear on rows with t >= 1
/// (the reward earned by the step that produced that state).
pub fn write_trajectory_csv<W: Write>(
    spec: &EnvSpec,
    trajectory: &EpisodeRecord,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "t,entity,x,y,vx,vy,reward")?;
    for (k, state) in trajectory.states.iter().enumerate() {
        for i in 0..spec.n_movers() {
            let name = if spec.is_adversary(i) {
                format!("adversary{}", i - spec.n_agents)
            } else {
                format!("agent{i}")
            };
            let reward = if k == 0 {
                String::new()
            } else {
                format!("{}", trajectory.rewards[k - 1][i])
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                state.t,
                name,
                state.positions[i].x,
                state.positions[i].y,
                state.velocities[i].x,
                state.velocities[i].y,
                reward
            )?;
        }
        for (l, lm) in state.landmark_positions.iter().enumerate() {
            writeln!(out, "{},landmark{},{},{},0,0,", state.t, l, lm.x, lm.y)?;
        }
    }
    Ok(())
}

/// Tags for [`derive_rng`] paths used by this module.
pub mod stream_tags {
    pub const ENV_RESET: u64 = 0x01;
}
