//! A stateful training session: one environment, one set of agent networks,
//! one replay buffer, advanced in deterministic env-step chunks under
//! configurable noise levels. Curriculum schedulers own a session and train
//! it at increasing noise; the networks persist across levels so competence
//! transfers.

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalReport};
use super::replay::{ReplayBuffer, Transition};
use super::{act, deterministic_actors, train_step, AgentLosses, AgentNets};
use crate::particle_world::{observe_all, reset, step, EnvSpec, Observation, WorldState};
use crate::rng::derive_rng;
use crate::uncertainty::{NoiseChannel, NoiseLevels, NoiseStreams};

/// Trainer hyperparameters. Defaults follow common multi-particle practice;
/// everything is config-overridable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Hidden layer widths shared by actors and critics.
    pub hidden: Vec<usize>,
    /// Env steps between update rounds.
    pub update_every: u64,
    /// Gradient steps per update round.
    pub updates_per_round: usize,
    /// Linear exploration-noise decay from start to end over decay steps.
    pub explore_sigma_start: f64,
    pub explore_sigma_end: f64,
    pub explore_decay_steps: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.95,
            tau: 0.01,
            batch_size: 1024,
            buffer_capacity: 1_000_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
            update_every: 100,
            updates_per_round: 1,
            explore_sigma_start: 1.0,
            explore_sigma_end: 0.1,
            explore_decay_steps: 200_000,
        }
    }
}

mod tags {
    pub const EPISODE: u64 = 0x30;
    pub const EXPLORE: u64 = 0x31;
    pub const SAMPLE: u64 = 0x32;
    pub const GATE: u64 = 0x33;
    pub const NET: u64 = 0x34;
}

/// Seed for the k-th training episode of a session; exposed so external
/// tooling can replay a session's episodes exactly.
pub fn episode_master(master_seed: u64, episode_index: u64) -> u64 {
    use rand::Rng;
    derive_rng(master_seed, &[tags::EPISODE, episode_index]).random()
}

pub struct TrainSession {
    pub spec: EnvSpec,
    pub cfg: TrainerConfig,
    pub nets: Vec<AgentNets>,
    buffer: ReplayBuffer,
    noise: NoiseStreams,
    explore_rng: rand_chacha::ChaCha12Rng,
    sample_rng: rand_chacha::ChaCha12Rng,
    master_seed: u64,
    env_steps: u64,
    episode_counter: u64,
    eval_counter: u64,
    state: Option<WorldState>,
    /// Perturbed observations for `state`, as the policies will see them.
    seen_obs: Vec<Observation>,
    last_losses: Vec<AgentLosses>,
}

impl TrainSession {
    pub fn new(spec: EnvSpec, cfg: TrainerConfig, master_seed: u64) -> Self {
        spec.validate().expect("invalid environment spec");
        let joint_dim = spec.joint_obs_action_dim();
        let nets: Vec<AgentNets> = (0..spec.n_movers())
            .map(|i| {
                use rand::Rng;
                let net_seed: u64 = derive_rng(master_seed, &[tags::NET, i as u64]).random();
                AgentNets::new(
                    spec.obs_dim(i),
                    joint_dim,
                    &cfg.hidden,
                    cfg.actor_lr,
                    cfg.critic_lr,
                    net_seed,
                )
            })
            .collect();
        TrainSession {
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise: NoiseStreams::new(master_seed, spec.n_movers()),
            explore_rng: derive_rng(master_seed, &[tags::EXPLORE]),
            sample_rng: derive_rng(master_seed, &[tags::SAMPLE]),
            master_seed,
            env_steps: 0,
            episode_counter: 0,
            eval_counter: 0,
            state: None,
            seen_obs: Vec::new(),
            last_losses: vec![AgentLosses::default(); spec.n_movers()],
            spec,
            cfg,
            nets,
        }
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn last_losses(&self) -> &[AgentLosses] {
        &self.last_losses
    }

    /// Total randomness consumed on a training noise channel so far.
    pub fn noise_draws(&self, channel: NoiseChannel) -> u64 {
        self.noise.draws(channel)
    }

    fn explore_sigma(&self) -> f64 {
        let cfg = &self.cfg;
        if cfg.explore_decay_steps == 0 || self.env_steps >= cfg.explore_decay_steps {
            return cfg.explore_sigma_end;
        }
        let frac = self.env_steps as f64 / cfg.explore_decay_steps as f64;
        cfg.explore_sigma_start + (cfg.explore_sigma_end - cfg.explore_sigma_start) * frac
    }

    fn begin_episode(&mut self, levels: &NoiseLevels) {
        let seed = episode_master(self.master_seed, self.episode_counter);
        self.episode_counter += 1;
        let state = reset(&self.spec, seed);
        self.seen_obs = self.perturbed_observations(&state, levels);
        self.state = Some(state);
    }

    fn perturbed_observations(&mut self, state: &WorldState, levels: &NoiseLevels) -> Vec<Observation> {
        let true_obs = observe_all(&self.spec, state);
        true_obs
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                let mu = if self.spec.is_adversary(i) { 0.0 } else { levels.mu };
                self.noise.perturb_state(i, &o, mu)
            })
            .collect()
    }

    /// Advances training by `steps` env steps at the given noise levels.
    /// Reward noise applies here (training) and nowhere else.
    pub fn run_training_steps(&mut self, levels: &NoiseLevels, steps: u64) {
        assert!(levels.is_valid());
        for _ in 0..steps {
            if self.state.is_none() {
                self.begin_episode(levels);
            }
            let sigma = self.explore_sigma();
            let chosen: Vec<_> = (0..self.spec.n_movers())
                .map(|i| {
                    act(
                        &self.nets[i].actor,
                        &self.seen_obs[i],
                        self.spec.max_force,
                        sigma,
                        &mut self.explore_rng,
                    )
                })
                .collect();
            // The environment executes the perturbed action; the stored
            // transition keeps the unclipped perturbed value.
            let executed: Vec<_> = chosen
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let nu = if self.spec.is_adversary(i) { 0.0 } else { levels.nu };
                    self.noise.perturb_action(i, a, nu)
                })
                .collect();
            let state = self.state.take().expect("episode in progress");
            let (next_state, rewards, done) = step(&self.spec, &state, &executed);
            let stored_rewards: Vec<f64> = rewards
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let eps = if self.spec.is_adversary(i) { 0.0 } else { levels.epsilon };
                    self.noise.perturb_reward(i, r, eps)
                })
                .collect();
            let next_obs = self.perturbed_observations(&next_state, levels);
            self.buffer.push(Transition {
                obs: std::mem::take(&mut self.seen_obs),
                actions: executed,
                rewards: stored_rewards,
                next_obs: next_obs.clone(),
                done,
            });
            self.seen_obs = next_obs;
            self.state = if done { None } else { Some(next_state) };
            self.env_steps += 1;

            if self.env_steps % self.cfg.update_every == 0 && self.buffer.len() >= self.cfg.batch_size {
                for _ in 0..self.cfg.updates_per_round {
                    self.last_losses = train_step(
                        &mut self.nets,
                        &self.buffer,
                        self.cfg.batch_size,
                        self.cfg.gamma,
                        self.cfg.tau,
                        self.spec.max_force,
                        &mut self.sample_rng,
                    );
                }
            }
        }
    }

    /// Gate/probe evaluation with a fresh derived seed per call: current
    /// deterministic policies, state/action noise as requested, reward noise
    /// off by protocol.
    pub fn gated_eval(&mut self, levels: &NoiseLevels, episodes: usize) -> EvalReport {
        use rand::Rng;
        let seed: u64 = derive_rng(self.master_seed, &[tags::GATE, self.eval_counter]).random();
        self.eval_counter += 1;
        self.evaluate_at(levels, episodes, seed)
    }

    /// Evaluation with an explicit seed (final reporting).
    pub fn evaluate_at(&self, levels: &NoiseLevels, episodes: usize, seed: u64) -> EvalReport {
        let actors = deterministic_actors(&self.nets, &self.spec);
        evaluate(&actors, &self.spec, levels, episodes, seed)
    }
}
