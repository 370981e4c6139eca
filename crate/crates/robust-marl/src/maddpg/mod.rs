//! Multi-agent deep deterministic policy gradients with centralized critics.
//!
//! Each agent owns an actor mapping its (possibly perturbed) observation to
//! a 2D force, and a critic scoring the concatenation of everyone's
//! observations and actions. Critics regress on TD targets built from lagged
//! target networks; actors ascend their own critic through their action
//! slot; targets track the online networks by Polyak averaging. Adversaries
//! in the competitive tasks are co-trained with the same machinery.
//!
//! Training is single-threaded and deterministic per seed. Evaluation runs
//! episodes in parallel over read-only policy copies and merges results in
//! episode order.

pub mod eval;
pub mod replay;
pub mod session;

pub use eval::{evaluate, EvalReport};
pub use replay::{ReplayBuffer, Transition};
pub use session::{TrainSession, TrainerConfig};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math::Vec2;
use crate::neural::{adam_step, AdamState, Mlp, OutputActivation};
use crate::particle_world::{EnvSpec, Observation};

/// Actor/critic bundle with lagged target copies and optimizer state.
#[derive(Clone, Debug)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl AgentNets {
    /// Fresh networks with targets equal to the online copies.
    pub fn new(
        obs_dim: usize,
        joint_dim: usize,
        hidden: &[usize],
        actor_lr: f64,
        critic_lr: f64,
        seed: u64,
    ) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(hidden);
        actor_sizes.push(2);
        let mut critic_sizes = vec![joint_dim];
        critic_sizes.extend_from_slice(hidden);
        critic_sizes.push(1);
        let actor = Mlp::init_uniform(&actor_sizes, OutputActivation::Tanh, seed);
        let critic = Mlp::init_uniform(&critic_sizes, OutputActivation::Identity, seed ^ 0x5ead_beef);
        AgentNets {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: AdamState::new(actor.n_params(), actor_lr),
            critic_opt: AdamState::new(critic.n_params(), critic_lr),
            actor,
            critic,
        }
    }
}

/// Deterministic actor action: tanh output scaled to the force bound.
pub fn actor_action(actor: &Mlp, obs: &[f64], max_force: f64) -> Vec2 {
    let y = actor.forward(obs);
    Vec2::new(y[0] * max_force, y[1] * max_force)
}

/// Policy action with optional Gaussian exploration noise, clipped to the
/// force bounds. `explore_sigma == 0` is deterministic and consumes no
/// randomness.
pub fn act<R: Rng + ?Sized>(
    actor: &Mlp,
    obs: &[f64],
    max_force: f64,
    explore_sigma: f64,
    rng: &mut R,
) -> Vec2 {
    let mut a = actor_action(actor, obs, max_force);
    if explore_sigma > 0.0 {
        let nx: f64 = StandardNormal.sample(rng);
        let ny: f64 = StandardNormal.sample(rng);
        a = Vec2::new(a.x + explore_sigma * nx, a.y + explore_sigma * ny);
    }
    a.clamp_abs(max_force)
}

/// Polyak averaging: `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    debug_assert_eq!(target.n_params(), online.n_params());
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

/// Centralized critic input: all observations in agent order, then all
/// actions in agent order.
pub fn critic_input(obs: &[Observation], actions: &[Vec2]) -> Vec<f64> {
    let mut input = Vec::with_capacity(obs.iter().map(|o| o.len()).sum::<usize>() + actions.len() * 2);
    for o in obs {
        input.extend_from_slice(o);
    }
    for a in actions {
        input.push(a.x);
        input.push(a.y);
    }
    input
}

/// TD targets for one agent over a batch:
/// `y = r + gamma * (1 - done) * Q_target(next_obs, target_actions)`.
/// Gradients never flow through targets; the returned values are constants
/// for the critic regression.
pub fn td_targets(
    agent: usize,
    batch: &[&Transition],
    target_actions: &[Vec<Vec2>],
    target_critic: &Mlp,
    gamma: f64,
) -> Vec<f64> {
    batch
        .iter()
        .zip(target_actions)
        .map(|(t, next_acts)| {
            let r = t.rewards[agent];
            if t.done {
                return r;
            }
            let input = critic_input(&t.next_obs, next_acts);
            r + gamma * target_critic.forward(&input)[0]
        })
        .collect()
}

/// Gradient of `J = mean_b Q_i(obs_b, actions_b with agent i's slot replaced
/// by its current actor output)` with respect to the actor parameters. The
/// critic is treated as frozen. Training ascends this direction.
pub fn actor_gradient(
    agent: usize,
    actor: &Mlp,
    critic: &Mlp,
    batch: &[&Transition],
    max_force: f64,
) -> Vec<f64> {
    let mut grads = vec![0.0; actor.n_params()];
    let inv_b = 1.0 / batch.len() as f64;
    let act_offset: usize = batch[0].obs.iter().map(|o| o.len()).sum::<usize>() + agent * 2;
    for t in batch {
        let cache = actor.forward_cache(&t.obs[agent]);
        let y = cache.output();
        let own_action = Vec2::new(y[0] * max_force, y[1] * max_force);
        let mut actions = t.actions.clone();
        actions[agent] = own_action;
        let input = critic_input(&t.obs, &actions);
        let critic_cache = critic.forward_cache(&input);
        let dq_dinput = critic.backward(&critic_cache, &[1.0]).input;
        // Chain through the max_force scaling into the actor's tanh output.
        let upstream = [
            dq_dinput[act_offset] * max_force * inv_b,
            dq_dinput[act_offset + 1] * max_force * inv_b,
        ];
        let g = actor.backward(&cache, &upstream);
        for (acc, gi) in grads.iter_mut().zip(&g.params) {
            *acc += gi;
        }
    }
    grads
}

/// Per-agent losses from one training step.
#[derive(Clone, Copy, Debug, Default)]
pub struct AgentLosses {
    /// Mean squared TD error of the critic over the batch.
    pub critic_mse: f64,
    /// Negative mean Q under the current actor (the quantity descended).
    pub actor_loss: f64,
}

/// One MADDPG update for every agent on a shared uniformly sampled batch:
/// critic regression to TD targets, deterministic policy gradient through
/// the critic's action slot, then soft target updates.
pub fn train_step<R: Rng + ?Sized>(
    nets: &mut [AgentNets],
    buffer: &ReplayBuffer,
    batch_size: usize,
    gamma: f64,
    tau: f64,
    max_force: f64,
    rng: &mut R,
) -> Vec<AgentLosses> {
    let indices = buffer.sample_indices(batch_size, rng);
    let batch: Vec<&Transition> = indices.iter().map(|&i| buffer.get(i)).collect();
    let inv_b = 1.0 / batch.len() as f64;

    // Target policy actions at the next observations, shared by all critics.
    let target_actions: Vec<Vec<Vec2>> = batch
        .iter()
        .map(|t| {
            nets.iter()
                .enumerate()
                .map(|(j, n)| actor_action(&n.target_actor, &t.next_obs[j], max_force))
                .collect()
        })
        .collect();

    let mut losses = Vec::with_capacity(nets.len());
    for i in 0..nets.len() {
        let targets = td_targets(i, &batch, &target_actions, &nets[i].target_critic, gamma);

        // Critic: minimize mean squared TD error.
        let mut critic_grads = vec![0.0; nets[i].critic.n_params()];
        let mut mse = 0.0;
        for (t, &y) in batch.iter().zip(&targets) {
            let input = critic_input(&t.obs, &t.actions);
            let cache = nets[i].critic.forward_cache(&input);
            let q = cache.output()[0];
            let err = q - y;
            mse += err * err * inv_b;
            let g = nets[i].critic.backward(&cache, &[2.0 * err * inv_b]);
            for (acc, gi) in critic_grads.iter_mut().zip(&g.params) {
                *acc += gi;
            }
        }
        {
            let nets_i = &mut nets[i];
            adam_step(&mut nets_i.critic_opt, nets_i.critic.params_mut(), &critic_grads);
        }

        // Actor: ascend mean Q through its own action slot (updated critic).
        let ascent = actor_gradient(i, &nets[i].actor, &nets[i].critic, &batch, max_force);
        let descent: Vec<f64> = ascent.iter().map(|g| -g).collect();
        let mut mean_q = 0.0;
        for t in &batch {
            let mut actions = t.actions.clone();
            actions[i] = actor_action(&nets[i].actor, &t.obs[i], max_force);
            mean_q += nets[i].critic.forward(&critic_input(&t.obs, &actions))[0] * inv_b;
        }
        {
            let nets_i = &mut nets[i];
            adam_step(&mut nets_i.actor_opt, nets_i.actor.params_mut(), &descent);
        }

        let nets_i = &mut nets[i];
        let (actor, critic) = (nets_i.actor.clone(), nets_i.critic.clone());
        soft_update(&mut nets_i.target_actor, &actor, tau);
        soft_update(&mut nets_i.target_critic, &critic, tau);

        losses.push(AgentLosses {
            critic_mse: mse,
            actor_loss: -mean_q,
        });
    }
    losses
}

/// Read-only deterministic policy view over an actor network.
pub trait ActorPolicy: Sync {
    fn action(&self, obs: &[f64]) -> Vec2;
}

pub struct DeterministicActor<'a> {
    pub net: &'a Mlp,
    pub max_force: f64,
}

impl ActorPolicy for DeterministicActor<'_> {
    fn action(&self, obs: &[f64]) -> Vec2 {
        actor_action(self.net, obs, self.max_force)
    }
}

/// Deterministic policy views over a set of trained agents.
pub fn deterministic_actors<'a>(nets: &'a [AgentNets], spec: &EnvSpec) -> Vec<DeterministicActor<'a>> {
    nets.iter()
        .map(|n| DeterministicActor {
            net: &n.actor,
            max_force: spec.max_force,
        })
        .collect()
}
