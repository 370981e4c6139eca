//! Truncated-normal noise injection for reward, observation, and action
//! channels.
//!
//! Every channel uses the same noise model: a normal distribution centered on
//! the true value with standard deviation sigma, conditioned on the interval
//! `[value - 2*sigma, value + 2*sigma]`. Truncation is implemented by
//! rejection sampling, not clipping; clipping would pile probability mass
//! onto the interval endpoints and change the distribution's shape.
//!
//! Channels draw from separate, independently seeded streams per agent (see
//! [`NoiseStreams`]), so enabling one channel never shifts the random draws
//! of another. A zero sigma short-circuits: the true value is returned and no
//! randomness is consumed.
//!
//! Reward noise exists only while training; evaluation never perturbs
//! rewards. [`NoiseStreams`] counts draws per channel so tests can prove the
//! reward stream stays untouched during evaluation.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::math::Vec2;
use crate::particle_world::Observation;
use crate::rng::derive_rng;

/// Noise magnitudes for the three channels. Zero disables a channel.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    /// Reward noise std (reward units); training only.
    #[serde(default)]
    pub epsilon: f64,
    /// Observation noise std (distance units).
    #[serde(default)]
    pub mu: f64,
    /// Action noise std (force units).
    #[serde(default)]
    pub nu: f64,
}

impl NoiseLevels {
    pub const ZERO: NoiseLevels = NoiseLevels {
        epsilon: 0.0,
        mu: 0.0,
        nu: 0.0,
    };

    pub fn new(epsilon: f64, mu: f64, nu: f64) -> Self {
        let levels = NoiseLevels { epsilon, mu, nu };
        assert!(levels.is_valid(), "noise stds must be >= 0: {levels:?}");
        levels
    }

    pub fn is_valid(&self) -> bool {
        self.epsilon >= 0.0 && self.mu >= 0.0 && self.nu >= 0.0
    }

    /// Copy with the reward channel forced off, as used by evaluation.
    pub fn without_reward(&self) -> NoiseLevels {
        NoiseLevels { epsilon: 0.0, ..*self }
    }

    pub fn channel(&self, channel: NoiseChannel) -> f64 {
        match channel {
            NoiseChannel::Reward => self.epsilon,
            NoiseChannel::State => self.mu,
            NoiseChannel::Action => self.nu,
        }
    }

    pub fn with_channel(mut self, channel: NoiseChannel, level: f64) -> Self {
        match channel {
            NoiseChannel::Reward => self.epsilon = level,
            NoiseChannel::State => self.mu = level,
            NoiseChannel::Action => self.nu = level,
        }
        self
    }

    /// Single-channel levels, zeros elsewhere.
    pub fn only(channel: NoiseChannel, level: f64) -> Self {
        NoiseLevels::ZERO.with_channel(channel, level)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChannel {
    Reward,
    State,
    Action,
}

impl NoiseChannel {
    pub const ALL: [NoiseChannel; 3] = [NoiseChannel::Reward, NoiseChannel::State, NoiseChannel::Action];

    pub fn name(self) -> &'static str {
        match self {
            NoiseChannel::Reward => "reward",
            NoiseChannel::State => "state",
            NoiseChannel::Action => "action",
        }
    }
}

impl std::fmt::Display for NoiseChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One draw from N(mean, sigma^2) conditioned on `[mean - 2s, mean + 2s]`.
///
/// `sigma == 0` returns `mean` without consuming randomness. Negative sigma
/// is a contract violation.
pub fn sample_trunc_normal<R: Rng + ?Sized>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    assert!(sigma >= 0.0, "sigma must be >= 0, got {sigma}");
    if sigma == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, sigma).expect("finite mean and positive sigma");
    let lo = mean - 2.0 * sigma;
    let hi = mean + 2.0 * sigma;
    // Acceptance probability is ~95.4%, so this terminates almost surely
    // after a couple of draws.
    loop {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
}

/// Perturbs a training reward; `epsilon == 0` is the identity.
pub fn perturb_reward<R: Rng + ?Sized>(r: f64, epsilon: f64, rng: &mut R) -> f64 {
    sample_trunc_normal(r, epsilon, rng)
}

/// Perturbs every observation coordinate independently. The true world state
/// is untouched; only what the policy sees changes.
pub fn perturb_state<R: Rng + ?Sized>(obs: &Observation, mu: f64, rng: &mut R) -> Observation {
    if mu == 0.0 {
        return obs.clone();
    }
    obs.iter().map(|&v| sample_trunc_normal(v, mu, rng)).collect()
}

/// Perturbs both force components independently. The perturbed action is
/// what the environment executes; clipping to force bounds happens inside
/// the physics, while stored transitions keep the unclipped value.
pub fn perturb_action<R: Rng + ?Sized>(a: Vec2, nu: f64, rng: &mut R) -> Vec2 {
    if nu == 0.0 {
        return a;
    }
    Vec2::new(sample_trunc_normal(a.x, nu, rng), sample_trunc_normal(a.y, nu, rng))
}

struct CountedRng {
    rng: ChaCha12Rng,
    draws: u64,
}

/// Per-channel, per-agent noise streams with draw accounting.
///
/// Streams are derived from `(master seed, channel, agent)`, so the sequence
/// a channel sees depends only on its own usage. `draws` counts calls that
/// actually consumed randomness (sigma > 0).
pub struct NoiseStreams {
    reward: Vec<CountedRng>,
    state: Vec<CountedRng>,
    action: Vec<CountedRng>,
}

mod tags {
    pub const REWARD: u64 = 0x10;
    pub const STATE: u64 = 0x11;
    pub const ACTION: u64 = 0x12;
}

impl NoiseStreams {
    pub fn new(master_seed: u64, n_agents: usize) -> Self {
        let make = |tag: u64| {
            (0..n_agents)
                .map(|agent| CountedRng {
                    rng: derive_rng(master_seed, &[tag, agent as u64]),
                    draws: 0,
                })
                .collect()
        };
        NoiseStreams {
            reward: make(tags::REWARD),
            state: make(tags::STATE),
            action: make(tags::ACTION),
        }
    }

    pub fn perturb_reward(&mut self, agent: usize, r: f64, epsilon: f64) -> f64 {
        if epsilon == 0.0 {
            return r;
        }
        let s = &mut self.reward[agent];
        s.draws += 1;
        perturb_reward(r, epsilon, &mut s.rng)
    }

    pub fn perturb_state(&mut self, agent: usize, obs: &Observation, mu: f64) -> Observation {
        if mu == 0.0 {
            return obs.clone();
        }
        let s = &mut self.state[agent];
        s.draws += 1;
        perturb_state(obs, mu, &mut s.rng)
    }

    pub fn perturb_action(&mut self, agent: usize, a: Vec2, nu: f64) -> Vec2 {
        if nu == 0.0 {
            return a;
        }
        let s = &mut self.action[agent];
        s.draws += 1;
        perturb_action(a, nu, &mut s.rng)
    }

    /// Total consuming draws on a channel across agents.
    pub fn draws(&self, channel: NoiseChannel) -> u64 {
        let streams = match channel {
            NoiseChannel::Reward => &self.reward,
            NoiseChannel::State => &self.state,
            NoiseChannel::Action => &self.action,
        };
        streams.iter().map(|s| s.draws).sum()
    }
}
