//! Robust multi-agent reinforcement learning laboratory.
//!
//! The crate has three layers:
//!
//! - **Simulation**: deterministic 2D particle worlds ([`particle_world`]) and
//!   truncated-normal noise injection for reward, observation, and action
//!   channels ([`uncertainty`]).
//! - **Training**: a from-scratch dense-network substrate ([`neural`]), a
//!   multi-agent actor-critic trainer with centralized critics ([`maddpg`]),
//!   and lookahead curriculum schedulers that raise noise levels as competence
//!   is demonstrated ([`curriculum`]).
//! - **Analysis**: finite robust Markov games with explicit uncertainty sets
//!   and a numerically verified maximin Bellman contraction
//!   ([`robust_bellman`]), plus a config-driven experiment runner and
//!   reporting tools ([`experiments`]).

pub mod curriculum;
pub mod experiments;
pub mod maddpg;
pub mod math;
pub mod neural;
pub mod particle_world;
pub mod robust_bellman;
pub mod rng;
pub mod uncertainty;
