//! Lookahead curriculum schedulers: raise noise levels as competence is
//! demonstrated, probing ahead without training on the state/action
//! channels.
//!
//! Three schedules are provided: a single uncertain channel
//! ([`run_single`]), reward paired with state or action
//! ([`run_dual_reward_plus`]), and state paired with action
//! ([`run_dual_state_action`]). All start training at zero noise and share
//! two primitives:
//!
//! - [`train_to_succ`]: train at fixed levels, evaluating a gate every
//!   `gate_cadence` env steps; converged the first time the gate's success
//!   rate reaches the threshold, failed when the level's budget runs out.
//! - [`skip_ahead`]: evaluate the current policy (no training) at
//!   `level + k * delta` for `k = 1..=max_probes` and jump to the end of the
//!   longest passing prefix. Probing stops at the first failure. Only the
//!   state and action channels may skip: reward noise does not exist at
//!   evaluation time, so a reward probe would be meaningless.
//!
//! A channel's `converged` flag latches when training at a level fails;
//! "converged" is loop-exit bookkeeping meaning the channel has reached its
//! limit, not that the last level trained successfully. The schedulers never
//! lower a level and never reset a latched flag. Networks persist across
//! levels: the point of the curriculum is that competence transfers upward.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::maddpg::TrainSession;
use crate::uncertainty::{NoiseChannel, NoiseLevels};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub delta_epsilon: f64,
    pub delta_mu: f64,
    pub delta_nu: f64,
    pub success_threshold: f64,
    pub eval_episodes_gate: usize,
    /// Env steps between evaluation gates inside one level.
    pub gate_cadence: u64,
    /// Env-step cap per level.
    pub level_budget: u64,
    pub skip_ahead_max_probes: usize,
    /// Env-step cap for the whole run.
    pub overall_budget: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            delta_epsilon: 1.0,
            delta_mu: 0.05,
            delta_nu: 0.2,
            success_threshold: 0.9,
            eval_episodes_gate: 100,
            gate_cadence: 2_000,
            level_budget: 100_000,
            skip_ahead_max_probes: 4,
            overall_budget: 300_000,
        }
    }
}

impl CurriculumConfig {
    pub fn delta(&self, channel: NoiseChannel) -> f64 {
        match channel {
            NoiseChannel::Reward => self.delta_epsilon,
            NoiseChannel::State => self.delta_mu,
            NoiseChannel::Action => self.delta_nu,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta_epsilon > 0.0 && self.delta_mu > 0.0 && self.delta_nu > 0.0) {
            return Err("curriculum deltas must be > 0".into());
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err("success_threshold must lie in (0, 1]".into());
        }
        if self.eval_episodes_gate == 0 {
            return Err("eval_episodes_gate must be > 0".into());
        }
        if self.gate_cadence == 0 || self.level_budget == 0 || self.overall_budget == 0 {
            return Err("budgets and gate cadence must be > 0".into());
        }
        Ok(())
    }
}

/// Channels eligible for lookahead probing; reward is excluded by type.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipChannel {
    State,
    Action,
}

impl From<SkipChannel> for NoiseChannel {
    fn from(c: SkipChannel) -> NoiseChannel {
        match c {
            SkipChannel::State => NoiseChannel::State,
            SkipChannel::Action => NoiseChannel::Action,
        }
    }
}

/// What the schedulers need from a trainer. [`TrainSession`] is the real
/// implementation; tests drive the control flow with scripted mocks.
pub trait GateTrainer {
    /// Advance training by `steps` env steps at the given noise levels.
    fn train_steps(&mut self, levels: &NoiseLevels, steps: u64);
    /// Success rate of the current policy, evaluated without training.
    /// Reward noise is never applied during evaluation.
    fn gate_success(&mut self, levels: &NoiseLevels, episodes: usize) -> f64;
    /// Total env steps consumed so far.
    fn steps_taken(&self) -> u64;
}

impl GateTrainer for TrainSession {
    fn train_steps(&mut self, levels: &NoiseLevels, steps: u64) {
        self.run_training_steps(levels, steps);
    }

    fn gate_success(&mut self, levels: &NoiseLevels, episodes: usize) -> f64 {
        self.gated_eval(levels, episodes).success_mean
    }

    fn steps_taken(&self) -> u64 {
        self.env_steps()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// A completed train_to_succ at a level.
    Train,
    /// A single lookahead probe evaluation.
    Probe,
    /// The net jump applied after a round of probes.
    Skip,
}

/// One scheduler event, in execution order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumEvent {
    /// Cumulative env steps when the event was recorded.
    pub wall_step: u64,
    pub channel: NoiseChannel,
    /// Channel level the event concerns (post-jump level for skips).
    pub level: f64,
    /// Gate or probe success rate (last gate for Train events; 0 for Skip
    /// events whose probes all failed).
    pub success_rate: f64,
    /// Train: whether the level converged. Probe: whether it passed.
    /// Skip: whether any probe passed.
    pub converged: bool,
    pub kind: EventKind,
    /// Level increase applied by a Skip event; 0 elsewhere.
    pub skip_amount: f64,
}

/// Scheduler output: final levels, per-channel latched flags, budget
/// accounting, and the full event history.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub levels: NoiseLevels,
    pub reward_converged: bool,
    pub state_converged: bool,
    pub action_converged: bool,
    pub steps_consumed: u64,
    pub history: Vec<CurriculumEvent>,
}

impl CurriculumState {
    fn flag_mut(&mut self, channel: NoiseChannel) -> &mut bool {
        match channel {
            NoiseChannel::Reward => &mut self.reward_converged,
            NoiseChannel::State => &mut self.state_converged,
            NoiseChannel::Action => &mut self.action_converged,
        }
    }

    pub fn flag(&self, channel: NoiseChannel) -> bool {
        match channel {
            NoiseChannel::Reward => self.reward_converged,
            NoiseChannel::State => self.state_converged,
            NoiseChannel::Action => self.action_converged,
        }
    }

    /// Highest level of `channel` demonstrated at gate quality: the best
    /// converged Train level or passing Skip jump.
    pub fn robust_level(&self, channel: NoiseChannel) -> Option<f64> {
        self.history
            .iter()
            .filter(|e| {
                e.channel == channel
                    && e.converged
                    && matches!(e.kind, EventKind::Train | EventKind::Skip)
            })
            .map(|e| e.level)
            .fold(None, |acc, l| Some(acc.map_or(l, |a: f64| a.max(l))))
    }

    /// Levels at which `channel` demonstrated competence, ascending.
    pub fn ladder(&self, channel: NoiseChannel) -> Vec<f64> {
        let mut levels: Vec<f64> = self
            .history
            .iter()
            .filter(|e| e.channel == channel && e.converged)
            .map(|e| e.level)
            .collect();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        levels
    }
}

/// Outcome of training one level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOutcome {
    pub converged: bool,
    pub steps_used: u64,
    pub last_success: f64,
}

/// Trains at fixed `levels` until a gate passes or `budget` env steps are
/// spent. Gates run after every `gate_cadence` steps of training (the final
/// chunk may be shorter); the first passing gate returns immediately. A zero
/// budget degenerates to a single evaluation gate.
pub fn train_to_succ<T: GateTrainer>(
    trainer: &mut T,
    levels: &NoiseLevels,
    budget: u64,
    cfg: &CurriculumConfig,
) -> TrainOutcome {
    let mut used = 0u64;
    loop {
        let chunk = cfg.gate_cadence.min(budget - used);
        trainer.train_steps(levels, chunk);
        used += chunk;
        let sr = trainer.gate_success(levels, cfg.eval_episodes_gate);
        if sr >= cfg.success_threshold {
            return TrainOutcome {
                converged: true,
                steps_used: used,
                last_success: sr,
            };
        }
        if used >= budget {
            return TrainOutcome {
                converged: false,
                steps_used: used,
                last_success: sr,
            };
        }
    }
}

/// Lookahead: evaluates the current policy at `level + k * delta` on the
/// probed channel for `k = 1..=max_probes`, stopping at the first failing
/// probe, and returns the new level (unchanged when the first probe fails).
/// Probe and skip events are appended to `state`.
pub fn skip_ahead<T: GateTrainer>(
    trainer: &mut T,
    base: &NoiseLevels,
    channel: SkipChannel,
    cfg: &CurriculumConfig,
    state: &mut CurriculumState,
) -> f64 {
    let chan: NoiseChannel = channel.into();
    let delta = cfg.delta(chan);
    let start = base.channel(chan);
    let mut passed = start;
    let mut any = false;
    let mut last_sr = 0.0;
    for k in 1..=cfg.skip_ahead_max_probes {
        let cand = start + k as f64 * delta;
        let probe_levels = base.with_channel(chan, cand);
        let sr = trainer.gate_success(&probe_levels, cfg.eval_episodes_gate);
        let ok = sr >= cfg.success_threshold;
        state.history.push(CurriculumEvent {
            wall_step: trainer.steps_taken(),
            channel: chan,
            level: cand,
            success_rate: sr,
            converged: ok,
            kind: EventKind::Probe,
            skip_amount: 0.0,
        });
        if !ok {
            break;
        }
        passed = cand;
        any = true;
        last_sr = sr;
    }
    state.history.push(CurriculumEvent {
        wall_step: trainer.steps_taken(),
        channel: chan,
        level: passed,
        success_rate: last_sr,
        converged: any,
        kind: EventKind::Skip,
        skip_amount: passed - start,
    });
    passed
}

fn remaining(cfg: &CurriculumConfig, state: &CurriculumState) -> u64 {
    cfg.overall_budget.saturating_sub(state.steps_consumed)
}

fn run_level<T: GateTrainer>(
    trainer: &mut T,
    levels: &NoiseLevels,
    channel: NoiseChannel,
    cfg: &CurriculumConfig,
    state: &mut CurriculumState,
) -> TrainOutcome {
    run_level_multi(trainer, levels, &[channel], cfg, state)
}

/// Trains one level and records the outcome against every listed channel
/// (the dual schedulers' initial zero-level phase belongs to both).
fn run_level_multi<T: GateTrainer>(
    trainer: &mut T,
    levels: &NoiseLevels,
    channels: &[NoiseChannel],
    cfg: &CurriculumConfig,
    state: &mut CurriculumState,
) -> TrainOutcome {
    let budget = cfg.level_budget.min(remaining(cfg, state));
    let outcome = train_to_succ(trainer, levels, budget, cfg);
    state.steps_consumed += outcome.steps_used;
    for &channel in channels {
        state.history.push(CurriculumEvent {
            wall_step: trainer.steps_taken(),
            channel,
            level: levels.channel(channel),
            success_rate: outcome.last_success,
            converged: outcome.converged,
            kind: EventKind::Train,
            skip_amount: 0.0,
        });
    }
    outcome
}

/// Single-channel lookahead curriculum: train at zero, then raise the level
/// by its delta and retrain until a level fails to converge or the overall
/// budget runs out. The final robustness is the last converged level.
pub fn run_single<T: GateTrainer>(
    trainer: &mut T,
    channel: NoiseChannel,
    cfg: &CurriculumConfig,
) -> CurriculumState {
    let mut state = CurriculumState::default();
    run_level(trainer, &NoiseLevels::ZERO, channel, cfg, &mut state);
    let mut levels = NoiseLevels::ZERO;
    while remaining(cfg, &state) > 0 {
        levels = levels.with_channel(channel, levels.channel(channel) + cfg.delta(channel));
        let outcome = run_level(trainer, &levels, channel, cfg, &mut state);
        if !outcome.converged {
            *state.flag_mut(channel) = true;
            break;
        }
    }
    state.levels = levels;
    state
}

/// Reward plus one of state/action. Each outer iteration raises and trains
/// the reward channel first, then the other channel, which additionally
/// probes ahead after its training (the listing probes regardless of the
/// training outcome; a failed level simply fails its probes too). Flags
/// latch on failure. Reward never probes ahead.
pub fn run_dual_reward_plus<T: GateTrainer>(
    trainer: &mut T,
    other: SkipChannel,
    cfg: &CurriculumConfig,
) -> CurriculumState {
    let other_chan: NoiseChannel = other.into();
    let mut state = CurriculumState::default();
    let mut levels = NoiseLevels::ZERO;
    run_level(trainer, &levels, NoiseChannel::Reward, cfg, &mut state);
    levels = levels.with_channel(other_chan, skip_ahead(trainer, &levels, other, cfg, &mut state));

    while !(state.reward_converged && state.flag(other_chan)) && remaining(cfg, &state) > 0 {
        if !state.reward_converged {
            levels.epsilon += cfg.delta_epsilon;
            let outcome = run_level(trainer, &levels, NoiseChannel::Reward, cfg, &mut state);
            if !outcome.converged {
                state.reward_converged = true;
            }
        }
        if !state.flag(other_chan) && remaining(cfg, &state) > 0 {
            levels = levels.with_channel(other_chan, levels.channel(other_chan) + cfg.delta(other_chan));
            let outcome = run_level(trainer, &levels, other_chan, cfg, &mut state);
            if !outcome.converged {
                *state.flag_mut(other_chan) = true;
            }
            levels = levels.with_channel(other_chan, skip_ahead(trainer, &levels, other, cfg, &mut state));
        }
    }
    state.levels = levels;
    state
}

/// State plus action. The action channel is handled first each iteration;
/// each channel probes ahead after a successful level.
pub fn run_dual_state_action<T: GateTrainer>(trainer: &mut T, cfg: &CurriculumConfig) -> CurriculumState {
    let mut state = CurriculumState::default();
    let mut levels = NoiseLevels::ZERO;
    run_level(trainer, &levels, NoiseChannel::Action, cfg, &mut state);
    levels.mu = skip_ahead(trainer, &levels, SkipChannel::State, cfg, &mut state);

    while !(state.action_converged && state.state_converged) && remaining(cfg, &state) > 0 {
        if !state.action_converged {
            levels.nu += cfg.delta_nu;
            let outcome = run_level(trainer, &levels, NoiseChannel::Action, cfg, &mut state);
            if !outcome.converged {
                state.action_converged = true;
            } else {
                levels.nu = skip_ahead(trainer, &levels, SkipChannel::Action, cfg, &mut state);
            }
        }
        if !state.state_converged && remaining(cfg, &state) > 0 {
            levels.mu += cfg.delta_mu;
            let outcome = run_level(trainer, &levels, NoiseChannel::State, cfg, &mut state);
            if !outcome.converged {
                state.state_converged = true;
            } else {
                levels.mu = skip_ahead(trainer, &levels, SkipChannel::State, cfg, &mut state);
            }
        }
    }
    state.levels = levels;
    state
}

/// Writes the event history as CSV:
/// `wall_step,channel,level,gate_success,converged,skip_amount`.
pub fn write_curriculum_log<W: Write>(state: &CurriculumState, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "wall_step,channel,level,gate_success,converged,skip_amount")?;
    for e in &state.history {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.wall_step, e.channel, e.level, e.success_rate, e.converged, e.skip_amount
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Scripted trainer: every gate or probe evaluation pops the next
    /// success rate; every call is recorded for exact-sequence assertions.
    struct MockTrainer {
        gate_results: VecDeque<f64>,
        steps: u64,
        pub calls: Vec<(String, NoiseLevels)>,
    }

    impl MockTrainer {
        fn scripted(results: &[f64]) -> Self {
            MockTrainer {
                gate_results: results.iter().copied().collect(),
                steps: 0,
                calls: Vec::new(),
            }
        }

        /// 1.0 for pass, 0.0 for fail.
        fn from_outcomes(outcomes: &[bool]) -> Self {
            Self::scripted(
                &outcomes
                    .iter()
                    .map(|&b| if b { 1.0 } else { 0.0 })
                    .collect::<Vec<_>>(),
            )
        }
    }

    impl GateTrainer for MockTrainer {
        fn train_steps(&mut self, levels: &NoiseLevels, steps: u64) {
            self.steps += steps;
            self.calls.push(("train".into(), *levels));
        }

        fn gate_success(&mut self, levels: &NoiseLevels, _episodes: usize) -> f64 {
            self.calls.push(("gate".into(), *levels));
            self.gate_results.pop_front().expect("script exhausted")
        }

        fn steps_taken(&self) -> u64 {
            self.steps
        }
    }

    /// One gate per level: level budget equals the gate cadence.
    fn unit_cfg() -> CurriculumConfig {
        CurriculumConfig {
            delta_epsilon: 1.0,
            delta_mu: 0.05,
            delta_nu: 0.2,
            gate_cadence: 1_000,
            level_budget: 1_000,
            overall_budget: 1_000_000,
            skip_ahead_max_probes: 4,
            ..CurriculumConfig::default()
        }
    }

    fn levels_of(calls: &[(String, NoiseLevels)]) -> Vec<(String, f64, f64, f64)> {
        calls
            .iter()
            .map(|(k, l)| (k.clone(), l.epsilon, l.mu, l.nu))
            .collect()
    }

    /// Sequence equality up to float accumulation noise in the levels.
    fn assert_seq(got: &[(String, f64, f64, f64)], expect: &[(String, f64, f64, f64)]) {
        assert_eq!(got.len(), expect.len(), "call counts differ:\n{got:?}\nvs\n{expect:?}");
        for (i, (g, e)) in got.iter().zip(expect).enumerate() {
            assert_eq!(g.0, e.0, "call {i} kind differs: {got:?}");
            for (a, b) in [(g.1, e.1), (g.2, e.2), (g.3, e.3)] {
                assert!((a - b).abs() < 1e-9, "call {i} levels differ: {g:?} vs {e:?}");
            }
        }
    }

    #[test]
    fn train_to_succ_returns_at_first_passing_gate() {
        let cfg = CurriculumConfig {
            gate_cadence: 100,
            ..unit_cfg()
        };
        let mut t = MockTrainer::scripted(&[0.5, 0.8, 0.95, 1.0]);
        let out = train_to_succ(&mut t, &NoiseLevels::ZERO, 1_000, &cfg);
        assert!(out.converged);
        assert_eq!(out.steps_used, 300);
        assert_eq!(out.last_success, 0.95);
        // No further gates were consumed after the pass.
        assert_eq!(t.gate_results.len(), 1);
    }

    #[test]
    fn train_to_succ_fails_when_budget_exhausts() {
        let cfg = CurriculumConfig {
            gate_cadence: 400,
            ..unit_cfg()
        };
        let mut t = MockTrainer::scripted(&[0.1, 0.2, 0.3]);
        let out = train_to_succ(&mut t, &NoiseLevels::ZERO, 1_000, &cfg);
        assert!(!out.converged);
        // Chunks 400 + 400 + 200: the final partial chunk still gets a gate.
        assert_eq!(out.steps_used, 1_000);
        assert_eq!(t.steps, 1_000);
    }

    #[test]
    fn train_to_succ_zero_budget_is_a_single_gate() {
        let mut t = MockTrainer::scripted(&[0.0]);
        let out = train_to_succ(&mut t, &NoiseLevels::ZERO, 0, &unit_cfg());
        assert!(!out.converged);
        assert_eq!(out.steps_used, 0);
        assert_eq!(
            levels_of(&t.calls),
            vec![("train".into(), 0.0, 0.0, 0.0), ("gate".into(), 0.0, 0.0, 0.0)]
        );
    }

    #[test]
    fn skip_ahead_takes_the_longest_passing_prefix() {
        let cfg = unit_cfg();
        // pass, pass, fail: stops probing, jumps two deltas.
        let mut t = MockTrainer::from_outcomes(&[true, true, false]);
        let mut state = CurriculumState::default();
        let base = NoiseLevels::only(NoiseChannel::State, 0.1);
        let new = skip_ahead(&mut t, &base, SkipChannel::State, &cfg, &mut state);
        assert!((new - 0.2).abs() < 1e-12);
        // Exactly three probes ran; the fourth was never evaluated.
        assert_eq!(t.calls.len(), 3);
        let probe_mus: Vec<f64> = t.calls.iter().map(|(_, l)| l.mu).collect();
        assert!((probe_mus[0] - 0.15).abs() < 1e-12);
        assert!((probe_mus[1] - 0.2).abs() < 1e-12);
        assert!((probe_mus[2] - 0.25).abs() < 1e-12);
        // History: three probes then the skip summary.
        assert_eq!(state.history.len(), 4);
        assert_eq!(state.history[3].kind, EventKind::Skip);
        assert!((state.history[3].skip_amount - 0.1).abs() < 1e-12);
    }

    #[test]
    fn skip_ahead_with_all_probes_passing_jumps_max_probes() {
        let cfg = unit_cfg();
        let mut t = MockTrainer::from_outcomes(&[true; 4]);
        let mut state = CurriculumState::default();
        let new = skip_ahead(&mut t, &NoiseLevels::ZERO, SkipChannel::Action, &cfg, &mut state);
        assert!((new - 4.0 * cfg.delta_nu).abs() < 1e-12);
    }

    #[test]
    fn skip_ahead_first_probe_failure_keeps_the_level() {
        let cfg = unit_cfg();
        let mut t = MockTrainer::from_outcomes(&[false]);
        let mut state = CurriculumState::default();
        let new = skip_ahead(&mut t, &NoiseLevels::ZERO, SkipChannel::State, &cfg, &mut state);
        assert_eq!(new, 0.0);
        assert_eq!(t.calls.len(), 1);
    }

    #[test]
    fn run_single_reward_sequence_and_latching() {
        let cfg = unit_cfg();
        // Gates: level 0 pass, eps=1 pass, eps=2 pass, eps=3 fail.
        let mut t = MockTrainer::from_outcomes(&[true, true, true, false]);
        let state = run_single(&mut t, NoiseChannel::Reward, &cfg);
        let expect: Vec<(String, f64, f64, f64)> = vec![
            ("train".into(), 0.0, 0.0, 0.0),
            ("gate".into(), 0.0, 0.0, 0.0),
            ("train".into(), 1.0, 0.0, 0.0),
            ("gate".into(), 1.0, 0.0, 0.0),
            ("train".into(), 2.0, 0.0, 0.0),
            ("gate".into(), 2.0, 0.0, 0.0),
            ("train".into(), 3.0, 0.0, 0.0),
            ("gate".into(), 3.0, 0.0, 0.0),
        ];
        assert_seq(&levels_of(&t.calls), &expect);
        assert!(state.reward_converged);
        assert_eq!(state.robust_level(NoiseChannel::Reward), Some(2.0));
        // The reward channel never probes ahead.
        assert!(state.history.iter().all(|e| e.kind != EventKind::Probe));
        assert_eq!(state.steps_consumed, 4_000);
    }

    #[test]
    fn run_single_first_increment_failure_leaves_zero_robustness() {
        let cfg = unit_cfg();
        let mut t = MockTrainer::from_outcomes(&[true, false]);
        let state = run_single(&mut t, NoiseChannel::State, &cfg);
        assert_eq!(state.robust_level(NoiseChannel::State), Some(0.0));
        assert!(state.state_converged);
    }

    #[test]
    fn run_single_stops_on_overall_budget_with_full_ladder() {
        let cfg = CurriculumConfig {
            overall_budget: 3_000,
            ..unit_cfg()
        };
        let mut t = MockTrainer::from_outcomes(&[true, true, true]);
        let state = run_single(&mut t, NoiseChannel::Action, &cfg);
        // History is exactly 0, delta, 2*delta; the budget capped the run.
        let trained: Vec<f64> = state
            .history
            .iter()
            .filter(|e| e.kind == EventKind::Train)
            .map(|e| e.level)
            .collect();
        assert_eq!(trained, vec![0.0, 0.2, 0.4]);
        assert!(!state.action_converged, "no level failed; the budget ended the run");
        assert_eq!(state.steps_consumed, 3_000);
    }

    #[test]
    fn run_dual_reward_plus_interleaves_reward_first() {
        let cfg = unit_cfg();
        // Script in call order:
        // initial train gate (0,0): pass
        // initial skip probes on mu: pass, fail        -> mu = 0.05
        // iter 1: eps=1 gate: pass
        //         mu=0.1 gate: pass; skip probe: fail  -> mu stays
        // iter 2: eps=2 gate: fail                     -> eps latches
        //         mu=0.15 gate: fail                   -> mu latches
        //         unconditional skip probe: fail
        let script = [1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let mut t = MockTrainer::scripted(&script);
        let state = run_dual_reward_plus(&mut t, SkipChannel::State, &cfg);

        let got = levels_of(&t.calls);
        let expect: Vec<(String, f64, f64, f64)> = vec![
            ("train".into(), 0.0, 0.0, 0.0),
            ("gate".into(), 0.0, 0.0, 0.0),
            ("gate".into(), 0.0, 0.05, 0.0),  // initial probe k=1 (passes)
            ("gate".into(), 0.0, 0.1, 0.0),   // initial probe k=2 (fails)
            ("train".into(), 1.0, 0.05, 0.0), // reward increment trains first
            ("gate".into(), 1.0, 0.05, 0.0),
            ("train".into(), 1.0, 0.1, 0.0), // then the state increment
            ("gate".into(), 1.0, 0.1, 0.0),
            ("gate".into(), 1.0, 0.15000000000000002, 0.0), // skip probe (fails)
            ("train".into(), 2.0, 0.1, 0.0),                // eps=2 fails, latches
            ("gate".into(), 2.0, 0.1, 0.0),
            ("train".into(), 2.0, 0.15000000000000002, 0.0), // mu=0.15 fails, latches
            ("gate".into(), 2.0, 0.15000000000000002, 0.0),
            ("gate".into(), 2.0, 0.20000000000000004, 0.0), // unconditional post-failure probe
        ];
        assert_seq(&got, &expect);
        assert!(state.reward_converged && state.state_converged);
        assert_eq!(state.robust_level(NoiseChannel::Reward), Some(1.0));
        assert_eq!(state.robust_level(NoiseChannel::State), Some(0.1));
        // Reward never appears in a probe event.
        assert!(state
            .history
            .iter()
            .all(|e| !(e.kind == EventKind::Probe && e.channel == NoiseChannel::Reward)));
    }

    #[test]
    fn run_dual_reward_plus_immediate_failures() {
        let cfg = unit_cfg();
        // Initial train passes, initial probe fails, then both first
        // increments fail (with the unconditional post-failure probe).
        let script = [1.0, 0.0, 0.0, 0.0, 0.0];
        let mut t = MockTrainer::scripted(&script);
        let state = run_dual_reward_plus(&mut t, SkipChannel::Action, &cfg);
        assert!(state.reward_converged && state.action_converged);
        assert_eq!(state.robust_level(NoiseChannel::Reward), Some(0.0));
        // The action channel only ever converged at the initial zero level.
        assert_eq!(state.robust_level(NoiseChannel::Action), Some(0.0));
        assert!(
            (state.levels.nu - cfg.delta_nu).abs() < 1e-12,
            "level sits at the failed increment"
        );
    }

    #[test]
    fn run_dual_state_action_handles_nu_first_and_skips_on_success() {
        let cfg = unit_cfg();
        // initial train (0,0): pass
        // initial skip on mu: probe fail
        // iter 1: nu=0.2 train pass; skip nu probes: pass, fail -> nu=0.4
        //         mu=0.05 train fail -> mu latches (no skip after failure)
        // iter 2: nu=0.6 train fail -> nu latches (no skip)
        let script = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let mut t = MockTrainer::scripted(&script);
        let state = run_dual_state_action(&mut t, &cfg);
        let got = levels_of(&t.calls);
        let expect: Vec<(String, f64, f64, f64)> = vec![
            ("train".into(), 0.0, 0.0, 0.0),
            ("gate".into(), 0.0, 0.0, 0.0),
            ("gate".into(), 0.0, 0.05, 0.0), // initial mu probe
            ("train".into(), 0.0, 0.0, 0.2), // nu handled first
            ("gate".into(), 0.0, 0.0, 0.2),
            ("gate".into(), 0.0, 0.0, 0.4), // nu probe k=1 (passes)
            ("gate".into(), 0.0, 0.0, 0.6000000000000001), // nu probe k=2 (fails)
            ("train".into(), 0.0, 0.05, 0.4), // mu increment at the skipped nu
            ("gate".into(), 0.0, 0.05, 0.4),
            ("train".into(), 0.0, 0.05, 0.6000000000000001), // nu=0.6 fails
            ("gate".into(), 0.0, 0.05, 0.6000000000000001),
        ];
        assert_seq(&got, &expect);
        assert!(state.action_converged && state.state_converged);
        assert_eq!(state.robust_level(NoiseChannel::Action), Some(0.4));
        assert_eq!(state.robust_level(NoiseChannel::State), Some(0.0));
    }

    #[test]
    fn run_dual_state_action_always_successful_advances_by_probes_plus_one() {
        // With every gate and probe passing, each iteration advances each
        // channel by (max_probes + 1) * delta.
        let cfg = CurriculumConfig {
            overall_budget: 3_000, // initial train + one iteration (two levels)
            ..unit_cfg()
        };
        let mut t = MockTrainer::scripted(&[1.0; 64]);
        let state = run_dual_state_action(&mut t, &cfg);
        let per_iter_nu = (cfg.skip_ahead_max_probes as f64 + 1.0) * cfg.delta_nu;
        let per_iter_mu = (cfg.skip_ahead_max_probes as f64 + 1.0) * cfg.delta_mu;
        // nu: one trained increment plus a full skip.
        assert!((state.levels.nu - per_iter_nu).abs() < 1e-9, "nu = {}", state.levels.nu);
        // mu: the initial full skip plus one iteration's advance.
        let mu_expected = cfg.skip_ahead_max_probes as f64 * cfg.delta_mu + per_iter_mu;
        assert!((state.levels.mu - mu_expected).abs() < 1e-9, "mu = {}", state.levels.mu);
        assert!(!state.action_converged && !state.state_converged);
    }

    #[test]
    fn run_dual_state_action_zero_budget_keeps_initial_probe_levels() {
        let cfg = CurriculumConfig {
            overall_budget: 0,
            ..unit_cfg()
        };
        // Initial gate fails (untrained), initial mu probe fails.
        let mut t = MockTrainer::from_outcomes(&[false, false]);
        let state = run_dual_state_action(&mut t, &cfg);
        assert!(!state.action_converged && !state.state_converged);
        assert_eq!(state.levels, NoiseLevels::ZERO);
        assert_eq!(state.steps_consumed, 0);
    }

    #[test]
    fn budget_accounting_matches_trainer_steps() {
        let cfg = CurriculumConfig {
            gate_cadence: 700,
            level_budget: 1_500,
            overall_budget: 4_000,
            ..unit_cfg()
        };
        // Fail everything: levels consume their full budgets until the pool
        // runs dry.
        let mut t = MockTrainer::scripted(&vec![0.0; 64]);
        let state = run_single(&mut t, NoiseChannel::State, &cfg);
        assert_eq!(state.steps_consumed, t.steps);
        assert!(state.steps_consumed <= cfg.overall_budget);
        // Level 0 fails after 1500 (its failure does not stop the run),
        // then the first increment fails after 1500 and latches the flag.
        assert_eq!(state.steps_consumed, 3_000);
    }

    #[test]
    fn every_run_starts_training_at_zero_noise() {
        let cfg = unit_cfg();
        let mut a = MockTrainer::scripted(&[0.0; 8]);
        let _ = run_single(&mut a, NoiseChannel::Reward, &cfg);
        assert_eq!(a.calls[0], ("train".into(), NoiseLevels::ZERO));
        let mut b = MockTrainer::scripted(&[0.0; 8]);
        let _ = run_dual_reward_plus(&mut b, SkipChannel::State, &cfg);
        assert_eq!(b.calls[0], ("train".into(), NoiseLevels::ZERO));
        let mut c = MockTrainer::scripted(&[0.0; 8]);
        let _ = run_dual_state_action(&mut c, &cfg);
        assert_eq!(c.calls[0], ("train".into(), NoiseLevels::ZERO));
    }

    #[test]
    fn levels_never_decrease_within_a_run() {
        let cfg = unit_cfg();
        let script: Vec<f64> = (0..40).map(|k| if k % 3 == 2 { 0.0 } else { 1.0 }).collect();
        let mut t = MockTrainer::scripted(&script);
        let state = run_dual_state_action(&mut t, &cfg);
        for ch in [NoiseChannel::State, NoiseChannel::Action] {
            let mut last = 0.0;
            for e in state
                .history
                .iter()
                .filter(|e| e.channel == ch && e.kind == EventKind::Train)
            {
                assert!(e.level >= last - 1e-12, "{ch} decreased: {} -> {}", last, e.level);
                last = e.level;
            }
        }
    }

    #[test]
    fn curriculum_log_has_documented_columns() {
        let cfg = unit_cfg();
        let mut t = MockTrainer::from_outcomes(&[true, false]);
        let state = run_single(&mut t, NoiseChannel::State, &cfg);
        let mut buf = Vec::new();
        write_curriculum_log(&state, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "wall_step,channel,level,gate_success,converged,skip_amount"
        );
        assert_eq!(lines.count(), state.history.len());
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = CurriculumConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.success_threshold = 0.0;
        assert!(cfg.validate().is_err());
        cfg = CurriculumConfig {
            delta_mu: -0.1,
            ..CurriculumConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
