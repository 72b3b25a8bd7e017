//! Deep Q-learning with action masking, experience replay and a hard-synced
//! target network.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::net::ValueNet;
use super::replay::{ReplayBuffer, Transition};
use super::{masked_argmax, random_valid_action, AgentContext, Policy, TrainFailure, TrainResult, TrainingLog};
use crate::error::{Error, Result};
use crate::mdp::{action_mask, ActionMask, EncodingKind, StateEncoding};
use crate::nn::{clip_grad_norm, Adam, GRAD_CLIP_NORM};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QHead {
    Mlp,
    Transformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Hard target sync period, in gradient steps.
    pub target_sync: u64,
    pub episodes: usize,
    pub head: QHead,
    pub hidden: usize,
    pub layers: usize,
    pub replay_capacity: usize,
    pub updates_per_step: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_decay: 0.99,
            epsilon_floor: 0.01,
            batch_size: 32,
            lr: 1e-4,
            target_sync: 10,
            episodes: 500,
            head: QHead::Mlp,
            hidden: 256,
            layers: 5,
            replay_capacity: 10_000,
            updates_per_step: 1,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.gamma > 0.0
            && self.epsilon_decay > 0.0
            && self.epsilon_floor > 0.0
            && self.lr > 0.0
            && self.batch_size > 0
            && self.target_sync > 0
            && self.episodes > 0
            && self.hidden > 0
            && self.layers >= 2
            && self.replay_capacity > 0;
        if !positive {
            return Err(Error::ConfigInvalid("DQN hyperparameters must be positive".into()));
        }
        if !(self.epsilon_floor <= self.epsilon_start && self.epsilon_start <= 1.0) || self.gamma > 1.0 {
            return Err(Error::ConfigInvalid("need epsilon_floor <= epsilon_start <= 1 and gamma <= 1".into()));
        }
        Ok(())
    }

    /// Exploration rate during episode `e` (0-based).
    pub fn epsilon(&self, e: usize) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powi(e as i32)).max(self.epsilon_floor)
    }
}

/// `r` for terminal transitions, else `r + gamma * max_{valid a'} next_q[a']`.
pub fn bellman_target(reward: f64, terminal: bool, gamma: f64, next_q: &[f64], next_mask: &ActionMask) -> f64 {
    if terminal {
        return reward;
    }
    match masked_argmax(next_q, next_mask) {
        Some(a) => reward + gamma * next_q[a],
        None => reward,
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: ValueNet,
    pub target: ValueNet,
    opt: Adam,
    grad_steps: u64,
}

impl DqnAgent {
    pub fn new(config: DqnConfig, input: &StateEncoding, k: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let init = rng::derive_seed(seed, streams::NET_INIT);
        let online = match config.head {
            QHead::Mlp => ValueNet::mlp(input.len(), config.hidden, config.layers, k, init),
            QHead::Transformer => {
                if input.kind != EncodingKind::Concat {
                    return Err(Error::ConfigInvalid("the transformer head needs the Concat encoding".into()));
                }
                let w = input.token_width().expect("concat has slots");
                ValueNet::transformer(input.slot_valid.len(), w, k, init)
            }
        };
        let opt = Adam::new(online.n_params(), config.lr);
        Ok(Self {
            target: online.clone(),
            online,
            opt,
            grad_steps: 0,
            config,
        })
    }

    pub fn gradient_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn q_values(&self, enc: &StateEncoding) -> Result<Vec<f64>> {
        self.online.forward(enc)
    }

    /// Epsilon-greedy choice among valid actions.
    pub fn act(&self, enc: &StateEncoding, mask: &ActionMask, epsilon: f64, rng: &mut rng::Rng) -> Result<usize> {
        let a = if rng.random::<f64>() < epsilon {
            random_valid_action(mask, rng)
        } else {
            masked_argmax(&self.q_values(enc)?, mask)
        };
        a.ok_or_else(|| Error::InvalidState("no valid action".into()))
    }

    /// One minibatch step on the weighted squared TD error.
    pub fn update(&mut self, replay: &ReplayBuffer, rng: &mut rng::Rng) -> Result<f64> {
        let idx = replay.sample(self.config.batch_size, rng);
        if idx.is_empty() {
            return Ok(0.0);
        }
        let n = idx.len() as f64;
        let mut grads = vec![0.0; self.online.n_params()];
        let mut loss = 0.0;
        for &i in &idx {
            let t = replay.get(i);
            let y = if t.terminal {
                t.reward
            } else {
                let next_q = self.target.forward(&t.next_enc)?;
                bellman_target(t.reward, false, self.config.gamma, &next_q, &t.next_mask)
            };
            let (a, w) = (t.action, t.weight);
            self.online.accumulate(&t.enc, &mut grads, |q| {
                let err = q[a] - y;
                loss += w * err * err / n;
                let mut g = vec![0.0; q.len()];
                g[a] = 2.0 * w * err / n;
                g
            })?;
        }
        clip_grad_norm(&mut grads, GRAD_CLIP_NORM);
        self.opt.step(self.online.params_mut(), &grads)?;
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}

impl Policy for DqnAgent {
    fn action_scores(&self, encoding: &StateEncoding) -> Result<Vec<f64>> {
        self.q_values(encoding)
    }
}

/// Hooks that let DynaDQN reuse the DQN loop.
pub(crate) trait DqnHooks {
    fn on_real_transition(&mut self, _t: &Transition, _replay: &mut ReplayBuffer, _episode: usize, _ctx: &AgentContext) -> Result<()> {
        Ok(())
    }
    fn policy_enabled(&self, _episode: usize) -> bool {
        true
    }
    fn on_episode_end(&mut self, _replay: &mut ReplayBuffer) -> Result<()> {
        Ok(())
    }
}

struct Plain;

impl DqnHooks for Plain {}

pub fn dqn_train(ctx: &mut AgentContext, config: DqnConfig, seed: u64) -> TrainResult<DqnAgent> {
    run_dqn(ctx, config, seed, &mut Plain)
}

pub(crate) fn run_dqn(ctx: &mut AgentContext, config: DqnConfig, seed: u64, hooks: &mut dyn DqnHooks) -> TrainResult<DqnAgent> {
    let mut log = TrainingLog::default();
    let fail = |error: Error, log: TrainingLog| TrainFailure { error, log };
    let start_enc = ctx.encoder.encode(&ctx.env.reset());
    let mut agent = match DqnAgent::new(config, &start_enc, ctx.env.k(), seed) {
        Ok(a) => a,
        Err(e) => return Err(fail(e, log)),
    };
    let mut replay = ReplayBuffer::new(agent.config.replay_capacity);
    let mut explore = rng::stream(seed, streams::EXPLORATION);
    let mut sample_rng = rng::stream(seed, streams::REPLAY);
    let started = Instant::now();

    for episode in 0..agent.config.episodes {
        let eps = agent.config.epsilon(episode);
        match dqn_episode(ctx, &mut agent, &mut replay, hooks, episode, eps, &mut explore, &mut sample_rng, &mut log) {
            Ok(ret) => log.record(ret, eps, ctx.reward.oracle_calls(), started),
            Err(e) => return Err(fail(e, log)),
        }
    }
    log.gradient_steps = agent.grad_steps;
    Ok((agent, log))
}

#[allow(clippy::too_many_arguments)]
fn dqn_episode(
    ctx: &mut AgentContext,
    agent: &mut DqnAgent,
    replay: &mut ReplayBuffer,
    hooks: &mut dyn DqnHooks,
    episode: usize,
    eps: f64,
    explore: &mut rng::Rng,
    sample_rng: &mut rng::Rng,
    log: &mut TrainingLog,
) -> Result<f64> {
    let mut state = ctx.env.reset();
    let mut enc = ctx.encoder.encode(&state);
    let mut ret = 0.0;
    while !state.is_terminal() {
        let mask = action_mask(&state);
        let action = agent.act(&enc, &mask, eps, explore)?;
        let (next, terminal) = ctx.step_checked(&state, action, log)?;
        let next_enc = ctx.encoder.encode(&next);
        let (r, learn_r) = ctx.rewards(&state, action, &next_enc)?;
        ret += r;
        let t = Transition {
            enc,
            action,
            reward: learn_r,
            next_enc: next_enc.clone(),
            next_mask: action_mask(&next),
            terminal,
            is_synthetic: false,
            weight: 1.0,
            age_episodes: 0,
            gate: None,
        };
        hooks.on_real_transition(&t, replay, episode, ctx)?;
        replay.push(t);
        if hooks.policy_enabled(episode) && replay.len() >= agent.config.batch_size {
            for _ in 0..agent.config.updates_per_step {
                agent.update(replay, sample_rng)?;
            }
        }
        state = next;
        enc = next_enc;
    }
    hooks.on_episode_end(replay)?;
    log.gradient_steps = agent.grad_steps;
    Ok(ret)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bellman_examples() {
        let all = ActionMask { valid: vec![true, true] };
        assert_eq!(bellman_target(1.5, true, 0.99, &[9.0, 9.0], &all), 1.5);
        assert!((bellman_target(1.0, false, 0.99, &[2.0, -3.0], &all) - 2.98).abs() < 1e-12);
        let only1 = ActionMask { valid: vec![false, true] };
        assert_eq!(bellman_target(0.0, false, 1.0, &[5.0, 1.0], &only1), 1.0);
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(1) - 0.99).abs() < 1e-15);
        assert_eq!(c.epsilon(10_000), 0.01);
    }

    #[test]
    fn config_validation() {
        assert!(DqnConfig::default().validate().is_ok());
        let bad = DqnConfig {
            lr: 0.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::ConfigInvalid(_))));
        let bad = DqnConfig {
            epsilon_start: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
