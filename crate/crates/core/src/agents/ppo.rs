//! Maskable PPO with generalised advantage estimation and optional critic
//! warm start on single-cluster rewards.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::ValueNet;
use super::{sample_masked, AgentContext, Policy, TrainFailure, TrainResult, TrainingLog};
use crate::error::{Error, Result};
use crate::mdp::{action_mask, ActionMask, SelectionEnv, StateEncoder, StateEncoding};
use crate::nn::loss::masked_log_softmax;
use crate::nn::{clip_grad_norm, Adam, GRAD_CLIP_NORM};
use crate::reward::RewardEngine;
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub episodes: usize,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub episodes_per_batch: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    pub warm_start: bool,
    pub warm_start_repeats: usize,
    pub warm_start_epochs: usize,
    pub warm_start_lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 3,
            lr: 3e-4,
            episodes: 500,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            episodes_per_batch: 8,
            minibatches: 4,
            entropy_coef: 0.01,
            normalize_advantages: true,
            warm_start: false,
            warm_start_repeats: 1,
            warm_start_epochs: 1000,
            warm_start_lr: 1e-3,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::ConfigInvalid("clip must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::ConfigInvalid("gamma and lambda must lie in [0, 1]".into()));
        }
        if self.lr <= 0.0 || self.episodes == 0 || self.epochs == 0 || self.episodes_per_batch == 0 || self.minibatches == 0 {
            return Err(Error::ConfigInvalid("PPO counts and learning rate must be positive".into()));
        }
        if self.hidden == 0 || self.layers < 2 || self.warm_start_repeats == 0 {
            return Err(Error::ConfigInvalid("invalid PPO network shape".into()));
        }
        Ok(())
    }
}

/// One-step TD error `r + gamma * v_next - v`.
pub fn td_error(reward: f64, gamma: f64, v_next: f64, v: f64) -> f64 {
    reward + gamma * v_next - v
}

/// Advantages and returns for one episode that ends in a terminal state.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let v_next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = td_error(rewards[t], gamma, v_next, values[t]);
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

pub fn clipped_ratio(ratio: f64, clip: f64) -> f64 {
    ratio.clamp(1.0 - clip, 1.0 + clip)
}

/// `min(ratio * A, clip(ratio) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(clipped_ratio(ratio, clip) * advantage)
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub actor: ValueNet,
    pub critic: ValueNet,
    actor_opt: Adam,
    critic_opt: Adam,
}

struct Sample {
    enc: StateEncoding,
    mask: ActionMask,
    action: usize,
    old_logp: f64,
    advantage: f64,
    ret: f64,
}

impl PpoAgent {
    pub fn new(config: PpoConfig, input_dim: usize, k: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let init = rng::derive_seed(seed, streams::NET_INIT);
        let actor = ValueNet::mlp(input_dim, config.hidden, config.layers, k, rng::derive_seed(init, 0));
        let critic = ValueNet::mlp(input_dim, config.hidden, config.layers, 1, rng::derive_seed(init, 1));
        Ok(Self {
            actor_opt: Adam::new(actor.n_params(), config.lr),
            critic_opt: Adam::new(critic.n_params(), config.lr),
            actor,
            critic,
            config,
        })
    }

    pub fn value(&self, enc: &StateEncoding) -> Result<f64> {
        Ok(self.critic.forward(enc)?[0])
    }

    /// Action probabilities with invalid actions at exactly zero.
    pub fn probabilities(&self, enc: &StateEncoding, mask: &ActionMask) -> Result<Vec<f64>> {
        let logits = self.actor.forward(enc)?;
        Ok(crate::nn::loss::masked_softmax(&logits, &mask.valid))
    }

    fn update(&mut self, batch: &[Sample], rng: &mut rng::Rng) -> Result<()> {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            let chunk = batch.len().div_ceil(self.config.minibatches).max(1);
            for mb in order.chunks(chunk) {
                self.minibatch_step(batch, mb)?;
            }
        }
        Ok(())
    }

    fn minibatch_step(&mut self, batch: &[Sample], idx: &[usize]) -> Result<()> {
        let n = idx.len() as f64;
        let (clip, ent) = (self.config.clip, self.config.entropy_coef);
        let mut ga = vec![0.0; self.actor.n_params()];
        let mut gc = vec![0.0; self.critic.n_params()];
        for &i in idx {
            let s = &batch[i];
            self.actor.accumulate(&s.enc, &mut ga, |logits| {
                actor_logit_grad(logits, &s.mask.valid, s.action, s.old_logp, s.advantage, clip, ent, n)
            })?;
            let target = s.ret;
            self.critic.accumulate(&s.enc, &mut gc, |v| vec![2.0 * (v[0] - target) / n])?;
        }
        clip_grad_norm(&mut ga, GRAD_CLIP_NORM);
        clip_grad_norm(&mut gc, GRAD_CLIP_NORM);
        self.actor_opt.step(self.actor.params_mut(), &ga)?;
        self.critic_opt.step(self.critic.params_mut(), &gc)?;
        Ok(())
    }
}

/// Gradient of `-(clipped surrogate) - ent * entropy`, divided by `n`, with
/// respect to the logits.
#[allow(clippy::too_many_arguments)]
fn actor_logit_grad(
    logits: &[f64],
    valid: &[bool],
    action: usize,
    old_logp: f64,
    adv: f64,
    clip: f64,
    ent: f64,
    n: f64,
) -> Vec<f64> {
    let logp = masked_log_softmax(logits, valid);
    let p: Vec<f64> = logp.iter().map(|&l| if l.is_finite() { l.exp() } else { 0.0 }).collect();
    let ratio = (logp[action] - old_logp).exp();
    // the clipped branch carries no gradient
    let coef = if ratio * adv <= clipped_ratio(ratio, clip) * adv {
        -ratio * adv
    } else {
        0.0
    };
    let h: f64 = -p.iter().zip(&logp).filter(|(&pj, _)| pj > 0.0).map(|(pj, lj)| pj * lj).sum::<f64>();
    (0..logits.len())
        .map(|j| {
            if !valid[j] {
                return 0.0;
            }
            let onehot = if j == action { 1.0 } else { 0.0 };
            let lj = if p[j] > 0.0 { logp[j] } else { 0.0 };
            (coef * (onehot - p[j]) + ent * p[j] * (lj + h)) / n
        })
        .collect()
}

impl Policy for PpoAgent {
    fn action_scores(&self, encoding: &StateEncoding) -> Result<Vec<f64>> {
        self.actor.forward(encoding)
    }
}

/// Regresses the critic onto the mean reward of each single-cluster
/// state. Returns the targets and the final mean squared error.
#[allow(clippy::too_many_arguments)]
pub fn warm_start_critic(
    reward: &RewardEngine,
    env: &SelectionEnv,
    encoder: &StateEncoder,
    critic: &mut ValueNet,
    repeats: usize,
    epochs: usize,
    lr: f64,
) -> Result<(Vec<f64>, f64)> {
    let empty = env.reset();
    let k = env.k();
    let mut inputs = Vec::with_capacity(k);
    let mut targets = Vec::with_capacity(k);
    for c in 0..k {
        let mut acc = 0.0;
        for _ in 0..repeats.max(1) {
            acc += reward.reward(&empty, c)?;
        }
        targets.push(acc / repeats.max(1) as f64);
        inputs.push(encoder.encode(&env.step(&empty, c)?.0));
    }
    let mut opt = Adam::new(critic.n_params(), lr);
    let mut mse = f64::INFINITY;
    for _ in 0..epochs {
        let mut g = vec![0.0; critic.n_params()];
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(&targets) {
            critic.accumulate(x, &mut g, |v| {
                loss += (v[0] - y) * (v[0] - y) / k as f64;
                vec![2.0 * (v[0] - y) / k as f64]
            })?;
        }
        mse = loss;
        if mse < 1e-6 {
            break;
        }
        clip_grad_norm(&mut g, GRAD_CLIP_NORM);
        opt.step(critic.params_mut(), &g)?;
    }
    Ok((targets, mse))
}

pub fn ppo_train(ctx: &mut AgentContext, config: PpoConfig, seed: u64) -> TrainResult<PpoAgent> {
    let mut log = TrainingLog::default();
    match ppo_inner(ctx, config, seed, &mut log) {
        Ok(agent) => Ok((agent, log)),
        Err(error) => Err(TrainFailure { error, log }),
    }
}

fn ppo_inner(ctx: &mut AgentContext, config: PpoConfig, seed: u64, log: &mut TrainingLog) -> Result<PpoAgent> {
    let width = ctx.encoder.width();
    let mut agent = PpoAgent::new(config, width, ctx.env.k(), seed)?;
    if agent.config.warm_start {
        let c = &agent.config;
        let (repeats, epochs, lr) = (c.warm_start_repeats, c.warm_start_epochs, c.warm_start_lr);
        warm_start_critic(ctx.reward, &ctx.env, ctx.encoder, &mut agent.critic, repeats, epochs, lr)?;
    }
    let mut act_rng = rng::stream(seed, streams::EXPLORATION);
    let mut shuffle_rng = rng::stream(seed, streams::REPLAY);
    let started = Instant::now();
    let mut batch: Vec<Sample> = Vec::new();
    let mut in_batch = 0;
    let mut updates = 0u64;

    for _ in 0..agent.config.episodes {
        let mut state = ctx.env.reset();
        let mut steps: Vec<Sample> = Vec::new();
        let (mut rewards, mut values) = (Vec::new(), Vec::new());
        let (mut ret, mut entropy) = (0.0, 0.0);
        while !state.is_terminal() {
            let enc = ctx.encoder.encode(&state);
            let mask = action_mask(&state);
            let logits = agent.actor.forward(&enc)?;
            let logp = masked_log_softmax(&logits, &mask.valid);
            entropy -= logp.iter().filter(|l| l.is_finite()).map(|l| l.exp() * l).sum::<f64>();
            let action = sample_masked(&logits, &mask, &mut act_rng)
                .ok_or_else(|| Error::InvalidState("no valid action".into()))?;
            let (next, _) = ctx.step_checked(&state, action, log)?;
            let next_enc = ctx.encoder.encode(&next);
            let (r, learn_r) = ctx.rewards(&state, action, &next_enc)?;
            ret += r;
            rewards.push(learn_r);
            values.push(agent.value(&enc)?);
            steps.push(Sample {
                enc,
                mask,
                action,
                old_logp: logp[action],
                advantage: 0.0,
                ret: 0.0,
            });
            state = next;
        }
        let n_steps = steps.len().max(1) as f64;
        let (adv, rets) = gae(&rewards, &values, agent.config.gamma, agent.config.gae_lambda);
        for ((s, a), r) in steps.iter_mut().zip(adv).zip(rets) {
            s.advantage = a;
            s.ret = r;
        }
        batch.extend(steps);
        in_batch += 1;
        log.record(ret, entropy / n_steps, ctx.reward.oracle_calls(), started);

        if in_batch == agent.config.episodes_per_batch {
            if agent.config.normalize_advantages && batch.len() > 1 {
                let a: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
                let (m, sd) = crate::nn::mean_std(&a);
                for s in &mut batch {
                    s.advantage = (s.advantage - m) / (sd + 1e-8);
                }
            }
            agent.update(&batch, &mut shuffle_rng)?;
            updates += (agent.config.epochs * agent.config.minibatches) as u64;
            batch.clear();
            in_batch = 0;
        }
        log.gradient_steps = updates;
    }
    Ok(agent)
}
