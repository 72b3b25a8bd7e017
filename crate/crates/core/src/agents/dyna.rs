//! DQN augmented with synthetic transitions labelled by a reward-model
//! ensemble and gated by ensemble disagreement.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dqn::{run_dqn, DqnAgent, DqnConfig, DqnHooks};
use super::replay::{ReplayBuffer, Transition};
use super::{AgentContext, TrainResult};
use crate::error::{Error, Result};
use crate::mdp::{action_mask, ClusterSet, SubsetState};
use crate::nn::{clip_grad_norm, mean_std, Adam, Mlp, Welford, GRAD_CLIP_NORM};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynaConfig {
    pub ensemble_size: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Fixed disagreement gate; `None` uses half the running std of real rewards.
    pub sigma_max: Option<f64>,
    pub samples_per_step: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub model_batch: usize,
    pub synthetic_weight: f64,
    pub max_age: u32,
    pub warmup_episodes: usize,
}

impl Default for DynaConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 4,
            hidden: 256,
            layers: 5,
            sigma_max: None,
            samples_per_step: 32,
            lr: 5e-4,
            weight_decay: 1e-4,
            model_batch: 32,
            synthetic_weight: 0.5,
            max_age: 4,
            warmup_episodes: 5,
        }
    }
}

impl DynaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size != 4 {
            return Err(Error::ConfigInvalid("the reward ensemble has exactly 4 members".into()));
        }
        if self.sigma_max.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::ConfigInvalid("sigma_max must be positive".into()));
        }
        if self.lr <= 0.0 || self.hidden == 0 || self.layers < 2 || self.model_batch == 0 {
            return Err(Error::ConfigInvalid("invalid reward-model hyperparameters".into()));
        }
        Ok(())
    }
}

/// Ensemble mean and population std, and whether the std clears `sigma_max`.
pub fn ensemble_gate(predictions: &[f64], sigma_max: f64) -> (f64, f64, bool) {
    let (mean, std) = mean_std(predictions);
    (mean, std, std < sigma_max)
}

struct RewardEnsemble {
    members: Vec<Mlp>,
    opts: Vec<Adam>,
    rngs: Vec<rng::Rng>,
}

impl RewardEnsemble {
    fn new(cfg: &DynaConfig, input: usize, seed: u64) -> Self {
        let members: Vec<Mlp> = (0..cfg.ensemble_size)
            .map(|i| Mlp::with_layers(input, cfg.hidden, cfg.layers, 1, rng::derive_seed(seed, 100 + i as u64)))
            .collect();
        let opts = members
            .iter()
            .map(|m| Adam::new(m.params().len(), cfg.lr).with_weight_decay(cfg.weight_decay))
            .collect();
        let rngs = (0..cfg.ensemble_size).map(|i| rng::stream(seed, 200 + i as u64)).collect();
        Self { members, opts, rngs }
    }

    /// One minibatch step per member, each on its own draw of the data.
    fn train_step(&mut self, data: &[(Vec<f64>, f64)], batch: usize) -> Result<()> {
        for ((m, opt), r) in self.members.iter_mut().zip(&mut self.opts).zip(&mut self.rngs) {
            let b = batch.min(data.len());
            let mut grads = vec![0.0; m.params().len()];
            for _ in 0..b {
                let (x, y) = &data[r.random_range(0..data.len())];
                m.accumulate(x, &mut grads, |out| vec![2.0 * (out[0] - y) / b as f64])?;
            }
            clip_grad_norm(&mut grads, GRAD_CLIP_NORM);
            opt.step(m.params_mut(), &grads)?;
        }
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.members.iter().map(|m| Ok(m.forward(x)?[0])).collect()
    }
}

struct DynaHooks {
    cfg: DynaConfig,
    ensemble: Option<RewardEnsemble>,
    data: Vec<(Vec<f64>, f64)>,
    real_rewards: Welford,
    rng: rng::Rng,
    seed: u64,
    inserted: u64,
    rejected: u64,
}

fn model_input(enc: &[f64], action: usize, k: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(enc.len() + k);
    x.extend_from_slice(enc);
    x.extend((0..k).map(|i| if i == action { 1.0 } else { 0.0 }));
    x
}

impl DynaHooks {
    fn sigma_max(&self) -> f64 {
        self.cfg.sigma_max.unwrap_or(0.5 * self.real_rewards.std())
    }

    /// Checks the synthetic-entry contract over the whole buffer.
    fn check_buffer_law(&self, replay: &ReplayBuffer) -> Result<()> {
        for t in replay.iter().filter(|t| t.is_synthetic) {
            let gate_ok = t.gate.is_some_and(|(std, thr)| std < thr);
            if !gate_ok || t.age_episodes > self.cfg.max_age || t.weight != self.cfg.synthetic_weight {
                return Err(Error::InvalidState(format!(
                    "synthetic transition violates the buffer law: gate {:?}, age {}, weight {}",
                    t.gate, t.age_episodes, t.weight
                )));
            }
        }
        Ok(())
    }

    fn imagine(&mut self, replay: &mut ReplayBuffer, ctx: &AgentContext) -> Result<()> {
        let ensemble = self.ensemble.as_ref().expect("ensemble built on first transition");
        let (k, budget) = (ctx.env.k(), ctx.env.budget());
        let thr = self.sigma_max();
        for _ in 0..self.cfg.samples_per_step {
            let size = self.rng.random_range(0..budget);
            let picks = index::sample(&mut self.rng, k, size + 1).into_vec();
            let set = ClusterSet::from_indices(k, picks[..size].iter().copied())?;
            let action = picks[size];
            let state = SubsetState::from_set(set, budget)?;
            let (next, terminal) = ctx.env.step(&state, action)?;
            let enc = ctx.encoder.encode(&state);
            let preds = ensemble.predict(&model_input(&enc.vector, action, k))?;
            let (mean, std, accept) = ensemble_gate(&preds, thr);
            if !accept {
                self.rejected += 1;
                continue;
            }
            self.inserted += 1;
            replay.push(Transition {
                enc,
                action,
                reward: mean,
                next_enc: ctx.encoder.encode(&next),
                next_mask: action_mask(&next),
                terminal,
                is_synthetic: true,
                weight: self.cfg.synthetic_weight,
                age_episodes: 0,
                gate: Some((std, thr)),
            });
        }
        Ok(())
    }
}

impl DqnHooks for DynaHooks {
    fn on_real_transition(&mut self, t: &Transition, replay: &mut ReplayBuffer, episode: usize, ctx: &AgentContext) -> Result<()> {
        let k = ctx.env.k();
        let x = model_input(&t.enc.vector, t.action, k);
        if self.ensemble.is_none() {
            self.ensemble = Some(RewardEnsemble::new(&self.cfg, x.len(), self.seed));
        }
        self.data.push((x, t.reward));
        self.real_rewards.push(t.reward);
        let batch = self.cfg.model_batch;
        self.ensemble.as_mut().expect("just built").train_step(&self.data, batch)?;
        if episode >= self.cfg.warmup_episodes {
            self.imagine(replay, ctx)?;
        }
        self.check_buffer_law(replay)
    }

    fn policy_enabled(&self, episode: usize) -> bool {
        episode >= self.cfg.warmup_episodes
    }

    fn on_episode_end(&mut self, replay: &mut ReplayBuffer) -> Result<()> {
        replay.end_episode(self.cfg.max_age);
        self.check_buffer_law(replay)
    }
}

/// Counters from a DynaDQN run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynaStats {
    pub synthetic_inserted: u64,
    pub synthetic_rejected: u64,
}

pub fn dyna_dqn_train(
    ctx: &mut AgentContext,
    config: DynaConfig,
    dqn_config: DqnConfig,
    seed: u64,
) -> TrainResult<(DqnAgent, DynaStats)> {
    if let Err(error) = config.validate() {
        return Err(super::TrainFailure {
            error,
            log: Default::default(),
        });
    }
    let mut hooks = DynaHooks {
        cfg: config,
        ensemble: None,
        data: Vec::new(),
        real_rewards: Welford::default(),
        rng: rng::stream(seed, streams::SYNTHETIC),
        seed: rng::derive_seed(seed, streams::SYNTHETIC + 100),
        inserted: 0,
        rejected: 0,
    };
    let (agent, log) = run_dqn(ctx, dqn_config, seed, &mut hooks)?;
    let stats = DynaStats {
        synthetic_inserted: hooks.inserted,
        synthetic_rejected: hooks.rejected,
    };
    Ok(((agent, stats), log))
}
