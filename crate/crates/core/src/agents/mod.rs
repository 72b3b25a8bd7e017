//! Policy learners over the cluster-subset MDP and greedy/stochastic rollout
//! of a learned policy.

pub mod climb;
pub mod dqn;
pub mod dyna;
pub mod net;
pub mod ppo;
pub mod replay;

use std::io::Write;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{action_mask, ActionMask, SelectionEnv, StateEncoder, StateEncoding, SubsetState};
use crate::nn::loss::masked_softmax;
use crate::reward::{RewardEngine, RndBonus};
use crate::rng;

pub use climb::{climb_disc, ClimbConfig, ClimbOutcome};
pub use dqn::{dqn_train, DqnAgent, DqnConfig, QHead};
pub use dyna::{dyna_dqn_train, DynaConfig};
pub use net::ValueNet;
pub use ppo::{ppo_train, warm_start_critic, PpoAgent, PpoConfig};
pub use replay::{ReplayBuffer, Transition};

/// Everything an agent needs to interact with the MDP.
pub struct AgentContext<'a> {
    pub env: SelectionEnv,
    pub encoder: &'a StateEncoder,
    pub reward: &'a RewardEngine,
    pub rnd: Option<RndBonus>,
}

impl<'a> AgentContext<'a> {
    pub fn new(env: SelectionEnv, encoder: &'a StateEncoder, reward: &'a RewardEngine) -> Self {
        Self {
            env,
            encoder,
            reward,
            rnd: None,
        }
    }

    pub fn with_rnd(mut self, rnd: RndBonus) -> Self {
        self.rnd = Some(rnd);
        self
    }

    /// Extrinsic reward and the reward used for learning (with any RND bonus).
    fn rewards(&mut self, state: &SubsetState, action: usize, next_enc: &StateEncoding) -> Result<(f64, f64)> {
        let r = self.reward.reward(state, action)?;
        let shaped = match self.rnd.as_mut() {
            Some(rnd) => rnd.shaped(r, &next_enc.vector)?,
            None => r,
        };
        Ok((r, shaped))
    }

    /// Steps the environment, counting rather than hiding a masked action.
    fn step_checked(&self, state: &SubsetState, action: usize, log: &mut TrainingLog) -> Result<(SubsetState, bool)> {
        match self.env.step(state, action) {
            Err(e @ Error::InvalidAction(_)) => {
                log.invalid_actions += 1;
                Err(e)
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub epsilon_or_entropy: f64,
    pub oracle_calls: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    pub invalid_actions: u64,
    pub gradient_steps: u64,
}

impl TrainingLog {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.episodes {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.ret).collect()
    }

    fn record(&mut self, ret: f64, aux: f64, oracle_calls: u64, started: Instant) {
        self.episodes.push(EpisodeLog {
            episode: self.episodes.len(),
            ret,
            epsilon_or_entropy: aux,
            oracle_calls,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
}

/// A training run that stopped early, with the log up to the failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub log: TrainingLog,
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} episodes)", self.error, self.log.episodes.len())
    }
}

pub type TrainResult<T> = std::result::Result<(T, TrainingLog), TrainFailure>;

/// Index of the largest score among valid actions; ties go to the lowest index.
pub fn masked_argmax(scores: &[f64], mask: &ActionMask) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&s, &ok)) in scores.iter().zip(&mask.valid).enumerate() {
        if ok && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Uniform choice among valid actions.
pub fn random_valid_action(mask: &ActionMask, rng: &mut rng::Rng) -> Option<usize> {
    let n = mask.count();
    (n > 0).then(|| mask.valid_actions().nth(rng.random_range(0..n)).expect("n > 0"))
}

/// Samples from the softmax of `scores` restricted to valid actions.
pub fn sample_masked(scores: &[f64], mask: &ActionMask, rng: &mut rng::Rng) -> Option<usize> {
    let probs = masked_softmax(scores, &mask.valid);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, p) in probs.iter().enumerate() {
        if mask.valid[i] {
            last = Some(i);
            acc += p;
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

/// Something that scores every action of a state; higher is better.
pub trait Policy {
    fn action_scores(&self, encoding: &StateEncoding) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    Greedy,
    Stochastic,
}

/// Applies `policy` from the empty state until the budget is spent.
pub fn rollout_policy(
    policy: &dyn Policy,
    env: &SelectionEnv,
    encoder: &StateEncoder,
    mode: RolloutMode,
    seed: u64,
) -> Result<SubsetState> {
    let mut rng = rng::stream(seed, rng::streams::EXPLORATION + 50);
    let mut state = env.reset();
    while !state.is_terminal() {
        let mask = action_mask(&state);
        let scores = policy.action_scores(&encoder.encode(&state))?;
        let action = match mode {
            RolloutMode::Greedy => masked_argmax(&scores, &mask),
            RolloutMode::Stochastic => sample_masked(&scores, &mask, &mut rng),
        }
        .ok_or_else(|| Error::InvalidState("no valid action before the budget".into()))?;
        state = env.step(&state, action)?.0;
    }
    Ok(state)
}
