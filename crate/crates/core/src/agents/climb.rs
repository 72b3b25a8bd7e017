//! CLIMB-Disc: iterative search over budget-size subsets guided by a learned
//! surrogate of the absolute subset score.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::clustering::SubsampleStrategy;
use crate::error::{Error, Result};
use crate::mdp::{binomial, ClusterSet, Combinations, EncodingKind, SelectionEnv, StateEncoder};
use crate::nn::{clip_grad_norm, Adam, Mlp, GRAD_CLIP_NORM};
use crate::reward::RewardEngine;
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClimbConfig {
    pub iterations: usize,
    pub sample_size: usize,
    pub top_k: usize,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub encoding: EncodingKind,
}

impl Default for ClimbConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            sample_size: 128,
            top_k: 32,
            hidden: 128,
            layers: 3,
            lr: 1e-4,
            epochs: 2,
            batch_size: 32,
            encoding: EncodingKind::BinaryMask,
        }
    }
}

impl ClimbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.top_k > self.sample_size {
            return Err(Error::ConfigInvalid("need 0 < top_k <= sample_size".into()));
        }
        if self.iterations == 0 || self.lr <= 0.0 || self.hidden == 0 || self.layers < 2 || self.batch_size == 0 {
            return Err(Error::ConfigInvalid("invalid CLIMB hyperparameters".into()));
        }
        if self.encoding == EncodingKind::Concat {
            return Err(Error::ConfigInvalid("the CLIMB surrogate takes BinaryMask or MeanStd".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbIteration {
    pub iteration: usize,
    pub sampled: usize,
    pub queried: usize,
    pub best_reward: f64,
    pub oracle_calls: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ClimbOutcome {
    pub best: ClusterSet,
    pub best_reward: f64,
    /// Every subset whose true score was queried, in query order.
    pub queried: Vec<(ClusterSet, f64)>,
    pub surrogate: Mlp,
    /// True when the subset space was no larger than one sample.
    pub exhaustive_fallback: bool,
    pub iterations: Vec<ClimbIteration>,
}

struct Surrogate {
    net: Mlp,
    opt: Adam,
    encoder: StateEncoder,
}

impl Surrogate {
    fn score(&self, set: &ClusterSet) -> Result<f64> {
        Ok(self.net.forward(&self.encoder.encode_set(set).vector)?[0])
    }

    fn train(&mut self, labels: &[(ClusterSet, f64)], epochs: usize, batch: usize, rng: &mut rng::Rng) -> Result<()> {
        let inputs: Vec<Vec<f64>> = labels.iter().map(|(s, _)| self.encoder.encode_set(s).vector).collect();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            for mb in order.chunks(batch) {
                let n = mb.len() as f64;
                let mut g = vec![0.0; self.net.params().len()];
                for &i in mb {
                    let y = labels[i].1;
                    self.net.accumulate(&inputs[i], &mut g, |o| vec![2.0 * (o[0] - y) / n])?;
                }
                clip_grad_norm(&mut g, GRAD_CLIP_NORM);
                self.opt.step(self.net.params_mut(), &g)?;
            }
        }
        Ok(())
    }
}

/// Up to `m` distinct budget-size subsets not in `seen`, uniformly drawn.
fn sample_unseen(k: usize, h: usize, m: usize, seen: &BTreeSet<ClusterSet>, rng: &mut rng::Rng) -> Result<Vec<ClusterSet>> {
    let total = binomial(k, h);
    let remaining = total.saturating_sub(seen.len() as u128);
    if remaining <= m as u128 {
        return Combinations::new(k, h)
            .map(|c| ClusterSet::from_indices(k, c))
            .filter(|s| s.as_ref().map_or(true, |s| !seen.contains(s)))
            .collect();
    }
    let mut picked = BTreeSet::new();
    let mut out = Vec::with_capacity(m);
    let mut attempts = 0usize;
    while out.len() < m && attempts < 1000 * m {
        attempts += 1;
        let s = ClusterSet::from_indices(k, index::sample(rng, k, h).into_iter())?;
        if !seen.contains(&s) && picked.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}

pub fn climb_disc(reward: &RewardEngine, env: &SelectionEnv, config: ClimbConfig, seed: u64) -> Result<ClimbOutcome> {
    config.validate()?;
    let (k, h) = (env.k(), env.budget());
    let encoder = match config.encoding {
        EncodingKind::BinaryMask => StateEncoder::binary_mask(k),
        kind => StateEncoder::new(reward.model(), kind, 1, SubsampleStrategy::Furthest, seed)?,
    };
    let net = Mlp::with_layers(encoder.width(), config.hidden, config.layers, 1, rng::derive_seed(seed, streams::NET_INIT));
    let mut sur = Surrogate {
        opt: Adam::new(net.params().len(), config.lr),
        net,
        encoder,
    };
    let mut rng = rng::stream(seed, streams::SEARCH);
    let started = Instant::now();
    let mut seen: BTreeSet<ClusterSet> = BTreeSet::new();
    let mut queried: Vec<(ClusterSet, f64)> = Vec::new();
    let mut iterations = Vec::new();
    let exhaustive = binomial(k, h) <= config.sample_size as u128;

    if exhaustive {
        for c in Combinations::new(k, h) {
            let s = ClusterSet::from_indices(k, c)?;
            let r = reward.score(&s)?;
            queried.push((s, r));
        }
        sur.train(&queried, config.epochs, config.batch_size, &mut rng)?;
    } else {
        for it in 0..config.iterations {
            let sample = sample_unseen(k, h, config.sample_size, &seen, &mut rng)?;
            if sample.is_empty() {
                break;
            }
            let mut ranked = sample
                .into_iter()
                .map(|s| Ok((sur.score(&s)?, s)))
                .collect::<Result<Vec<_>>>()?;
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            let n_query = config.top_k.min(ranked.len());
            for (_, s) in ranked.into_iter().take(n_query) {
                let r = reward.score(&s)?;
                seen.insert(s.clone());
                queried.push((s, r));
            }
            sur.train(&queried, config.epochs, config.batch_size, &mut rng)?;
            iterations.push(ClimbIteration {
                iteration: it,
                sampled: config.sample_size,
                queried: n_query,
                best_reward: queried.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max),
                oracle_calls: reward.oracle_calls(),
                wall_ms: started.elapsed().as_millis() as u64,
            });
        }
        if queried.len() > config.iterations * config.top_k {
            return Err(Error::InvalidState(format!(
                "CLIMB queried {} subsets, more than T*K = {}",
                queried.len(),
                config.iterations * config.top_k
            )));
        }
    }

    let mut best: Option<(f64, f64, &ClusterSet)> = None;
    for (s, r) in &queried {
        let sc = sur.score(s)?;
        let better = match best {
            None => true,
            Some((br, bs, bset)) => *r > br || (*r == br && (sc > bs || (sc == bs && s < bset))),
        };
        if better {
            best = Some((*r, sc, s));
        }
    }
    let (best_reward, _, best_set) = best.ok_or_else(|| Error::InvalidState("CLIMB queried nothing".into()))?;
    if queried.iter().any(|(_, r)| *r > best_reward) {
        return Err(Error::InvalidState("CLIMB returned a dominated state".into()));
    }
    Ok(ClimbOutcome {
        best: best_set.clone(),
        best_reward,
        queried: queried.clone(),
        surrogate: sur.net,
        exhaustive_fallback: exhaustive,
        iterations,
    })
}
