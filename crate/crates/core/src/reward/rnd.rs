//! Random network distillation novelty bonus.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Adam, Mlp, RunningMeanStd};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RndConfig {
    pub beta: f64,
    pub hidden: usize,
    pub output: usize,
    pub lr: f64,
    pub obs_clip: f64,
}

impl Default for RndConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            hidden: 64,
            output: 16,
            lr: 1e-3,
            obs_clip: 5.0,
        }
    }
}

/// A frozen random target net and a trainable predictor, both 4-layer MLPs.
/// The bonus is the predictor's error on the normalised state, scaled by the
/// running standard deviation of past errors.
#[derive(Debug, Clone)]
pub struct RndBonus {
    config: RndConfig,
    target: Mlp,
    predictor: Mlp,
    opt: Adam,
    state_norm: RunningMeanStd,
    reward_norm: RunningMeanStd,
}

impl RndBonus {
    pub fn new(input_dim: usize, config: RndConfig, seed: u64) -> Self {
        let mut target = Mlp::with_layers(input_dim, config.hidden, 4, config.output, rng::derive_seed(seed, 1));
        // random biases keep the target non-trivial at the origin
        let mut brng = rng::stream(seed, 3);
        let widths = target.widths().to_vec();
        let mut off = 0;
        for pair in widths.windows(2) {
            off += pair[0] * pair[1];
            for b in &mut target.params_mut()[off..off + pair[1]] {
                *b = brng.random_range(-1.0..1.0);
            }
            off += pair[1];
        }
        let predictor = Mlp::with_layers(input_dim, config.hidden, 4, config.output, rng::derive_seed(seed, 2));
        let opt = Adam::new(predictor.params().len(), config.lr);
        Self {
            target,
            predictor,
            opt,
            state_norm: RunningMeanStd::new(input_dim),
            reward_norm: RunningMeanStd::new(1),
            config,
        }
    }

    pub fn beta(&self) -> f64 {
        self.config.beta
    }

    pub fn input_dim(&self) -> usize {
        self.target.input_dim()
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    /// Replaces the predictor with a copy of the target.
    pub fn copy_target_into_predictor(&mut self) {
        self.predictor = self.target.clone();
    }

    pub fn target_fingerprint(&self) -> u64 {
        nn::fingerprint(self.target.params())
    }

    /// Un-normalised prediction error on an already normalised input.
    pub fn raw_mse(&self, x: &[f64]) -> Result<f64> {
        let t = self.target.forward(x)?;
        let p = self.predictor.forward(x)?;
        Ok(nn::loss::mse(&p, &t).0)
    }

    /// Computes the bonus for `encoding`, then updates the running statistics
    /// and takes one predictor step on it.
    pub fn intrinsic(&mut self, encoding: &[f64]) -> Result<f64> {
        if encoding.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "RND expects width {}, got {}",
                self.input_dim(),
                encoding.len()
            )));
        }
        self.state_norm.update(encoding);
        let x = self.state_norm.normalize(encoding, self.config.obs_clip);
        let target = self.target.forward(&x)?;
        let mut grads = vec![0.0; self.predictor.params().len()];
        let mut err = 0.0;
        self.predictor.accumulate(&x, &mut grads, |out| {
            let (l, g) = nn::loss::mse(out, &target);
            err = l;
            g
        })?;
        self.reward_norm.update(&[err]);
        nn::clip_grad_norm(&mut grads, nn::GRAD_CLIP_NORM);
        self.opt.step(self.predictor.params_mut(), &grads)?;
        Ok(err / (self.reward_norm.std(0) + 1e-8))
    }

    /// `extrinsic + beta * intrinsic`.
    pub fn shaped(&mut self, extrinsic: f64, next_encoding: &[f64]) -> Result<f64> {
        if self.config.beta == 0.0 {
            return Ok(extrinsic);
        }
        Ok(extrinsic + self.config.beta * self.intrinsic(next_encoding)?)
    }
}
