//! Network heads over state encodings.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::StateEncoding;
use crate::nn::{read_checkpoint, write_checkpoint, Mlp, MlpArch, TinyTransformer, TransformerArch};

/// An MLP over the flat encoding or a transformer over `Concat` slots.
#[derive(Debug, Clone)]
pub enum ValueNet {
    Mlp(Mlp),
    Transformer(TinyTransformer),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NetArch {
    Mlp(MlpArch),
    Transformer(TransformerArch),
}

impl ValueNet {
    pub fn mlp(input: usize, hidden: usize, n_layers: usize, output: usize, seed: u64) -> Self {
        Self::Mlp(Mlp::with_layers(input, hidden, n_layers, output, seed))
    }

    /// A transformer reading `n_slots` tokens of `token_width`.
    pub fn transformer(n_slots: usize, token_width: usize, output: usize, seed: u64) -> Self {
        Self::Transformer(TinyTransformer::new(TransformerArch::new(n_slots, token_width, output), seed))
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Self::Mlp(m) => m.params(),
            Self::Transformer(t) => t.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Self::Mlp(m) => m.params_mut(),
            Self::Transformer(t) => t.params_mut(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Mlp(m) => m.output_dim(),
            Self::Transformer(t) => t.output_dim(),
        }
    }

    fn slots<'e>(&self, enc: &'e StateEncoding) -> Result<&'e [bool]> {
        if enc.slot_valid.is_empty() {
            return Err(Error::InvalidArgument("transformer head needs the Concat encoding".into()));
        }
        Ok(&enc.slot_valid)
    }

    pub fn forward(&self, enc: &StateEncoding) -> Result<Vec<f64>> {
        match self {
            Self::Mlp(m) => m.forward(&enc.vector),
            Self::Transformer(t) => t.forward(&enc.vector, self.slots(enc)?),
        }
    }

    /// Forward pass plus backprop of `loss_grad(output)` into `grads`.
    pub fn accumulate<F>(&self, enc: &StateEncoding, grads: &mut [f64], loss_grad: F) -> Result<Vec<f64>>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        match self {
            Self::Mlp(m) => m.accumulate(&enc.vector, grads, loss_grad),
            Self::Transformer(t) => t.accumulate(&enc.vector, self.slots(enc)?, grads, loss_grad),
        }
    }

    pub fn arch(&self) -> NetArch {
        match self {
            Self::Mlp(m) => NetArch::Mlp(m.arch()),
            Self::Transformer(t) => NetArch::Transformer(t.arch()),
        }
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        write_checkpoint(w, &self.arch(), self.params())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let (arch, params): (NetArch, Vec<f64>) = read_checkpoint(r)?;
        Ok(match arch {
            NetArch::Mlp(a) => Self::Mlp(Mlp::from_parts(a.widths, params)?),
            NetArch::Transformer(a) => Self::Transformer(TinyTransformer::from_parts(a, params)?),
        })
    }
}
