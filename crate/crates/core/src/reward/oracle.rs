use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// What an oracle can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub eval_val_loss: bool,
    pub eval_train_loss: bool,
    pub eval_val_acc: bool,
    pub point_losses: bool,
}

impl Capabilities {
    pub fn all() -> Self {
        Self {
            eval_val_loss: true,
            eval_train_loss: true,
            eval_val_acc: true,
            point_losses: true,
        }
    }

    /// Parses the capability list of a protocol handshake.
    pub fn from_names<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Self {
        let mut caps = Self::default();
        for n in names {
            match n {
                "eval_loss" => {
                    caps.eval_val_loss = true;
                    caps.eval_train_loss = true;
                }
                "eval_acc" => caps.eval_val_acc = true,
                "point_losses" => caps.point_losses = true,
                _ => {}
            }
        }
        caps
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.eval_val_loss || self.eval_train_loss {
            names.push("eval_loss");
        }
        if self.eval_val_acc {
            names.push("eval_acc");
        }
        if self.point_losses {
            names.push("point_losses");
        }
        names
    }
}

/// Evaluates a proxy model trained on a point subset.
///
/// Queries are sorted, deduplicated point-id lists. An empty list asks for the
/// base (untrained) model. Implementations must be deterministic for a fixed
/// configuration.
pub trait RewardOracle: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Loss on the validation split (or the training subset itself for
    /// `Split::Train`) after training on `train_ids`.
    fn eval_loss(&self, split: Split, train_ids: &[usize]) -> Result<f64>;

    fn eval_acc(&self, _train_ids: &[usize]) -> Result<f64> {
        Err(Error::Capability("eval_acc"))
    }

    /// Per-point loss of the base proxy model over the whole training set.
    fn point_losses(&self) -> Result<Vec<f64>> {
        Err(Error::Capability("point_losses"))
    }
}
