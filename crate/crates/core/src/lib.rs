//! Budgeted training-data subset selection as a sequential decision problem.
//!
//! A dataset is clustered into `k` semantic clusters. An episode starts from
//! the empty set and adds one unselected cluster per step until the budget is
//! spent; rewards are score differences reported by a proxy-model oracle.
//! Policies are learned with DQN, PPO, a Dyna-style DQN and a
//! surrogate-guided search, and compared against simple baselines and an
//! exhaustive optimum.

pub mod agents;
pub mod baselines;
pub mod clustering;
pub mod error;
pub mod harness;
pub mod io;
pub mod mdp;
pub mod nn;
pub mod reward;
pub mod rng;

pub use clustering::{ClusterModel, EmbeddingMatrix, LabelVector, SubsampleStrategy};
pub use error::{Error, Result};
pub use mdp::{ClusterSet, EncodingKind, SelectionEnv, StateEncoder, StateEncoding, SubsetState};
pub use reward::{apply_f, RewardEngine, RewardKind, RewardOracle};
