//! A deterministic reward landscape with an enumerable optimum.
//!
//! `V(S) = sum_{i in S} q_i - lambda * sum_{i<j in S} w_ij` and
//! `loss(S) = 0.5 * exp(2.5 - c * V(S))`, so `f(loss(S)) = 2c * V(S)` and the
//! empty set scores exactly zero.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::oracle::{Capabilities, RewardOracle, Split};
use crate::clustering::{ClusterModel, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::mdp::ClusterSet;
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeSpec {
    pub redundancy_prob: f64,
    pub lambda: f64,
    pub c: f64,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            redundancy_prob: 0.3,
            lambda: 0.5,
            c: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    quality: Vec<f64>,
    /// Symmetric `k x k` redundancy weights with a zero diagonal.
    redundancy: Vec<f64>,
    lambda: f64,
    c: f64,
    /// Added to `V` when answering training-split queries.
    #[serde(default)]
    train_shift: f64,
}

impl SyntheticLandscape {
    pub fn new(quality: Vec<f64>, redundancy: Vec<f64>, lambda: f64, c: f64) -> Result<Self> {
        let k = quality.len();
        if k == 0 {
            return Err(Error::InvalidArgument("landscape needs at least one cluster".into()));
        }
        if redundancy.len() != k * k {
            return Err(Error::InvalidArgument(format!("redundancy must be {k}x{k}")));
        }
        if !(c > 0.0) || !(lambda >= 0.0) {
            return Err(Error::InvalidArgument("need c > 0 and lambda >= 0".into()));
        }
        for i in 0..k {
            if redundancy[i * k + i] != 0.0 {
                return Err(Error::InvalidArgument("redundancy diagonal must be zero".into()));
            }
            for j in 0..k {
                let w = redundancy[i * k + j];
                if !(w >= 0.0) || w != redundancy[j * k + i] {
                    return Err(Error::InvalidArgument(
                        "redundancy must be symmetric and non-negative".into(),
                    ));
                }
            }
        }
        Ok(Self {
            quality,
            redundancy,
            lambda,
            c,
            train_shift: 0.0,
        })
    }

    /// Purely modular landscape (`lambda = 0`).
    pub fn modular(quality: Vec<f64>, c: f64) -> Result<Self> {
        let k = quality.len();
        Self::new(quality, vec![0.0; k * k], 0.0, c)
    }

    /// `q_i ~ U(0,1)`, `w_ij ~ U(0,1) * Bernoulli(p)`.
    pub fn random(k: usize, spec: &LandscapeSpec, seed: u64) -> Self {
        let mut rng = rng::stream(seed, streams::LANDSCAPE);
        let quality: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let mut redundancy = vec![0.0; k * k];
        for i in 0..k {
            for j in i + 1..k {
                let u: f64 = rng.random();
                let keep = rng.random::<f64>() < spec.redundancy_prob;
                let w = if keep { u } else { 0.0 };
                redundancy[i * k + j] = w;
                redundancy[j * k + i] = w;
            }
        }
        Self {
            quality,
            redundancy,
            lambda: spec.lambda,
            c: spec.c,
            train_shift: 0.0,
        }
    }

    pub fn with_train_shift(mut self, shift: f64) -> Self {
        self.train_shift = shift;
        self
    }

    pub fn k(&self) -> usize {
        self.quality.len()
    }

    pub fn quality(&self) -> &[f64] {
        &self.quality
    }

    pub fn redundancy(&self, i: usize, j: usize) -> f64 {
        self.redundancy[i * self.k() + j]
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn value<I: IntoIterator<Item = usize>>(&self, clusters: I) -> f64 {
        let members: Vec<usize> = clusters.into_iter().collect();
        let mut v: f64 = members.iter().map(|&i| self.quality[i]).sum();
        let mut penalty = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                penalty += self.redundancy(i, j);
            }
        }
        v -= self.lambda * penalty;
        v
    }

    pub fn value_of(&self, set: &ClusterSet) -> f64 {
        self.value(set.iter())
    }

    pub fn loss_from_value(&self, v: f64) -> f64 {
        0.5 * (2.5 - self.c * v).exp()
    }

    pub fn loss(&self, set: &ClusterSet) -> f64 {
        self.loss_from_value(self.value_of(set))
    }

    pub fn acc_from_value(v: f64) -> f64 {
        (0.5 + 0.1 * v).clamp(0.0, 1.0)
    }

    /// Closed-form reward of adding `a` to `s`: `2c (q_a - lambda sum_j w_aj)`.
    pub fn analytic_reward(&self, s: &ClusterSet, a: usize) -> f64 {
        let pen: f64 = s.iter().map(|j| self.redundancy(a, j)).sum();
        2.0 * self.c * (self.quality[a] - self.lambda * pen)
    }
}

/// Losses of a synthetic landscape, answered over point ids via the cluster
/// assignment.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    landscape: Arc<SyntheticLandscape>,
    assignment: Vec<usize>,
    point_noise: Vec<f64>,
}

impl SyntheticOracle {
    pub fn new(landscape: Arc<SyntheticLandscape>, assignment: Vec<usize>, seed: u64) -> Result<Self> {
        if let Some(&c) = assignment.iter().find(|&&c| c >= landscape.k()) {
            return Err(Error::InvalidArgument(format!("point assigned to unknown cluster {c}")));
        }
        let mut rng = rng::stream(seed, streams::SYNTHETIC);
        let point_noise = (0..assignment.len()).map(|_| rng.random::<f64>()).collect();
        Ok(Self {
            landscape,
            assignment,
            point_noise,
        })
    }

    pub fn landscape(&self) -> &SyntheticLandscape {
        &self.landscape
    }

    /// Clusters touched by a point-id query.
    pub fn clusters_of(&self, ids: &[usize]) -> Result<ClusterSet> {
        let k = self.landscape.k();
        let mut touched = vec![false; k];
        for &p in ids {
            let c = *self
                .assignment
                .get(p)
                .ok_or_else(|| Error::OracleFailure(format!("unknown point id {p}")))?;
            touched[c] = true;
        }
        ClusterSet::from_indices(k, (0..k).filter(|&c| touched[c]))
    }
}

impl RewardOracle for SyntheticOracle {
    fn capabilities(&self) -> Capabilities {
        Capabilities::all()
    }

    fn eval_loss(&self, split: Split, train_ids: &[usize]) -> Result<f64> {
        let set = self.clusters_of(train_ids)?;
        let mut v = self.landscape.value_of(&set);
        if split == Split::Train && !set.is_empty() {
            v += self.landscape.train_shift;
        }
        Ok(self.landscape.loss_from_value(v))
    }

    fn eval_acc(&self, train_ids: &[usize]) -> Result<f64> {
        let set = self.clusters_of(train_ids)?;
        Ok(SyntheticLandscape::acc_from_value(self.landscape.value_of(&set)))
    }

    /// Each point's loss is its cluster's singleton loss, jittered by up to 10%.
    fn point_losses(&self) -> Result<Vec<f64>> {
        Ok(self
            .assignment
            .iter()
            .zip(&self.point_noise)
            .map(|(&c, u)| self.landscape.loss_from_value(self.landscape.quality[c]) * (1.0 + 0.1 * u))
            .collect())
    }
}

/// Gaussian-blob embeddings whose generating cluster is the assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticDataSpec {
    pub dim: usize,
    pub points_per_cluster: usize,
    pub spread: f64,
}

impl Default for SyntheticDataSpec {
    fn default() -> Self {
        Self {
            dim: 8,
            points_per_cluster: 16,
            spread: 0.25,
        }
    }
}

pub fn synthetic_cluster_model(k: usize, spec: &SyntheticDataSpec, seed: u64) -> Result<ClusterModel> {
    if k == 0 || spec.dim == 0 || spec.points_per_cluster == 0 {
        return Err(Error::InvalidArgument("synthetic data needs k, dim and points > 0".into()));
    }
    let mut rng = rng::stream(seed, streams::SYNTHETIC + 100);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let centres: Vec<f64> = (0..k * spec.dim).map(|_| unit.sample(&mut rng)).collect();
    let mut data = Vec::with_capacity(k * spec.points_per_cluster * spec.dim);
    let mut assignment = Vec::with_capacity(k * spec.points_per_cluster);
    for c in 0..k {
        for _ in 0..spec.points_per_cluster {
            for d in 0..spec.dim {
                data.push(centres[c * spec.dim + d] + spec.spread * unit.sample(&mut rng));
            }
            assignment.push(c);
        }
    }
    let emb = Arc::new(EmbeddingMatrix::new(assignment.len(), spec.dim, data)?);
    ClusterModel::from_assignment(emb, assignment, k)
}
