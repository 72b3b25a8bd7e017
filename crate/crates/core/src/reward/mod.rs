//! Rewards for the selection MDP.
//!
//! Every reward is a difference of a set score, `score(s + a) - score(s)`,
//! where the score is `f(loss)` for the loss-based variants and the raw
//! validation accuracy for the accuracy variant. Oracle answers are cached per
//! cluster set so each distinct subset is evaluated once.

pub mod external;
pub mod oracle;
pub mod rnd;
pub mod synthetic;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::mdp::{ClusterSet, SubsetState};

pub use external::ExternalOracle;
pub use oracle::{Capabilities, RewardOracle, Split};
pub use rnd::{RndBonus, RndConfig};
pub use synthetic::{LandscapeSpec, SyntheticLandscape, SyntheticOracle};

/// `f(x) = 5 - 2 ln(2x)`, strictly decreasing, zero at `x = e^2.5 / 2`.
pub fn apply_f(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("loss must be positive and finite, got {x}")));
    }
    Ok(5.0 - 2.0 * (2.0 * x).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Acc,
    LossTrain,
    LossVal,
}

/// Which raw oracle quantity a cache entry holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Train,
    Val,
    Acc,
}

impl RewardKind {
    pub fn metric(self) -> Metric {
        match self {
            RewardKind::Acc => Metric::Acc,
            RewardKind::LossTrain => Metric::Train,
            RewardKind::LossVal => Metric::Val,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    bitset_hex: String,
    split: Metric,
    value: f64,
}

/// Raw oracle answers keyed by cluster set, optionally persisted as an
/// append-only JSONL file.
#[derive(Debug, Default)]
pub struct RewardCache {
    enabled: bool,
    map: RwLock<HashMap<(Metric, ClusterSet), f64>>,
    file: Option<Mutex<BufWriter<File>>>,
    misses: AtomicU64,
}

impl RewardCache {
    pub fn new() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    /// A cache that stores nothing; every query reaches the oracle.
    pub fn disabled() -> Self {
        Self::default()
    }

    /// Loads existing entries from `path` (if any) and appends new ones to it.
    pub fn persistent(path: &Path, k: usize) -> Result<Self> {
        let mut map = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine = serde_json::from_str(&line)?;
                map.insert((entry.split, ClusterSet::from_hex(k, &entry.bitset_hex)?), entry.value);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            enabled: true,
            map: RwLock::new(map),
            file: Some(Mutex::new(BufWriter::new(file))),
            misses: AtomicU64::new(0),
        })
    }

    pub fn get(&self, metric: Metric, set: &ClusterSet) -> Option<f64> {
        if !self.enabled {
            return None;
        }
        self.map.read().expect("cache lock").get(&(metric, set.clone())).copied()
    }

    fn insert(&self, metric: Metric, set: &ClusterSet, value: f64) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let fresh = self
            .map
            .write()
            .expect("cache lock")
            .insert((metric, set.clone()), value)
            .is_none();
        if let (true, Some(file)) = (fresh, &self.file) {
            let mut f = file.lock().expect("cache file lock");
            serde_json::to_writer(
                &mut *f,
                &CacheLine {
                    bitset_hex: set.to_hex(),
                    split: metric,
                    value,
                },
            )?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of lookups that had to go to the oracle.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// All cached values of one metric, sorted by set.
    pub fn entries(&self, metric: Metric) -> Vec<(ClusterSet, f64)> {
        let mut out: Vec<(ClusterSet, f64)> = self
            .map
            .read()
            .expect("cache lock")
            .iter()
            .filter(|((m, _), _)| *m == metric)
            .map(|((_, s), v)| (s.clone(), *v))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

/// Turns oracle answers on cluster sets into MDP rewards.
pub struct RewardEngine {
    oracle: Arc<dyn RewardOracle>,
    model: Arc<ClusterModel>,
    kind: RewardKind,
    cache: Arc<RewardCache>,
    calls: AtomicU64,
}

impl std::fmt::Debug for RewardEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RewardEngine")
            .field("kind", &self.kind)
            .field("calls", &self.calls)
            .finish()
    }
}

impl RewardEngine {
    pub fn new(
        oracle: Arc<dyn RewardOracle>,
        model: Arc<ClusterModel>,
        kind: RewardKind,
        cache: Arc<RewardCache>,
    ) -> Result<Self> {
        let caps = oracle.capabilities();
        let ok = match kind {
            RewardKind::Acc => caps.eval_val_acc,
            RewardKind::LossTrain => caps.eval_train_loss,
            RewardKind::LossVal => caps.eval_val_loss,
        };
        if !ok {
            return Err(Error::Capability(match kind {
                RewardKind::Acc => "eval_acc",
                _ => "eval_loss",
            }));
        }
        Ok(Self {
            oracle,
            model,
            kind,
            cache,
            calls: AtomicU64::new(0),
        })
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn model(&self) -> &Arc<ClusterModel> {
        &self.model
    }

    pub fn oracle(&self) -> &Arc<dyn RewardOracle> {
        &self.oracle
    }

    pub fn cache(&self) -> &Arc<RewardCache> {
        &self.cache
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    /// Oracle evaluations issued by this engine.
    pub fn oracle_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn query(&self, metric: Metric, ids: &[usize]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let raw = match metric {
            Metric::Val => self.oracle.eval_loss(Split::Val, ids),
            Metric::Train => self.oracle.eval_loss(Split::Train, ids),
            Metric::Acc => self.oracle.eval_acc(ids),
        };
        match raw {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(Error::RewardUnavailable(format!("oracle returned {v}"))),
            Err(Error::OracleFailure(msg)) => Err(Error::RewardUnavailable(msg)),
            Err(e) => Err(e),
        }
    }

    /// Raw oracle value (loss or accuracy) for the subsample union of `set`.
    pub fn raw(&self, set: &ClusterSet) -> Result<f64> {
        let metric = self.kind.metric();
        if let Some(v) = self.cache.get(metric, set) {
            return Ok(v);
        }
        self.cache.misses.fetch_add(1, Ordering::Relaxed);
        let ids = self.model.subsample_union(set.iter());
        let v = self.query(metric, &ids)?;
        self.cache.insert(metric, set, v)?;
        Ok(v)
    }

    /// `f(L(S))` for loss rewards, `Val-Acc(S)` for the accuracy reward.
    pub fn score(&self, set: &ClusterSet) -> Result<f64> {
        let raw = self.raw(set)?;
        match self.kind {
            RewardKind::Acc => Ok(raw),
            _ => apply_f(raw).map_err(|e| Error::RewardUnavailable(e.to_string())),
        }
    }

    /// Telescoped episode return of a terminal set: `score(S) - score(empty)`.
    pub fn episode_value(&self, set: &ClusterSet) -> Result<f64> {
        Ok(self.score(set)? - self.score(&ClusterSet::empty(set.universe()))?)
    }

    pub fn reward(&self, state: &SubsetState, action: usize) -> Result<f64> {
        if action >= state.k() || state.selected().contains(action) {
            return Err(Error::InvalidAction(action));
        }
        let next = state.selected().with(action);
        Ok(self.score(&next)? - self.score(state.selected())?)
    }

    /// Score of an arbitrary point set (used by point-level baselines).
    pub fn score_points(&self, ids: &[usize]) -> Result<f64> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let raw = self.query(self.kind.metric(), &ids)?;
        match self.kind {
            RewardKind::Acc => Ok(raw),
            _ => apply_f(raw).map_err(|e| Error::RewardUnavailable(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{reset, step};
    use crate::reward::synthetic::{synthetic_cluster_model, SyntheticDataSpec};

    #[test]
    fn f_anchors() {
        assert_eq!(apply_f(0.5).unwrap(), 5.0);
        assert!(apply_f(2.5f64.exp() / 2.0).unwrap().abs() < 1e-12);
        assert!((apply_f(1.0).unwrap() - 3.613_705_638_880_109).abs() < 1e-12);
        assert!(matches!(apply_f(0.0), Err(Error::Domain(_))));
        assert!(matches!(apply_f(-1.0), Err(Error::Domain(_))));
    }

    fn engine(q: Vec<f64>, lambda: f64, w01: f64, kind: RewardKind) -> RewardEngine {
        let k = q.len();
        let mut w = vec![0.0; k * k];
        w[1] = w01;
        w[k] = w01;
        let land = Arc::new(SyntheticLandscape::new(q, w, lambda, 0.5).unwrap());
        let model = Arc::new(synthetic_cluster_model(k, &SyntheticDataSpec::default(), 3).unwrap());
        let oracle = SyntheticOracle::new(land, model.assignment().to_vec(), 0).unwrap();
        RewardEngine::new(Arc::new(oracle), model, kind, Arc::new(RewardCache::new())).unwrap()
    }

    #[test]
    fn loss_val_rewards_follow_value_differences() {
        let e = engine(vec![1.0, 2.0, 0.5], 0.0, 0.0, RewardKind::LossVal);
        let s0 = reset(3, 2).unwrap();
        assert!((e.reward(&s0, 1).unwrap() - 2.0).abs() < 1e-12);

        let e = engine(vec![1.0, 2.0, 0.5], 0.5, 1.0, RewardKind::LossVal);
        let (s1, _) = step(&s0, 0).unwrap();
        assert!((e.reward(&s1, 1).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cache_contract() {
        let e = engine(vec![1.0, 2.0, 0.5], 0.0, 0.0, RewardKind::LossVal);
        let s0 = reset(3, 2).unwrap();
        let r = e.reward(&s0, 2).unwrap();
        let calls = e.oracle_calls();
        assert_eq!(calls, 2);
        assert_eq!(e.reward(&s0, 2).unwrap(), r);
        assert_eq!(e.oracle_calls(), calls);
        assert_eq!(e.cache().misses(), 2);
    }

    #[test]
    fn train_equals_val_without_shift() {
        let v = engine(vec![0.3, 0.9, 0.1, 0.4], 0.5, 0.7, RewardKind::LossVal);
        let t = engine(vec![0.3, 0.9, 0.1, 0.4], 0.5, 0.7, RewardKind::LossTrain);
        let s0 = reset(4, 3).unwrap();
        let (s1, _) = step(&s0, 0).unwrap();
        for a in 1..4 {
            assert_eq!(v.reward(&s1, a).unwrap(), t.reward(&s1, a).unwrap());
        }
        // the empty-set baseline is supplied by the base loss
        assert_eq!(t.score(&ClusterSet::empty(4)).unwrap(), apply_f(0.5 * 2.5f64.exp()).unwrap());
    }

    #[test]
    fn accuracy_reward() {
        let e = engine(vec![1.0, 2.0, 0.0], 0.0, 0.0, RewardKind::Acc);
        let s0 = reset(3, 2).unwrap();
        assert!((e.reward(&s0, 1).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(e.reward(&s0, 2).unwrap(), 0.0);
    }

    #[test]
    fn capability_is_checked() {
        struct LossOnly;
        impl RewardOracle for LossOnly {
            fn capabilities(&self) -> Capabilities {
                Capabilities {
                    eval_val_loss: true,
                    ..Default::default()
                }
            }
            fn eval_loss(&self, _: Split, _: &[usize]) -> Result<f64> {
                Ok(1.0)
            }
        }
        let model = Arc::new(synthetic_cluster_model(2, &SyntheticDataSpec::default(), 0).unwrap());
        let err = RewardEngine::new(Arc::new(LossOnly), model, RewardKind::Acc, Arc::new(RewardCache::new()));
        assert!(matches!(err, Err(Error::Capability("eval_acc"))));
    }

    #[test]
    fn oracle_failure_is_propagated() {
        struct Broken;
        impl RewardOracle for Broken {
            fn capabilities(&self) -> Capabilities {
                Capabilities::all()
            }
            fn eval_loss(&self, _: Split, _: &[usize]) -> Result<f64> {
                Err(Error::OracleFailure("boom".into()))
            }
        }
        let model = Arc::new(synthetic_cluster_model(2, &SyntheticDataSpec::default(), 0).unwrap());
        let e = RewardEngine::new(Arc::new(Broken), model, RewardKind::LossVal, Arc::new(RewardCache::new()))
            .unwrap();
        let err = e.reward(&reset(2, 1).unwrap(), 0).unwrap_err();
        assert!(matches!(err, Error::RewardUnavailable(_)));
    }

    #[test]
    fn persistent_cache_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let set = ClusterSet::from_indices(5, [1, 3]).unwrap();
        {
            let c = RewardCache::persistent(&path, 5).unwrap();
            c.insert(Metric::Val, &set, 1.25).unwrap();
            c.insert(Metric::Val, &set, 1.25).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"bitset_hex\":\"0a\""));
        let c = RewardCache::persistent(&path, 5).unwrap();
        assert_eq!(c.get(Metric::Val, &set), Some(1.25));
    }
}
