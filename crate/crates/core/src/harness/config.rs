//! Experiment configuration: one TOML or JSON document with defaults for
//! every field and a canonical hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{ClimbConfig, DqnConfig, DynaConfig, PpoConfig};
use crate::clustering::SubsampleStrategy;
use crate::error::{Error, Result};
use crate::mdp::{budget_from_fraction, EncodingKind};
use crate::reward::synthetic::SyntheticDataSpec;
use crate::reward::{LandscapeSpec, RewardKind, RndConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// Gaussian blobs, one per cluster, scored by a random landscape.
    Synthetic {
        #[serde(default)]
        landscape: LandscapeSpec,
        #[serde(default)]
        data: SyntheticDataSpec,
        #[serde(default)]
        seed: u64,
    },
    /// An embedding file (and optional labels) scored by an external oracle.
    Files {
        embeddings: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synthetic {
            landscape: LandscapeSpec::default(),
            data: SyntheticDataSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusteringKind {
    Kmeans,
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Dqn,
    DqnTransformer,
    Ppo,
    PpoWarm,
    Dynadqn,
    Climb,
    Random,
    RandomSearch,
    TopLoss,
    BottomLoss,
    BruteForce,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dqn => "dqn",
            Self::DqnTransformer => "dqn_transformer",
            Self::Ppo => "ppo",
            Self::PpoWarm => "ppo_warm",
            Self::Dynadqn => "dynadqn",
            Self::Climb => "climb",
            Self::Random => "random",
            Self::RandomSearch => "random_search",
            Self::TopLoss => "top_loss",
            Self::BottomLoss => "bottom_loss",
            Self::BruteForce => "brute_force",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::ConfigInvalid(format!("unknown agent `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleSpec {
    /// In-process oracle over the synthetic landscape.
    Synthetic,
    /// A child process speaking the line protocol.
    Command {
        command: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    600_000
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self::Synthetic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub oracle: OracleSpec,
    pub k: usize,
    pub delta: f64,
    pub clustering: ClusteringKind,
    pub kmeans_iters: usize,
    pub encoder: EncodingKind,
    pub subsampling: SubsampleStrategy,
    pub subsample_size: usize,
    /// Representatives per cluster for the `Concat` encoding, and how they
    /// are picked.
    pub m_reps: usize,
    pub rep_strategy: SubsampleStrategy,
    pub reward: RewardKind,
    pub rnd: bool,
    pub rnd_config: RndConfig,
    pub agent: AgentKind,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
    pub dyna: DynaConfig,
    pub climb: ClimbConfig,
    pub random_search_rollouts: usize,
    /// Point fraction for the loss-ranked baselines.
    pub loss_fraction: f64,
    pub seeds: Vec<u64>,
    /// Optional append-only reward cache shared across runs.
    pub cache_path: Option<PathBuf>,
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            oracle: OracleSpec::default(),
            k: 64,
            delta: 1.0 / 16.0,
            clustering: ClusteringKind::Kmeans,
            kmeans_iters: 100,
            encoder: EncodingKind::MeanStd,
            subsampling: SubsampleStrategy::Random,
            subsample_size: 64,
            m_reps: 1,
            rep_strategy: SubsampleStrategy::Furthest,
            reward: RewardKind::LossVal,
            rnd: false,
            rnd_config: RndConfig::default(),
            agent: AgentKind::Dqn,
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
            dyna: DynaConfig::default(),
            climb: ClimbConfig::default(),
            random_search_rollouts: 220,
            loss_fraction: 0.05,
            seeds: vec![0],
            cache_path: None,
            workers: 1,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML or JSON, chosen by extension (JSON first otherwise).
    pub fn from_str_auto(text: &str, hint: Option<&str>) -> Result<Self> {
        let cfg: Self = match hint {
            Some("toml") => toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?,
            Some("json") => serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?,
            _ => match serde_json::from_str(text) {
                Ok(c) => c,
                Err(_) => toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_auto(&text, path.extension().and_then(|e| e.to_str()))
    }

    pub fn budget(&self) -> Result<usize> {
        budget_from_fraction(self.k, self.delta).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        self.budget()?;
        if self.subsample_size == 0 {
            return bad("subsample_size must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.encoder == EncodingKind::Concat && self.m_reps == 0 {
            return bad("Concat needs m_reps >= 1".into());
        }
        if self.agent == AgentKind::DqnTransformer && self.encoder != EncodingKind::Concat {
            return bad("dqn_transformer needs encoder = \"Concat\"".into());
        }
        if self.random_search_rollouts == 0 {
            return bad("random_search_rollouts must be at least 1".into());
        }
        if !(self.loss_fraction > 0.0 && self.loss_fraction <= 1.0) {
            return bad("loss_fraction must lie in (0, 1]".into());
        }
        if self.rnd && !(self.rnd_config.beta >= 0.0) {
            return bad("rnd beta must be non-negative".into());
        }
        match &self.data {
            DataSource::Synthetic { landscape, data, .. } => {
                if data.dim == 0 || data.points_per_cluster == 0 {
                    return bad("synthetic data needs dim and points_per_cluster >= 1".into());
                }
                if !(landscape.c > 0.0) || !(landscape.lambda >= 0.0) {
                    return bad("landscape needs c > 0 and lambda >= 0".into());
                }
            }
            DataSource::Files { labels, .. } => {
                if self.oracle == OracleSpec::Synthetic {
                    return bad("file data needs a command oracle".into());
                }
                if self.clustering == ClusteringKind::Stratified && labels.is_none() {
                    return bad("stratified clustering needs a labels file".into());
                }
            }
        }
        self.dqn.validate()?;
        self.ppo.validate()?;
        self.dyna.validate()?;
        self.climb.validate()?;
        Ok(())
    }

    /// Canonical JSON: sorted keys, shortest round-trip numbers, and the
    /// output directory left out.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            obj.remove("workers");
        }
        Ok(serde_json::to_string(&v)?)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.budget().unwrap(), 4);
        assert_eq!(c.subsample_size, 64);
    }

    #[test]
    fn toml_and_json_agree() {
        let t = ExperimentConfig::from_str_auto("k = 12\ndelta = 0.25\nagent = \"ppo\"\n", Some("toml")).unwrap();
        let j = ExperimentConfig::from_str_auto(r#"{"agent":"ppo","delta":0.25,"k":12}"#, None).unwrap();
        assert_eq!(t, j);
        assert_eq!(t.hash().unwrap(), j.hash().unwrap());
        assert_eq!(t.budget().unwrap(), 3);
    }

    #[test]
    fn hash_ignores_output_dir_but_not_parameters() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        let c = ExperimentConfig { k: 32, ..a.clone() };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn invalid_configs() {
        for text in [
            r#"{"delta": 0}"#,
            r#"{"delta": 1.5}"#,
            r#"{"k": 0}"#,
            r#"{"agent": "dqn_transformer"}"#,
            r#"{"seeds": []}"#,
            r#"{"agent": "nope"}"#,
            r#"{"unknown_field": 1}"#,
            r#"{"data": {"source": "files", "embeddings": "x.bin"}}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_str_auto(text, Some("json")), Err(Error::ConfigInvalid(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn agent_names_round_trip() {
        for a in [AgentKind::Dqn, AgentKind::PpoWarm, AgentKind::BruteForce, AgentKind::TopLoss] {
            assert_eq!(AgentKind::parse(a.name()).unwrap(), a);
        }
    }
}
