//! Runs configured experiments, sweeps one axis, and exports selections.

pub mod config;

use std::fs;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    climb_disc, dqn_train, dyna_dqn_train, ppo_train, rollout_policy, AgentContext, QHead, RolloutMode, TrainFailure,
    TrainingLog,
};
use crate::baselines::{
    brute_force_optimum, loss_ranked_baseline, random_baseline, random_search, write_results_csv, LossDirection,
    Selection, SelectionResult,
};
use crate::clustering::{kmeans, stratified_kmeans, ClusterModel, ClusterModelExport};
use crate::error::{Error, Result};
use crate::io::{load_embeddings, load_labels, write_id_list};
use crate::mdp::{ClusterSet, SelectionEnv, StateEncoder};
use crate::reward::synthetic::synthetic_cluster_model;
use crate::reward::{
    apply_f, ExternalOracle, RewardCache, RewardEngine, RewardKind, RewardOracle, RndBonus, SyntheticLandscape,
    SyntheticOracle,
};
use crate::rng::{self, streams};

pub use config::{AgentKind, ClusteringKind, DataSource, ExperimentConfig, OracleSpec};

/// Clustered data, the oracle that scores it, and the shared reward cache.
pub struct World {
    pub model: Arc<ClusterModel>,
    pub oracle: Arc<dyn RewardOracle>,
    pub landscape: Option<Arc<SyntheticLandscape>>,
    pub cache: Arc<RewardCache>,
}

impl World {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (model, landscape) = match &cfg.data {
            DataSource::Synthetic { landscape, data, seed } => {
                let model = synthetic_cluster_model(cfg.k, data, *seed)?;
                let land = SyntheticLandscape::random(cfg.k, landscape, *seed);
                (model, Some(Arc::new(land)))
            }
            DataSource::Files { embeddings, labels, seed } => {
                let emb = Arc::new(load_embeddings(embeddings)?);
                let model = match cfg.clustering {
                    ClusteringKind::Kmeans => kmeans(emb, cfg.k, *seed, cfg.kmeans_iters)?,
                    ClusteringKind::Stratified => {
                        let labels = load_labels(labels.as_ref().expect("validated"))?;
                        stratified_kmeans(emb, &labels, cfg.k, *seed, cfg.kmeans_iters)?
                    }
                };
                (model, None)
            }
        };
        let seed = match &cfg.data {
            DataSource::Synthetic { seed, .. } | DataSource::Files { seed, .. } => *seed,
        };
        let model = Arc::new(model.with_subsamples(cfg.subsample_size, cfg.subsampling, seed));
        let oracle: Arc<dyn RewardOracle> = match (&cfg.oracle, &landscape) {
            (OracleSpec::Synthetic, Some(l)) => Arc::new(SyntheticOracle::new(l.clone(), model.assignment().to_vec(), seed)?),
            (OracleSpec::Synthetic, None) => return Err(Error::ConfigInvalid("file data needs a command oracle".into())),
            (OracleSpec::Command { command, timeout_ms }, _) => {
                Arc::new(ExternalOracle::spawn(command, Duration::from_millis(*timeout_ms))?)
            }
        };
        let cache = match &cfg.cache_path {
            Some(p) => RewardCache::persistent(p, cfg.k)?,
            None => RewardCache::new(),
        };
        Ok(Self {
            model,
            oracle,
            landscape,
            cache: Arc::new(cache),
        })
    }

    pub fn engine(&self, kind: RewardKind) -> Result<RewardEngine> {
        RewardEngine::new(self.oracle.clone(), self.model.clone(), kind, self.cache.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub agent: String,
    pub status: String,
    pub error: Option<String>,
    pub result: Option<SelectionResult>,
    pub budget: usize,
    pub k: usize,
    pub cluster_fraction: f64,
    pub point_fraction: Option<f64>,
    pub training_log: Option<String>,
    pub selection_file: Option<String>,
    pub export_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub agent: String,
    pub k: usize,
    pub budget: usize,
    pub cluster_model: String,
    pub landscape_dump: String,
    pub results_csv: String,
    pub runs: Vec<RunReport>,
}

impl ExperimentReport {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.result.as_ref().map(|s| s.score)).collect()
    }
}

/// Outcome of one agent on one seed.
struct SeedOutcome {
    result: SelectionResult,
    log: Option<TrainingLog>,
}

fn train_failure(f: TrainFailure) -> (Error, Option<TrainingLog>) {
    (f.error, Some(f.log))
}

fn run_agent(
    world: &World,
    cfg: &ExperimentConfig,
    engine: &RewardEngine,
    seed: u64,
) -> std::result::Result<SeedOutcome, (Error, Option<TrainingLog>)> {
    let k = cfg.k;
    let budget = cfg.budget().map_err(|e| (e, None))?;
    let env = SelectionEnv::new(k, budget).map_err(|e| (e, None))?;
    let started = Instant::now();
    let calls = engine.oracle_calls();
    let plain = |r: Result<SelectionResult>| r.map(|result| SeedOutcome { result, log: None }).map_err(|e| (e, None));
    let encoder = StateEncoder::new(&world.model, cfg.encoder, cfg.m_reps, cfg.rep_strategy, seed).map_err(|e| (e, None))?;
    let mut ctx = AgentContext::new(env.clone(), &encoder, engine);
    if cfg.rnd {
        let rnd = RndBonus::new(encoder.width(), cfg.rnd_config.clone(), rng::derive_seed(seed, streams::RND));
        ctx = ctx.with_rnd(rnd);
    }
    let finish = |set: &ClusterSet, log: TrainingLog| {
        SelectionResult::for_clusters(cfg.agent.name(), seed, set, engine, calls, started)
            .map(|result| SeedOutcome { result, log: Some(log) })
            .map_err(|e| (e, None))
    };
    let greedy = |p: &dyn crate::agents::Policy| {
        rollout_policy(p, &env, &encoder, RolloutMode::Greedy, seed)
            .map(|s| s.selected().clone())
            .map_err(|e| (e, None))
    };
    match cfg.agent {
        AgentKind::Dqn | AgentKind::DqnTransformer => {
            let mut dc = cfg.dqn.clone();
            dc.head = if cfg.agent == AgentKind::Dqn { QHead::Mlp } else { QHead::Transformer };
            let (agent, log) = dqn_train(&mut ctx, dc, seed).map_err(train_failure)?;
            finish(&greedy(&agent)?, log)
        }
        AgentKind::Ppo | AgentKind::PpoWarm => {
            let mut pc = cfg.ppo.clone();
            pc.warm_start = cfg.agent == AgentKind::PpoWarm;
            let (agent, log) = ppo_train(&mut ctx, pc, seed).map_err(train_failure)?;
            finish(&greedy(&agent)?, log)
        }
        AgentKind::Dynadqn => {
            let ((agent, _), log) =
                dyna_dqn_train(&mut ctx, cfg.dyna.clone(), cfg.dqn.clone(), seed).map_err(train_failure)?;
            finish(&greedy(&agent)?, log)
        }
        AgentKind::Climb => {
            let out = climb_disc(engine, &env, cfg.climb.clone(), seed).map_err(|e| (e, None))?;
            finish(&out.best, TrainingLog::default())
        }
        AgentKind::Random => plain(random_baseline(engine, budget, seed)),
        AgentKind::RandomSearch => plain(random_search(engine, &env, cfg.random_search_rollouts, seed)),
        AgentKind::TopLoss => plain(loss_ranked_baseline(engine, cfg.loss_fraction, LossDirection::Top)),
        AgentKind::BottomLoss => plain(loss_ranked_baseline(engine, cfg.loss_fraction, LossDirection::Bottom)),
        AgentKind::BruteForce => plain(brute_force_optimum(engine, budget)),
    }
}

/// Point ids covered by a selection.
pub fn selected_points(selection: &Selection, members: &[Vec<usize>]) -> Result<Vec<usize>> {
    match selection {
        Selection::Points(ids) => Ok(ids.clone()),
        Selection::Clusters(cs) => {
            let mut ids = Vec::new();
            for &c in cs {
                ids.extend_from_slice(
                    members
                        .get(c)
                        .ok_or_else(|| Error::InvalidState(format!("cluster {c} missing from the cluster model")))?,
                );
            }
            ids.sort_unstable();
            ids.dedup();
            Ok(ids)
        }
    }
}

/// Writes the member point ids of `selection`, sorted and newline separated.
/// Returns the number of ids written.
pub fn export_selection(selection: &Selection, members: &[Vec<usize>], path: &Path) -> Result<usize> {
    let empty = match selection {
        Selection::Clusters(c) | Selection::Points(c) => c.is_empty(),
    };
    if empty {
        return Err(Error::InvalidArgument("cannot export an empty selection".into()));
    }
    let ids = selected_points(selection, members)?;
    let mut f = BufWriter::new(fs::File::create(path)?);
    write_id_list(&mut f, &ids)?;
    std::io::Write::flush(&mut f)?;
    Ok(ids.len())
}

/// Re-exports every successful run of a saved report next to the report.
pub fn export_report(report_path: &Path) -> Result<Vec<PathBuf>> {
    let report = ExperimentReport::load(report_path)?;
    let dir = report_path.parent().unwrap_or(Path::new("."));
    let model_path = dir.join(&report.cluster_model);
    if !model_path.exists() {
        return Err(Error::InvalidState(format!("cluster model {} not found", model_path.display())));
    }
    let members = ClusterModelExport::load(&model_path)?.members();
    let mut written = Vec::new();
    for run in &report.runs {
        if let (Some(res), Some(file)) = (&run.result, &run.export_file) {
            let path = dir.join(file);
            export_selection(&res.selection, &members, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_landscape_dump(path: &Path, cache: &RewardCache, kind: RewardKind) -> Result<()> {
    let mut rows = cache.entries(kind.metric());
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::from("bitset_hex,size,raw,score\n");
    for (set, raw) in rows {
        let score = match kind {
            RewardKind::Acc => raw,
            _ => apply_f(raw).unwrap_or(f64::NAN),
        };
        out.push_str(&format!("{},{},{},{}\n", set.to_hex(), set.len(), raw, score));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs the configured agent for every seed against a prepared world and
/// writes all artifacts under `cfg.output_dir`. On failure the artifacts
/// written so far stay on disk, the failing seed gets an `ERROR` file, and
/// the report records the failure before the error is returned.
pub fn run_experiment_in(world: &World, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let hash = cfg.hash()?;
    fs::write(out.join("config.json"), cfg.canonical_json()?)?;
    world.model.save(&out.join("cluster_model.json"))?;
    let members: Vec<Vec<usize>> = (0..world.model.k()).map(|c| world.model.members(c).to_vec()).collect();
    let engine = world.engine(cfg.reward)?;
    let budget = cfg.budget()?;
    let mut report = ExperimentReport {
        config_hash: hash,
        agent: cfg.agent.name().into(),
        k: cfg.k,
        budget,
        cluster_model: "cluster_model.json".into(),
        landscape_dump: "landscape.csv".into(),
        results_csv: "results.csv".into(),
        runs: Vec::new(),
    };
    let mut failure = None;

    for &seed in &cfg.seeds {
        let rel = format!("seed-{seed}");
        let dir = out.join(&rel);
        fs::create_dir_all(&dir)?;
        let mut run = RunReport {
            seed,
            agent: cfg.agent.name().into(),
            status: "ok".into(),
            error: None,
            result: None,
            budget,
            k: cfg.k,
            cluster_fraction: budget as f64 / cfg.k as f64,
            point_fraction: None,
            training_log: None,
            selection_file: None,
            export_file: None,
        };
        let outcome = run_agent(world, cfg, &engine, seed);
        let log = match &outcome {
            Ok(o) => o.log.as_ref(),
            Err((_, l)) => l.as_ref(),
        };
        if let Some(log) = log {
            log.write_jsonl(BufWriter::new(fs::File::create(dir.join("training_log.jsonl"))?))?;
            run.training_log = Some(format!("{rel}/training_log.jsonl"));
        }
        match outcome {
            Ok(o) => {
                fs::write(dir.join("selection.json"), serde_json::to_vec_pretty(&o.result)?)?;
                let n = export_selection(&o.result.selection, &members, &dir.join("selected_ids.txt"))?;
                run.point_fraction = Some(n as f64 / world.model.n_points() as f64);
                run.selection_file = Some(format!("{rel}/selection.json"));
                run.export_file = Some(format!("{rel}/selected_ids.txt"));
                run.result = Some(o.result);
                report.runs.push(run);
            }
            Err((e, _)) => {
                fs::write(dir.join("ERROR"), format!("{e}\n"))?;
                run.status = "failed".into();
                run.error = Some(e.to_string());
                report.runs.push(run);
                failure = Some(e);
                break;
            }
        }
    }

    write_landscape_dump(&out.join("landscape.csv"), &world.cache, cfg.reward)?;
    let results: Vec<SelectionResult> = report.runs.iter().filter_map(|r| r.result.clone()).collect();
    write_results_csv(fs::File::create(out.join("results.csv"))?, &results)?;
    fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let world = World::build(cfg)?;
    run_experiment_in(&world, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    Delta,
    Agent,
    Encoder,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(Self::K),
            "delta" => Ok(Self::Delta),
            "agent" => Ok(Self::Agent),
            "encoder" => Ok(Self::Encoder),
            _ => Err(Error::ConfigInvalid(format!("unknown sweep axis `{s}`"))),
        }
    }

    fn key(self) -> &'static str {
        match self {
            Self::K => "k",
            Self::Delta => "delta",
            Self::Agent => "agent",
            Self::Encoder => "encoder",
        }
    }

    /// A copy of `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut v = serde_json::to_value(cfg)?;
        let parsed = match self {
            Self::K => serde_json::Value::from(
                value
                    .parse::<u64>()
                    .map_err(|_| Error::ConfigInvalid(format!("bad k `{value}`")))?,
            ),
            Self::Delta => serde_json::Value::from(
                value
                    .parse::<f64>()
                    .map_err(|_| Error::ConfigInvalid(format!("bad delta `{value}`")))?,
            ),
            Self::Agent | Self::Encoder => serde_json::Value::String(value.to_string()),
        };
        v[self.key()] = parsed;
        let out: ExperimentConfig = serde_json::from_value(v).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    pub status: String,
    pub error: Option<String>,
    pub budget: Option<usize>,
    pub n_runs: usize,
    pub mean_score: Option<f64>,
    pub std_score: Option<f64>,
    pub config_hash: Option<String>,
    pub output_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub cells: Vec<SweepCell>,
}

fn run_cell(base: &ExperimentConfig, axis: SweepAxis, value: &str, shared: Option<&World>) -> Result<(ExperimentConfig, ExperimentReport)> {
    let mut cfg = axis.apply(base, value)?;
    cfg.output_dir = base.output_dir.join(format!("{}={}", axis.key(), value));
    let report = match shared {
        Some(w) => run_experiment_in(w, &cfg)?,
        None => run_experiment(&cfg)?,
    };
    Ok((cfg, report))
}

/// Runs one experiment per value of `axis`. Cells share the clustered world
/// (and so the reward cache) unless the axis changes the cluster count.
/// A failing cell is recorded and the others continue.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<SweepSummary> {
    if values.is_empty() {
        return Err(Error::ConfigInvalid("sweep needs at least one value".into()));
    }
    base.validate()?;
    fs::create_dir_all(&base.output_dir)?;
    let shared = match axis {
        SweepAxis::K => None,
        _ => Some(World::build(base)?),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(base.workers.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        values
            .par_iter()
            .map(|value| {
                let dir = format!("{}={}", axis.key(), value);
                let outcome = catch_unwind(AssertUnwindSafe(|| run_cell(base, axis, value, shared.as_ref())));
                let mut cell = SweepCell {
                    value: value.clone(),
                    status: "ok".into(),
                    error: None,
                    budget: None,
                    n_runs: 0,
                    mean_score: None,
                    std_score: None,
                    config_hash: None,
                    output_dir: dir,
                };
                match outcome {
                    Ok(Ok((_, report))) => {
                        let scores = report.scores();
                        let (m, s) = crate::nn::mean_std(&scores);
                        cell.budget = Some(report.budget);
                        cell.n_runs = scores.len();
                        cell.mean_score = Some(m);
                        cell.std_score = Some(s);
                        cell.config_hash = Some(report.config_hash);
                    }
                    Ok(Err(e)) => {
                        cell.status = "failed".into();
                        cell.error = Some(e.to_string());
                    }
                    Err(_) => {
                        cell.status = "failed".into();
                        cell.error = Some("cell panicked".into());
                    }
                }
                cell
            })
            .collect()
    });
    let summary = SweepSummary { axis, cells };
    write_sweep_csv(&base.output_dir.join("summary.csv"), &summary)?;
    fs::write(base.output_dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

fn write_sweep_csv(path: &Path, s: &SweepSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["axis", "value", "status", "budget", "n_runs", "mean_score", "std_score", "config_hash", "error"])
        .map_err(io)?;
    let opt = |x: Option<String>| x.unwrap_or_default();
    for c in &s.cells {
        w.write_record([
            s.axis.key().to_string(),
            c.value.clone(),
            c.status.clone(),
            opt(c.budget.map(|b| b.to_string())),
            c.n_runs.to_string(),
            opt(c.mean_score.map(|m| m.to_string())),
            opt(c.std_score.map(|m| m.to_string())),
            opt(c.config_hash.clone()),
            opt(c.error.clone()),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_sorts_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        let members = vec![vec![3, 1, 4], vec![0, 2]];
        let p = dir.path().join("ids.txt");
        assert_eq!(export_selection(&Selection::Clusters(vec![0]), &members, &p).unwrap(), 3);
        assert_eq!(fs::read_to_string(&p).unwrap(), "1\n3\n4\n");
        assert_eq!(export_selection(&Selection::Clusters(vec![0, 1]), &members, &p).unwrap(), 5);
        let q = dir.path().join("none.txt");
        assert!(export_selection(&Selection::Clusters(vec![]), &members, &q).is_err());
        assert!(!q.exists());
    }

    #[test]
    fn delta_axis_budgets() {
        let base = ExperimentConfig::default();
        let budgets: Vec<usize> = ["0.03125", "0.0625", "0.125"]
            .iter()
            .map(|v| SweepAxis::Delta.apply(&base, v).unwrap().budget().unwrap())
            .collect();
        assert_eq!(budgets, vec![2, 4, 8]);
        assert!(SweepAxis::Agent.apply(&base, "nope").is_err());
        assert_eq!(SweepAxis::Encoder.apply(&base, "BinaryMask").unwrap().encoder, crate::EncodingKind::BinaryMask);
    }
}
