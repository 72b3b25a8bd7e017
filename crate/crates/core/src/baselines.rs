//! Non-learning comparators and the exact brute-force optimum.

use std::io::Write;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::random_valid_action;
use crate::error::{Error, Result};
use crate::mdp::{action_mask, binomial, ClusterSet, Combinations, SelectionEnv};
use crate::reward::RewardEngine;
use crate::rng::{self, streams};

/// Largest subset space brute force will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "granularity", content = "ids")]
pub enum Selection {
    Clusters(Vec<usize>),
    Points(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: String,
    pub seed: u64,
    pub budget: usize,
    pub selection: Selection,
    /// Hex bitset for cluster selections.
    pub selected_hex: Option<String>,
    /// `f(L(S))` (or accuracy), recomputed through the reward engine.
    pub score: f64,
    /// `score(S) - score(empty)` for cluster selections.
    pub episode_value: Option<f64>,
    pub oracle_calls: u64,
    pub wall_ms: u64,
}

impl SelectionResult {
    /// Scores `set` through `reward` rather than trusting the caller.
    pub fn for_clusters(
        method: &str,
        seed: u64,
        set: &ClusterSet,
        reward: &RewardEngine,
        calls_before: u64,
        started: Instant,
    ) -> Result<Self> {
        let score = reward.score(set)?;
        let episode_value = reward.episode_value(set)?;
        Ok(Self {
            method: method.to_string(),
            seed,
            budget: set.len(),
            selection: Selection::Clusters(set.to_vec()),
            selected_hex: Some(set.to_hex()),
            score,
            episode_value: Some(episode_value),
            oracle_calls: reward.oracle_calls() - calls_before,
            wall_ms: started.elapsed().as_millis() as u64,
        })
    }

    pub fn cluster_set(&self, k: usize) -> Option<ClusterSet> {
        match &self.selection {
            Selection::Clusters(c) => ClusterSet::from_indices(k, c.iter().copied()).ok(),
            Selection::Points(_) => None,
        }
    }

    fn selected_field(&self) -> String {
        match (&self.selected_hex, &self.selection) {
            (Some(h), _) => h.clone(),
            (None, Selection::Clusters(ids) | Selection::Points(ids)) => {
                ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
            }
        }
    }
}

/// Writes `method,seed,budget,score,oracle_calls,wall_ms,selected` rows.
pub fn write_results_csv<W: Write>(w: W, results: &[SelectionResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(["method", "seed", "budget", "score", "oracle_calls", "wall_ms", "selected"])
        .map_err(csv_err)?;
    for r in results {
        out.write_record([
            r.method.clone(),
            r.seed.to_string(),
            r.budget.to_string(),
            r.score.to_string(),
            r.oracle_calls.to_string(),
            r.wall_ms.to_string(),
            r.selected_field(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Uniform random `budget`-subset of `k` clusters.
pub fn random_subset(k: usize, budget: usize, seed: u64) -> Result<ClusterSet> {
    if budget > k {
        return Err(Error::InvalidArgument(format!("budget {budget} exceeds k = {k}")));
    }
    let mut r = rng::stream(seed, streams::SEARCH);
    ClusterSet::from_indices(k, index::sample(&mut r, k, budget).into_iter())
}

pub fn random_baseline(reward: &RewardEngine, budget: usize, seed: u64) -> Result<SelectionResult> {
    let (started, calls) = (Instant::now(), reward.oracle_calls());
    let set = random_subset(reward.k(), budget, seed)?;
    SelectionResult::for_clusters("random", seed, &set, reward, calls, started)
}

/// Best of `n_rollouts` uniformly random episodes by total episode reward;
/// ties keep the first.
pub fn random_search(reward: &RewardEngine, env: &SelectionEnv, n_rollouts: usize, seed: u64) -> Result<SelectionResult> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("random search needs at least one rollout".into()));
    }
    let (started, calls) = (Instant::now(), reward.oracle_calls());
    let mut r = rng::stream(seed, streams::SEARCH);
    let mut best: Option<(f64, ClusterSet)> = None;
    for _ in 0..n_rollouts {
        let mut state = env.reset();
        let mut ret = 0.0;
        while !state.is_terminal() {
            let a = random_valid_action(&action_mask(&state), &mut r).expect("non-terminal state has a valid action");
            ret += reward.reward(&state, a)?;
            state = env.step(&state, a)?.0;
        }
        if best.as_ref().is_none_or(|(b, _)| ret > *b) {
            best = Some((ret, state.selected().clone()));
        }
    }
    let (_, set) = best.expect("n_rollouts >= 1");
    SelectionResult::for_clusters("random_search", seed, &set, reward, calls, started)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossDirection {
    Top,
    Bottom,
}

/// Point ids of the `floor(fraction * n)` highest (Top) or lowest (Bottom)
/// losses; ties go to the lower id. Result is sorted.
pub fn rank_by_loss(losses: &[f64], fraction: f64, direction: LossDirection) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let take = ((fraction * losses.len() as f64) + 1e-9).floor() as usize;
    let mut ids: Vec<usize> = (0..losses.len()).collect();
    ids.sort_by(|&a, &b| {
        let ord = match direction {
            LossDirection::Top => losses[b].total_cmp(&losses[a]),
            LossDirection::Bottom => losses[a].total_cmp(&losses[b]),
        };
        ord.then(a.cmp(&b))
    });
    ids.truncate(take);
    ids.sort_unstable();
    Ok(ids)
}

pub fn loss_ranked_baseline(reward: &RewardEngine, fraction: f64, direction: LossDirection) -> Result<SelectionResult> {
    let (started, calls) = (Instant::now(), reward.oracle_calls());
    let losses = reward.oracle().point_losses()?;
    let ids = rank_by_loss(&losses, fraction, direction)?;
    let score = reward.score_points(&ids)?;
    let method = match direction {
        LossDirection::Top => "top_loss",
        LossDirection::Bottom => "bottom_loss",
    };
    Ok(SelectionResult {
        method: method.into(),
        seed: 0,
        budget: ids.len(),
        selection: Selection::Points(ids),
        selected_hex: None,
        score,
        episode_value: None,
        oracle_calls: reward.oracle_calls() - calls + 1,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

fn better(a: &(f64, ClusterSet), b: &(f64, ClusterSet)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Exact optimum over all `budget`-subsets; ties go to the
/// lexicographically smallest set. Shards by the smallest member.
pub fn brute_force_optimum(reward: &RewardEngine, budget: usize) -> Result<SelectionResult> {
    let k = reward.k();
    if budget == 0 || budget > k {
        return Err(Error::InvalidArgument(format!("budget must lie in 1..={k}")));
    }
    let total = binomial(k, budget);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!("C({k}, {budget}) = {total} exceeds {BRUTE_FORCE_LIMIT}")));
    }
    let (started, calls) = (Instant::now(), reward.oracle_calls());
    let shards: Vec<Option<(f64, ClusterSet)>> = (0..=k - budget)
        .into_par_iter()
        .map(|first| -> Result<Option<(f64, ClusterSet)>> {
            let mut best: Option<(f64, ClusterSet)> = None;
            for rest in Combinations::new(k - first - 1, budget - 1) {
                let set = ClusterSet::from_indices(k, std::iter::once(first).chain(rest.iter().map(|r| r + first + 1)))?;
                let cand = (reward.score(&set)?, set);
                if best.as_ref().is_none_or(|b| better(&cand, b)) {
                    best = Some(cand);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, ClusterSet)> = None;
    for cand in shards.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    let (_, set) = best.expect("at least one subset");
    SelectionResult::for_clusters("brute_force", 0, &set, reward, calls, started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_ranking_examples() {
        let l = [0.9, 0.1, 0.5];
        assert_eq!(rank_by_loss(&l, 1.0 / 3.0, LossDirection::Top).unwrap(), vec![0]);
        assert_eq!(rank_by_loss(&l, 1.0 / 3.0, LossDirection::Bottom).unwrap(), vec![1]);
        assert_eq!(rank_by_loss(&l, 1.0, LossDirection::Bottom).unwrap(), vec![0, 1, 2]);
        assert_eq!(rank_by_loss(&[1.0, 1.0, 0.0], 1.0 / 3.0, LossDirection::Top).unwrap(), vec![0]);
        assert!(rank_by_loss(&l, 0.0, LossDirection::Top).is_err());
    }

    #[test]
    fn random_subset_saturates_and_repeats() {
        assert_eq!(random_subset(5, 5, 3).unwrap(), ClusterSet::full(5));
        assert_eq!(random_subset(9, 4, 3).unwrap(), random_subset(9, 4, 3).unwrap());
        assert!(random_subset(3, 4, 0).is_err());
    }

    #[test]
    fn csv_rows() {
        let r = SelectionResult {
            method: "random".into(),
            seed: 1,
            budget: 2,
            selection: Selection::Clusters(vec![0, 2]),
            selected_hex: Some("5".into()),
            score: 0.5,
            episode_value: Some(0.5),
            oracle_calls: 3,
            wall_ms: 0,
        };
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &[r]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,seed,budget,score,oracle_calls,wall_ms,selected\nrandom,1,2,0.5,3,0,5\n"
        );
    }
}
