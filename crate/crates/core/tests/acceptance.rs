//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use subsel_core::agents::dyna::DynaConfig;
use subsel_core::agents::{
    climb_disc, dqn_train, dyna_dqn_train, ppo_train, rollout_policy, warm_start_critic, AgentContext, ClimbConfig,
    DqnConfig, PpoConfig, QHead, RolloutMode, ValueNet,
};
use subsel_core::baselines::{brute_force_optimum, random_search};
use subsel_core::clustering::{kmeans_traced, stratified_kmeans, SubsampleStrategy};
use subsel_core::harness::{run_experiment, sweep, AgentKind, DataSource, ExperimentConfig, SweepAxis};
use subsel_core::reward::synthetic::SyntheticDataSpec;
use subsel_core::reward::{LandscapeSpec, RndBonus, RndConfig, SyntheticLandscape};
use subsel_core::{
    apply_f, ClusterSet, EmbeddingMatrix, EncodingKind, LabelVector, RewardKind, SelectionEnv, StateEncoder,
    SubsetState,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_state(k: usize, budget: usize, r: &mut impl Rng) -> SubsetState {
    let size = r.random_range(0..budget);
    let set = ClusterSet::from_indices(k, index::sample(r, k, size).into_iter()).unwrap();
    SubsetState::from_set(set, budget).unwrap()
}

fn telescoping() -> Outcome {
    let t = Instant::now();
    let d = common::desk(16, 11);
    let env = SelectionEnv::new(16, 4).unwrap();
    let mut r = common::rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut s = env.reset();
        let mut total = 0.0;
        while !s.is_terminal() {
            let free: Vec<usize> = (0..16).filter(|&i| !s.selected().contains(i)).collect();
            let a = free[r.random_range(0..free.len())];
            total += d.engine.reward(&s, a).unwrap();
            s = env.step(&s, a).unwrap().0;
        }
        let f_end = apply_f(d.landscape.loss(s.selected())).unwrap();
        let f_empty = apply_f(d.landscape.loss(&ClusterSet::empty(16))).unwrap();
        worst = worst.max((total - (f_end - f_empty)).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 1.0, format!("max deviation {worst:.2e}, {secs:.3}s"))
}

fn analytic_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for seed in 0..10 {
        let d = common::desk(16, 100 + seed);
        let l = &d.landscape;
        let mut r = common::rng(seed);
        for _ in 0..1000 {
            let s = random_state(16, 6, &mut r);
            let free: Vec<usize> = (0..16).filter(|&i| !s.selected().contains(i)).collect();
            let a = free[r.random_range(0..free.len())];
            let penalty: f64 = s.selected().iter().map(|j| l.redundancy(a, j)).sum();
            let expected = 2.0 * l.c() * (l.quality()[a] - l.lambda() * penalty);
            worst = worst.max((d.engine.reward(&s, a).unwrap() - expected).abs());
            n += 1;
        }
    }
    outcome(worst <= 1e-9, format!("{n} transitions, max deviation {worst:.2e}"))
}

fn f_anchors() -> Outcome {
    let exact = apply_f(0.5).unwrap() == 5.0;
    let zero = apply_f(2.5f64.exp() / 2.0).unwrap().abs();
    let mut r = common::rng(3);
    let mut monotone = true;
    for _ in 0..1000 {
        let a: f64 = r.random_range(1e-3..20.0);
        let b: f64 = r.random_range(1e-3..20.0);
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            monotone &= apply_f(lo).unwrap() > apply_f(hi).unwrap();
        }
    }
    outcome(
        exact && zero <= 1e-12 && monotone,
        format!("f(0.5)=5 exact: {exact}, |f(e^2.5/2)| = {zero:.1e}, monotone on 1000 pairs: {monotone}"),
    )
}

fn gradient_checks() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for layers in [3, 4, 5] {
        for seed in 0..20 {
            worst = worst.max(common::mlp_gradient_error(layers, seed));
        }
    }
    let mlp_worst = worst;
    for seed in 0..20 {
        worst = worst.max(common::transformer_gradient_error(seed, false));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs < 30.0,
        format!("max relative error {worst:.2e} (MLP {mlp_worst:.2e}), 80 instances, {secs:.1}s"),
    )
}

struct NearOpt {
    dqn_hits: usize,
    ppo_hits: usize,
    search_hits: usize,
    climb_exact: usize,
    invalid_dqn: u64,
    invalid_ppo: u64,
    episodes_dqn: usize,
    episodes_ppo: usize,
    ratios: Vec<String>,
    brute_mismatch: usize,
}

fn near_optimality() -> (Outcome, NearOpt) {
    let t = Instant::now();
    let mut s = NearOpt {
        dqn_hits: 0,
        ppo_hits: 0,
        search_hits: 0,
        climb_exact: 0,
        invalid_dqn: 0,
        invalid_ppo: 0,
        episodes_dqn: 0,
        episodes_ppo: 0,
        ratios: Vec::new(),
        brute_mismatch: 0,
    };
    for seed in 0..10u64 {
        let d = common::desk(12, seed);
        let env = SelectionEnv::new(12, 3).unwrap();
        // f(L(S)) = 2c V(S) = V(S) for c = 1/2
        let (opt, _) = common::best_value(&d.landscape, 3);
        let brute = brute_force_optimum(&d.engine, 3).unwrap();
        if (brute.score - opt).abs() > 1e-9 {
            s.brute_mismatch += 1;
        }
        let enc = StateEncoder::new(&d.model, EncodingKind::MeanStd, 1, SubsampleStrategy::Furthest, seed).unwrap();

        let mut ctx = AgentContext::new(env.clone(), &enc, &d.engine);
        let (dqn, log) = dqn_train(&mut ctx, DqnConfig::default(), seed).unwrap();
        s.invalid_dqn += log.invalid_actions;
        s.episodes_dqn += log.episodes.len();
        let sel = rollout_policy(&dqn, &env, &enc, RolloutMode::Greedy, seed).unwrap();
        let r_dqn = d.engine.score(sel.selected()).unwrap() / opt;

        let mut ctx = AgentContext::new(env.clone(), &enc, &d.engine);
        let (ppo, log) = ppo_train(&mut ctx, PpoConfig::default(), seed).unwrap();
        s.invalid_ppo += log.invalid_actions;
        s.episodes_ppo += log.episodes.len();
        let sel = rollout_policy(&ppo, &env, &enc, RolloutMode::Greedy, seed).unwrap();
        let r_ppo = d.engine.score(sel.selected()).unwrap() / opt;

        let rs = random_search(&d.engine, &env, 220, seed).unwrap();
        let r_rs = rs.score / opt;

        let modular = SyntheticLandscape::random(12, &LandscapeSpec { lambda: 0.0, ..Default::default() }, seed);
        let (_, best_set) = common::best_value(&modular, 3);
        let dm = common::desk_with(modular, seed, RewardKind::LossVal);
        let cfg = ClimbConfig {
            iterations: 20,
            sample_size: 64,
            top_k: 16,
            ..Default::default()
        };
        let climb = climb_disc(&dm.engine, &env, cfg, seed).unwrap();

        s.dqn_hits += (r_dqn >= 0.95) as usize;
        s.ppo_hits += (r_ppo >= 0.95) as usize;
        s.search_hits += (r_rs >= 0.99) as usize;
        s.climb_exact += (climb.best.to_vec() == best_set) as usize;
        s.ratios.push(format!("{r_dqn:.3}/{r_ppo:.3}/{r_rs:.3}"));
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = s.dqn_hits >= 8 && s.ppo_hits >= 8 && s.search_hits == 10 && s.climb_exact == 10 && secs < 600.0;
    let detail = format!(
        "DQN {}/10, PPO {}/10 at >=0.95; random search {}/10 at >=0.99; CLIMB exact {}/10; {:.0}s; dqn/ppo/search ratios [{}]",
        s.dqn_hits,
        s.ppo_hits,
        s.search_hits,
        s.climb_exact,
        secs,
        s.ratios.join(" ")
    );
    (outcome(pass && s.brute_mismatch == 0, detail), s)
}

fn mask_safety(near: &NearOpt) -> Outcome {
    let mut parts = vec![
        format!("dqn {} eps/{} invalid", near.episodes_dqn, near.invalid_dqn),
        format!("ppo {} eps/{} invalid", near.episodes_ppo, near.invalid_ppo),
    ];
    let mut pass = near.episodes_dqn >= 1000 && near.episodes_ppo >= 1000 && near.invalid_dqn + near.invalid_ppo == 0;

    let d = common::desk(12, 77);
    let env = SelectionEnv::new(12, 3).unwrap();
    let enc = StateEncoder::new(&d.model, EncodingKind::MeanStd, 1, SubsampleStrategy::Furthest, 77).unwrap();
    let small = DqnConfig {
        episodes: 1000,
        hidden: 32,
        ..Default::default()
    };
    let dyna = DynaConfig {
        hidden: 32,
        samples_per_step: 8,
        ..Default::default()
    };
    let mut ctx = AgentContext::new(env.clone(), &enc, &d.engine);
    let ((_, stats), log) = dyna_dqn_train(&mut ctx, dyna, small.clone(), 77).unwrap();
    pass &= log.episodes.len() >= 1000 && log.invalid_actions == 0;
    parts.push(format!(
        "dynadqn {} eps/{} invalid ({} synthetic inserted)",
        log.episodes.len(),
        log.invalid_actions,
        stats.synthetic_inserted
    ));

    let concat = StateEncoder::new(&d.model, EncodingKind::Concat, 1, SubsampleStrategy::Furthest, 77).unwrap();
    let mut ctx = AgentContext::new(env.clone(), &concat, &d.engine);
    let tcfg = DqnConfig {
        head: QHead::Transformer,
        ..small
    };
    let (_, log) = dqn_train(&mut ctx, tcfg, 77).unwrap();
    pass &= log.episodes.len() >= 1000 && log.invalid_actions == 0;
    parts.push(format!("dqn_transformer {} eps/{} invalid", log.episodes.len(), log.invalid_actions));

    let mut ctx = AgentContext::new(env.clone(), &enc, &d.engine);
    let warm = PpoConfig {
        episodes: 1000,
        warm_start: true,
        ..Default::default()
    };
    let (_, log) = ppo_train(&mut ctx, warm, 77).unwrap();
    pass &= log.episodes.len() >= 1000 && log.invalid_actions == 0;
    parts.push(format!("ppo_warm {} eps/{} invalid", log.episodes.len(), log.invalid_actions));

    // every rollout steps the environment, which rejects any invalid action
    let searched = random_search(&d.engine, &env, 1000, 77).is_ok();
    pass &= searched;
    parts.push(format!("random_search 1000 rollouts completed: {searched}"));

    let climb = climb_disc(&d.engine, &env, ClimbConfig { iterations: 20, sample_size: 64, top_k: 16, ..Default::default() }, 77).unwrap();
    let well_formed = climb.queried.iter().all(|(s, _)| s.len() == 3);
    pass &= well_formed;
    parts.push(format!("climb {} subsets all of budget size: {well_formed}", climb.queried.len()));
    outcome(pass, parts.join("; "))
}

fn warm_start_ranking() -> Outcome {
    let mut rhos = Vec::new();
    for seed in 0..5u64 {
        let d = common::desk(16, 200 + seed);
        let env = SelectionEnv::new(16, 4).unwrap();
        let enc = StateEncoder::new(&d.model, EncodingKind::MeanStd, 1, SubsampleStrategy::Furthest, seed).unwrap();
        let cfg = PpoConfig::default();
        let mut critic = ValueNet::mlp(enc.width(), cfg.hidden, cfg.layers, 1, seed);
        warm_start_critic(&d.engine, &env, &enc, &mut critic, 1, cfg.warm_start_epochs, cfg.warm_start_lr).unwrap();
        // single-cluster reward is 2c * q_i on this landscape
        let truth: Vec<f64> = d.landscape.quality().iter().map(|q| 2.0 * d.landscape.c() * q).collect();
        let pred: Vec<f64> = (0..16)
            .map(|c| critic.forward(&enc.encode(&env.step(&env.reset(), c).unwrap().0)).unwrap()[0])
            .collect();
        rhos.push(common::spearman(&pred, &truth));
    }
    let min = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(min >= 0.9, format!("Spearman per seed {:?}", rhos.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()))
}

fn dyna_and_climb_invariants() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for seed in 0..3u64 {
        let d = common::desk(12, 300 + seed);
        let env = SelectionEnv::new(12, 3).unwrap();
        let enc = StateEncoder::new(&d.model, EncodingKind::MeanStd, 1, SubsampleStrategy::Furthest, seed).unwrap();
        let mut ctx = AgentContext::new(env.clone(), &enc, &d.engine);
        let dqn = DqnConfig {
            episodes: 60,
            hidden: 32,
            ..Default::default()
        };
        let dyna = DynaConfig {
            hidden: 32,
            ..Default::default()
        };
        // the buffer law is asserted inside the agent at every step
        match dyna_dqn_train(&mut ctx, dyna, dqn, seed) {
            Ok(((_, stats), _)) => parts.push(format!("dyna seed {seed}: {} inserted", stats.synthetic_inserted)),
            Err(e) => {
                pass = false;
                parts.push(format!("dyna seed {seed}: {e}"));
            }
        }

        let cfg = ClimbConfig {
            iterations: 10,
            sample_size: 32,
            top_k: 8,
            ..Default::default()
        };
        match climb_disc(&d.engine, &env, cfg.clone(), seed) {
            Ok(out) => {
                let distinct: BTreeSet<_> = out.queried.iter().map(|q| q.0.clone()).collect();
                let frugal = out.queried.len() <= cfg.iterations * cfg.top_k && distinct.len() == out.queried.len();
                let dominant = out.queried.iter().all(|(_, r)| *r <= out.best_reward);
                let truthful = (d.engine.score(&out.best).unwrap() - out.best_reward).abs() < 1e-12;
                pass &= frugal && dominant && truthful;
                parts.push(format!("climb seed {seed}: {} queries <= {}", out.queried.len(), cfg.iterations * cfg.top_k));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("climb seed {seed}: {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn rnd_decay() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let mut r = common::rng(seed);
        let state: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut rnd = RndBonus::new(12, RndConfig::default(), seed);
        let first = rnd.intrinsic(&state).unwrap();
        let mut last = first;
        for _ in 0..100 {
            last = rnd.intrinsic(&state).unwrap();
        }
        ratios.push(last / first);
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    outcome(worst < 0.5, format!("after/before per seed {:?}", ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()))
}

fn clustering() -> Outcome {
    let mut monotone = 0;
    for seed in 0..50u64 {
        let mut r = common::rng(seed);
        let (n, dim) = (r.random_range(20..80), r.random_range(1..5));
        let data: Vec<f64> = (0..n * dim).map(|_| r.random_range(-3.0..3.0)).collect();
        let emb = Arc::new(EmbeddingMatrix::new(n, dim, data).unwrap());
        let k = r.random_range(2..8);
        let (_, trace) = kmeans_traced(emb, k, seed, 100).unwrap();
        if trace.inertia.windows(2).all(|w| w[1] <= w[0] + 1e-9) {
            monotone += 1;
        }
    }
    let mut pure = 0;
    for seed in 0..20u64 {
        let mut r = common::rng(1000 + seed);
        let n = r.random_range(30..90);
        let n_labels = r.random_range(2..5);
        let data: Vec<f64> = (0..n * 3).map(|_| r.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % n_labels).collect();
        let emb = Arc::new(EmbeddingMatrix::new(n, 3, data).unwrap());
        let m = stratified_kmeans(emb, &LabelVector::new(labels.clone()), 8, seed, 100).unwrap();
        if (0..m.k()).all(|c| m.members(c).iter().all(|&p| labels[p] == labels[m.members(c)[0]])) {
            pure += 1;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        k: 64,
        agent: AgentKind::Random,
        seeds: vec![0, 1],
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let values: Vec<String> = ["0.03125", "0.0625", "0.125"].iter().map(|s| s.to_string()).collect();
    let summary = sweep(&base, SweepAxis::Delta, &values).unwrap();
    let budgets: Vec<Option<usize>> = summary.cells.iter().map(|c| c.budget).collect();
    let sweep_ok = budgets == vec![Some(2), Some(4), Some(8)];
    outcome(
        monotone == 50 && pure == 20 && sweep_ok,
        format!("inertia monotone {monotone}/50, stratified pure {pure}/20, delta sweep budgets {budgets:?}"),
    )
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut exports: Vec<Vec<Vec<u8>>> = Vec::new();
    let agents = [AgentKind::Ppo, AgentKind::Climb, AgentKind::Dqn];
    for rep in 0..3 {
        let mut files = Vec::new();
        for agent in agents {
            let cfg = ExperimentConfig {
                data: DataSource::Synthetic {
                    landscape: LandscapeSpec::default(),
                    data: SyntheticDataSpec::default(),
                    seed: 5,
                },
                k: 12,
                delta: 0.25,
                agent,
                seeds: vec![1, 2],
                dqn: DqnConfig {
                    episodes: 40,
                    hidden: 32,
                    ..Default::default()
                },
                climb: ClimbConfig {
                    iterations: 5,
                    sample_size: 32,
                    top_k: 8,
                    ..Default::default()
                },
                output_dir: root.path().join(format!("rep{rep}-{}", agent.name())),
                ..Default::default()
            };
            let report = run_experiment(&cfg).unwrap();
            for run in &report.runs {
                files.push(std::fs::read(cfg.output_dir.join(run.export_file.as_ref().unwrap())).unwrap());
            }
        }
        exports.push(files);
    }
    let same = exports.windows(2).all(|w| w[0] == w[1]);
    let n = exports[0].len();
    outcome(same && n == 6, format!("{n} exported id files, byte-identical across 3 repeats: {same}"))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("telescoping identity", telescoping()),
        ("analytic reward identity", analytic_identity()),
        ("f-transform anchors", f_anchors()),
        ("gradient checks", gradient_checks()),
    ];
    let (near, stats) = near_optimality();
    results.push(("brute-force near-optimality", near));
    results.push(("mask safety", mask_safety(&stats)));
    results.push(("warm-start ranking", warm_start_ranking()));
    results.push(("DynaDQN buffer law and CLIMB frugality", dyna_and_climb_invariants()));
    results.push(("RND novelty decay", rnd_decay()));
    results.push(("clustering", clustering()));
    results.push(("determinism", determinism()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
