#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subsel_core::nn::{Mlp, TinyTransformer, TransformerArch};
use subsel_core::reward::synthetic::{synthetic_cluster_model, SyntheticDataSpec};
use subsel_core::reward::{LandscapeSpec, RewardCache, SyntheticLandscape, SyntheticOracle};
use subsel_core::{ClusterModel, RewardEngine, RewardKind};

pub struct Desk {
    pub engine: RewardEngine,
    pub model: Arc<ClusterModel>,
    pub landscape: Arc<SyntheticLandscape>,
}

/// Synthetic blobs scored by `landscape` through the in-process oracle.
pub fn desk_with(landscape: SyntheticLandscape, seed: u64, kind: RewardKind) -> Desk {
    let k = landscape.k();
    let model = Arc::new(synthetic_cluster_model(k, &SyntheticDataSpec::default(), seed).unwrap());
    let landscape = Arc::new(landscape);
    let oracle = SyntheticOracle::new(landscape.clone(), model.assignment().to_vec(), seed).unwrap();
    let engine = RewardEngine::new(Arc::new(oracle), model.clone(), kind, Arc::new(RewardCache::new())).unwrap();
    Desk { engine, model, landscape }
}

/// The default random landscape.
pub fn desk(k: usize, seed: u64) -> Desk {
    desk_with(SyntheticLandscape::random(k, &LandscapeSpec::default(), seed), seed, RewardKind::LossVal)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed)
}

/// `||a - b|| / max(||a|| + ||b||, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

fn half_sq(out: &[f64], target: &[f64]) -> f64 {
    0.5 * out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
}

/// Analytic vs central-difference gradient of `0.5 * ||mlp(x) - t||^2` for
/// a random MLP with `n_layers` affine layers.
pub fn mlp_gradient_error(n_layers: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut widths = vec![r.random_range(2..6)];
    for _ in 0..n_layers {
        widths.push(r.random_range(2..7));
    }
    let mut net = Mlp::new(&widths, seed);
    // zero biases put pre-activations exactly on the ReLU kink behind dead units
    for p in net.params_mut() {
        *p += r.random_range(-0.3..0.3);
    }
    let x: Vec<f64> = (0..widths[0]).map(|_| r.random_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..*widths.last().unwrap()).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut analytic = vec![0.0; net.params().len()];
    net.accumulate(&x, &mut analytic, |o| o.iter().zip(&t).map(|(a, b)| a - b).collect())
        .unwrap();
    let h = 1e-4;
    let mut numeric = vec![0.0; analytic.len()];
    for i in 0..analytic.len() {
        let p0 = net.params()[i];
        net.params_mut()[i] = p0 + h;
        let up = half_sq(&net.forward(&x).unwrap(), &t);
        net.params_mut()[i] = p0 - h;
        let dn = half_sq(&net.forward(&x).unwrap(), &t);
        net.params_mut()[i] = p0;
        numeric[i] = (up - dn) / (2.0 * h);
    }
    relative_error(&analytic, &numeric)
}

/// Same check for the transformer, with some slots masked out. `narrow`
/// shrinks the model width for a quicker check.
pub fn transformer_gradient_error(seed: u64, narrow: bool) -> f64 {
    let mut r = rng(seed);
    let n_slots = r.random_range(2..5);
    let width = r.random_range(2..4);
    let mut arch = TransformerArch::new(n_slots, width, 2);
    if narrow {
        arch.model_width = 8;
        arch.ffn_width = 12;
    }
    let mut net = TinyTransformer::new(arch, seed);
    let tokens: Vec<f64> = (0..n_slots * width).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut valid: Vec<bool> = (0..n_slots).map(|_| r.random_bool(0.7)).collect();
    valid[0] = true;
    let t = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    let mut analytic = vec![0.0; net.params().len()];
    net.accumulate(&tokens, &valid, &mut analytic, |o| o.iter().zip(&t).map(|(a, b)| a - b).collect())
        .unwrap();
    let h = 1e-4;
    let mut numeric = vec![0.0; analytic.len()];
    for i in 0..analytic.len() {
        let p0 = net.params()[i];
        net.params_mut()[i] = p0 + h;
        let up = half_sq(&net.forward(&tokens, &valid).unwrap(), &t);
        net.params_mut()[i] = p0 - h;
        let dn = half_sq(&net.forward(&tokens, &valid).unwrap(), &t);
        net.params_mut()[i] = p0;
        numeric[i] = (up - dn) / (2.0 * h);
    }
    relative_error(&analytic, &numeric)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &p in &idx[i..=j] {
            r[p] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// Best `budget`-subset value by direct recursion over the landscape
/// (independent of the library's enumeration).
pub fn best_value(landscape: &SyntheticLandscape, budget: usize) -> (f64, Vec<usize>) {
    fn go(l: &SyntheticLandscape, start: usize, left: usize, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if left == 0 {
            let v = l.value(cur.iter().copied());
            if v > best.0 {
                *best = (v, cur.clone());
            }
            return;
        }
        for i in start..l.k() {
            cur.push(i);
            go(l, i + 1, left - 1, cur, best);
            cur.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    go(landscape, 0, budget, &mut Vec::new(), &mut best);
    best
}
