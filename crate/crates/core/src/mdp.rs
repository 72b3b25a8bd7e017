//! The cluster-subset MDP: states are sets of selected clusters, each action
//! adds one unselected cluster, and an episode ends once the budget is spent.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterModel, SubsampleStrategy};
use crate::error::{Error, Result};

/// A set of cluster indices below `k`, stored as a bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ClusterSet {
    k: usize,
    words: Vec<u64>,
}

impl ClusterSet {
    pub fn empty(k: usize) -> Self {
        Self {
            k,
            words: vec![0; k.div_ceil(64).max(1)],
        }
    }

    pub fn full(k: usize) -> Self {
        Self::from_indices(k, 0..k).expect("indices below k")
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(k: usize, indices: I) -> Result<Self> {
        let mut s = Self::empty(k);
        for i in indices {
            if i >= k {
                return Err(Error::InvalidArgument(format!("cluster {i} out of range (k={k})")));
            }
            s.insert(i);
        }
        Ok(s)
    }

    pub fn universe(&self) -> usize {
        self.k
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.k && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    /// Copy of `self` with `i` added.
    pub fn with(&self, i: usize) -> Self {
        let mut s = self.clone();
        s.insert(i);
        s
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&i| self.contains(i))
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Hex form of the integer `sum(2^i)`, zero-padded to `ceil(k/4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.k.div_ceil(4).max(1);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let nibble = (self.words[d * 4 / 64] >> ((d * 4) % 64)) & 0xF;
            out.push(char::from_digit(nibble as u32, 16).expect("nibble"));
        }
        out
    }

    pub fn from_hex(k: usize, hex: &str) -> Result<Self> {
        let mut s = Self::empty(k);
        for (d, ch) in hex.chars().rev().enumerate() {
            let nibble = ch
                .to_digit(16)
                .ok_or_else(|| Error::InvalidData(format!("bad hex digit `{ch}`")))?;
            for b in 0..4 {
                if nibble >> b & 1 == 1 {
                    let i = d * 4 + b;
                    if i >= k {
                        return Err(Error::InvalidData(format!("bit {i} beyond k={k}")));
                    }
                    s.insert(i);
                }
            }
        }
        Ok(s)
    }
}

/// Lexicographic order of the sorted member lists, so `{0,1} < {0,2} < {1,2}`.
impl Ord for ClusterSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter()).then(self.k.cmp(&other.k))
    }
}

impl PartialOrd for ClusterSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for ClusterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Immutable MDP state: the selected clusters, the step count and the budget.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsetState {
    selected: ClusterSet,
    step: usize,
    budget: usize,
}

impl SubsetState {
    pub fn selected(&self) -> &ClusterSet {
        &self.selected
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn k(&self) -> usize {
        self.selected.universe()
    }

    pub fn is_terminal(&self) -> bool {
        self.step == self.budget
    }

    /// Builds a state directly from a set, e.g. to evaluate a sampled subset.
    pub fn from_set(selected: ClusterSet, budget: usize) -> Result<Self> {
        let step = selected.len();
        if step > budget || budget > selected.universe() {
            return Err(Error::InvalidArgument(format!(
                "state of size {step} does not fit budget {budget} over {} clusters",
                selected.universe()
            )));
        }
        Ok(Self { selected, step, budget })
    }
}

/// `valid[i]` is true exactly when cluster `i` can still be added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    pub valid: Vec<bool>,
}

impl ActionMask {
    pub fn any(&self) -> bool {
        self.valid.iter().any(|&v| v)
    }

    pub fn valid_actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

pub fn action_mask(state: &SubsetState) -> ActionMask {
    ActionMask {
        valid: (0..state.k()).map(|i| !state.selected.contains(i)).collect(),
    }
}

/// Episode horizon for a selection fraction: `max(1, floor(delta * k))`.
pub fn budget_from_fraction(k: usize, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta={delta} must lie in (0, 1]")));
    }
    // nudge to absorb representation error, e.g. 0.0625 * 64 lands on 4 exactly
    let raw = (delta * k as f64 + 1e-9).floor() as usize;
    Ok(raw.clamp(1, k.max(1)))
}

/// Deterministic fixed-horizon environment over `k` clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionEnv {
    k: usize,
    budget: usize,
}

impl SelectionEnv {
    pub fn new(k: usize, budget: usize) -> Result<Self> {
        if budget == 0 || budget > k {
            return Err(Error::InvalidArgument(format!("budget {budget} must lie in 1..={k}")));
        }
        Ok(Self { k, budget })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn reset(&self) -> SubsetState {
        SubsetState {
            selected: ClusterSet::empty(self.k),
            step: 0,
            budget: self.budget,
        }
    }

    /// Adds `action` to the state. The flag reports whether the budget is spent.
    pub fn step(&self, state: &SubsetState, action: usize) -> Result<(SubsetState, bool)> {
        step(state, action)
    }
}

pub fn reset(k: usize, budget: usize) -> Result<SubsetState> {
    Ok(SelectionEnv::new(k, budget)?.reset())
}

pub fn step(state: &SubsetState, action: usize) -> Result<(SubsetState, bool)> {
    if state.is_terminal() {
        return Err(Error::EpisodeFinished);
    }
    if action >= state.k() || state.selected.contains(action) {
        return Err(Error::InvalidAction(action));
    }
    let next = SubsetState {
        selected: state.selected.with(action),
        step: state.step + 1,
        budget: state.budget,
    };
    let terminal = next.is_terminal();
    Ok((next, terminal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncodingKind {
    BinaryMask,
    MeanStd,
    Concat,
}

/// Fixed-width view of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoding {
    pub kind: EncodingKind,
    pub vector: Vec<f64>,
    /// Per-slot validity for `Concat` (one slot per cluster); empty otherwise.
    pub slot_valid: Vec<bool>,
}

impl StateEncoding {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    /// Width of one slot token when viewed as a sequence.
    pub fn token_width(&self) -> Option<usize> {
        (!self.slot_valid.is_empty()).then(|| self.vector.len() / self.slot_valid.len())
    }
}

/// Maps states to encodings. Representatives for `Concat` are drawn once at
/// construction so encoding stays a pure function of the state.
#[derive(Debug, Clone)]
pub struct StateEncoder {
    kind: EncodingKind,
    k: usize,
    dim: usize,
    m_reps: usize,
    centroids: Vec<f64>,
    /// `k * m_reps * dim` representative rows, zero padded for small clusters.
    reps: Vec<f64>,
}

impl StateEncoder {
    pub fn new(
        model: &ClusterModel,
        kind: EncodingKind,
        m_reps: usize,
        rep_strategy: SubsampleStrategy,
        seed: u64,
    ) -> Result<Self> {
        let dim = model.dim();
        let k = model.k();
        let mut reps = Vec::new();
        if kind == EncodingKind::Concat {
            if m_reps == 0 {
                return Err(Error::InvalidArgument("Concat needs m_reps >= 1".into()));
            }
            reps = vec![0.0; k * m_reps * dim];
            for c in 0..k {
                let picked = model.subsample(c, m_reps, rep_strategy, seed);
                for (slot, &p) in picked.iter().enumerate() {
                    let off = (c * m_reps + slot) * dim;
                    reps[off..off + dim].copy_from_slice(model.embeddings().row(p));
                }
            }
        }
        Ok(Self {
            kind,
            k,
            dim,
            m_reps,
            centroids: model.centroids().to_vec(),
            reps,
        })
    }

    /// Binary-mask encoder; needs no cluster geometry.
    pub fn binary_mask(k: usize) -> Self {
        Self {
            kind: EncodingKind::BinaryMask,
            k,
            dim: 0,
            m_reps: 0,
            centroids: Vec::new(),
            reps: Vec::new(),
        }
    }

    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> usize {
        match self.kind {
            EncodingKind::BinaryMask => self.k,
            EncodingKind::MeanStd => 2 * self.dim,
            EncodingKind::Concat => self.k * self.m_reps * self.dim,
        }
    }

    pub fn encode(&self, state: &SubsetState) -> StateEncoding {
        self.encode_set(state.selected())
    }

    pub fn encode_set(&self, set: &ClusterSet) -> StateEncoding {
        match self.kind {
            EncodingKind::BinaryMask => StateEncoding {
                kind: self.kind,
                vector: (0..self.k).map(|i| if set.contains(i) { 1.0 } else { 0.0 }).collect(),
                slot_valid: Vec::new(),
            },
            EncodingKind::MeanStd => {
                let d = self.dim;
                let mut vector = vec![0.0; 2 * d];
                let n = set.len();
                if n > 0 {
                    let (mean, var) = vector.split_at_mut(d);
                    for c in set.iter() {
                        for (m, v) in mean.iter_mut().zip(&self.centroids[c * d..(c + 1) * d]) {
                            *m += v;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= n as f64);
                    for c in set.iter() {
                        let row = &self.centroids[c * d..(c + 1) * d];
                        for ((s, v), m) in var.iter_mut().zip(row).zip(mean.iter()) {
                            *s += (v - m) * (v - m);
                        }
                    }
                    var.iter_mut().for_each(|s| *s /= n as f64);
                }
                StateEncoding {
                    kind: self.kind,
                    vector,
                    slot_valid: Vec::new(),
                }
            }
            EncodingKind::Concat => {
                let slot = self.m_reps * self.dim;
                let mut vector = vec![0.0; self.k * slot];
                for c in set.iter() {
                    vector[c * slot..(c + 1) * slot]
                        .copy_from_slice(&self.reps[c * slot..(c + 1) * slot]);
                }
                StateEncoding {
                    kind: self.kind,
                    vector,
                    slot_valid: (0..self.k).map(|c| set.contains(c)).collect(),
                }
            }
        }
    }
}

/// Free-function form of [`StateEncoder::encode`].
pub fn encode(
    state: &SubsetState,
    model: &ClusterModel,
    kind: EncodingKind,
    m_reps: usize,
    rep_strategy: SubsampleStrategy,
    seed: u64,
) -> Result<StateEncoding> {
    Ok(StateEncoder::new(model, kind, m_reps, rep_strategy, seed)?.encode(state))
}

/// Recovers the selected set from a binary-mask encoding.
pub fn decode_binary_mask(enc: &StateEncoding) -> Result<ClusterSet> {
    if enc.kind != EncodingKind::BinaryMask {
        return Err(Error::InvalidArgument("not a binary-mask encoding".into()));
    }
    ClusterSet::from_indices(
        enc.vector.len(),
        enc.vector.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i),
    )
}

/// One line of an exported episode trace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceRecord {
    pub state_bitmask_hex: String,
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
}

pub fn write_trace<W: Write>(mut w: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// `C(n, r)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // exact: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic `r`-combinations of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, r: usize) -> Self {
        Self {
            n,
            idx: (0..r).collect(),
            done: r > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let r = self.idx.len();
        let mut i = r;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - r + i {
                self.idx[i] += 1;
                for j in i + 1..r {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
