//! FIFO experience replay shared by DQN and DynaDQN.

use std::collections::VecDeque;

use rand::Rng as _;

use crate::mdp::{ActionMask, StateEncoding};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct Transition {
    pub enc: StateEncoding,
    pub action: usize,
    pub reward: f64,
    pub next_enc: StateEncoding,
    pub next_mask: ActionMask,
    pub terminal: bool,
    pub is_synthetic: bool,
    /// Loss weight; 1 for real experience.
    pub weight: f64,
    /// Episodes survived since insertion (only tracked for synthetic entries).
    pub age_episodes: u32,
    /// Ensemble disagreement and the gate it passed, for synthetic entries.
    pub gate: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, dropping the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform indices, with replacement.
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    /// Ages synthetic entries by one episode and evicts those older than
    /// `max_age`. Returns how many were evicted.
    pub fn end_episode(&mut self, max_age: u32) -> usize {
        for t in self.items.iter_mut().filter(|t| t.is_synthetic) {
            t.age_episodes += 1;
        }
        let before = self.items.len();
        self.items.retain(|t| !t.is_synthetic || t.age_episodes <= max_age);
        before - self.items.len()
    }

    pub fn synthetic_count(&self) -> usize {
        self.items.iter().filter(|t| t.is_synthetic).count()
    }
}
