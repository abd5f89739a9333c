use std::collections::VecDeque;

use rand::Rng;

use crate::env::{Action, Observation};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: Action,
    pub r: f64,
    pub s_next: Observation,
    pub done: bool,
}

/// Bounded FIFO experience memory with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    warmup: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, warmup: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            warmup,
            items: VecDeque::with_capacity(capacity.clamp(1, 1 << 20)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.items.len() >= self.warmup.max(1)
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}
