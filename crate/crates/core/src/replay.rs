//! Fixed-capacity FIFO replay buffers with uniform sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{HsdError, Result};

/// Transition between two high-level (skill selection) steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HighTransition {
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    /// One skill (or primitive action, for the flat value-decomposition baseline) per agent.
    pub skills: Vec<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    pub terminal: bool,
}

/// One agent's primitive-action transition.
#[derive(Debug, Clone, PartialEq)]
pub struct LowTransition {
    pub observation: Vec<f64>,
    pub skill: usize,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// Set only at true episode ends.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
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

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    /// Entry `i`, oldest first.
    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&T>> {
        if self.items.len() < batch_size || self.items.is_empty() {
            return Err(HsdError::NotReady {
                have: self.items.len(),
                need: batch_size.max(1),
            });
        }
        let n = self.items.len();
        Ok((0..batch_size)
            .map(|_| &self.items[rng.gen_range(0..n)])
            .collect())
    }

    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if self.items.len() < batch_size || self.items.is_empty() {
            return Err(HsdError::NotReady {
                have: self.items.len(),
                need: batch_size.max(1),
            });
        }
        let n = self.items.len();
        Ok((0..batch_size).map(|_| rng.gen_range(0..n)).collect())
    }
}
