use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One joint step. Vectors are indexed by agent in sorted-id order;
/// observations and actions are stored normalized to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    pub done: bool,
}

impl Transition {
    pub fn agents(&self) -> usize {
        self.rewards.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.rewards.len();
        if self.observations.len() != n || self.actions.len() != n || self.next_observations.len() != n {
            return Err(Error::contract("transition fields cover different agent sets"));
        }
        Ok(())
    }
}

/// Fixed-capacity ring buffer with a seeded uniform sampler.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
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

    /// Inserts a transition, evicting the oldest one when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.check()?;
        if let Some(first) = self.items.first() {
            if first.agents() != t.agents() {
                return Err(Error::contract("transition agent count changed"));
            }
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Uniform sample with replacement.
    pub fn sample(&mut self, batch: usize) -> Result<Vec<&Transition>> {
        if self.items.is_empty() || batch == 0 {
            return Err(Error::contract("sampling needs a non-empty buffer and batch"));
        }
        let n = self.items.len();
        let idx: Vec<usize> = (0..batch).map(|_| self.rng.gen_range(0..n)).collect();
        Ok(idx.into_iter().map(|k| &self.items[k]).collect())
    }
}
