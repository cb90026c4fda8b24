use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition<A = usize> {
    pub state: Vec<f64>,
    pub action: A,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True terminal: the target does not bootstrap from `next_state`.
    pub done: bool,
}

/// FIFO ring buffer with uniform sampling with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<A = usize> {
    storage: Vec<Transition<A>>,
    capacity: usize,
    next: usize,
    inserted: u64,
}

impl<A: Clone> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition<A>) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        let n = self.storage.len();
        Ok((0..batch_size).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<&Transition<A>>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }

    /// Contents in insertion order, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<A>> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }
}
