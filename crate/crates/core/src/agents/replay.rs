use rand::Rng;

use crate::env::OBS_DIM;

/// One environment interaction. Observations are stored raw.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<A> {
    pub obs: [f64; OBS_DIM],
    pub action: A,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub done: bool,
}

/// Fixed-capacity ring buffer; once full, the oldest record is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<A> {
    storage: Vec<Transition<A>>,
    capacity: usize,
    cursor: usize,
}

impl<A: Clone> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
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

    pub fn push(&mut self, t: Transition<A>) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> Option<&Transition<A>> {
        self.storage.get(index)
    }

    /// Distinct slot indices, uniformly without replacement. `None` when the
    /// buffer holds fewer than `batch` records.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Option<Vec<usize>> {
        if batch == 0 || self.storage.len() < batch {
            return None;
        }
        Some(rand::seq::index::sample(rng, self.storage.len(), batch).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Option<Vec<&Transition<A>>> {
        self.sample_indices(rng, batch)
            .map(|idx| idx.into_iter().map(|i| &self.storage[i]).collect())
    }
}
