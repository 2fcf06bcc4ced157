use rand::Rng;

use crate::error::{Error, Result};

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    data: Vec<T>,
    /// Slot the next push overwrites once the ring is full.
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::contract("replay buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            data: Vec::new(),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, record: T) {
        if self.data.len() < self.capacity {
            self.data.push(record);
        } else {
            self.data[self.next] = record;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// Indices of `batch` uniformly drawn records.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::contract("cannot sample from an empty replay buffer"));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.data.len())).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&T>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.data[i])
            .collect())
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.data.get(i)
    }

    /// Records from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let split = if self.data.len() < self.capacity { 0 } else { self.next };
        self.data[split..].iter().chain(self.data[..split].iter())
    }
}
