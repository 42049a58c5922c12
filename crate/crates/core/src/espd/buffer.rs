use std::collections::VecDeque;

use crate::numkit::SeededRng;

/// One hindsight inverse-dynamics sample: from `state`, executing `action`
/// led (within `span` steps) to a state whose goal image is `goal`.
#[derive(Debug, Clone, PartialEq)]
pub struct HidTuple {
    /// Step index of `state` inside its episode.
    pub t: usize,
    pub state: Vec<f64>,
    pub goal: Vec<f64>,
    pub action: Vec<f64>,
    pub span: usize,
}

/// Bounded FIFO of selected tuples; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct HidBuffer {
    capacity: usize,
    entries: VecDeque<HidTuple>,
}

impl HidBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, tuple: HidTuple) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(tuple);
    }

    pub fn get(&self, i: usize) -> Option<&HidTuple> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HidTuple> {
        self.entries.iter()
    }

    /// Uniform minibatch: without replacement when the buffer holds at least
    /// `n` entries, with replacement otherwise.
    pub fn sample(&self, rng: &mut SeededRng, n: usize) -> Vec<&HidTuple> {
        if self.entries.is_empty() || n == 0 {
            return Vec::new();
        }
        if self.entries.len() >= n {
            rng.sample_indices(self.entries.len(), n)
                .into_iter()
                .map(|i| &self.entries[i])
                .collect()
        } else {
            (0..n)
                .map(|_| &self.entries[rng.index(self.entries.len())])
                .collect()
        }
    }
}
