//! Ring-buffer experience replay.

use rand::Rng;

use crate::math::Vec2;
use crate::particle_world::Observation;

/// One stored step. Observations, actions, and rewards are the values the
/// learners saw: observations and actions carry their training perturbations
/// (actions unclipped), rewards carry reward noise when it was on.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Vec<Observation>,
    pub actions: Vec<Vec2>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Observation>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; old transitions are overwritten in insertion
/// order once full. Storage grows lazily up to the capacity.
#[derive(Debug, Default)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            data: Vec::new(),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    /// Uniform indices with replacement. Panics when fewer than `batch`
    /// transitions are stored; callers gate on [`ReplayBuffer::len`].
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        assert!(
            self.data.len() >= batch,
            "cannot sample {batch} from buffer of {}",
            self.data.len()
        );
        (0..batch).map(|_| rng.random_range(0..self.data.len())).collect()
    }
}
