//! Domain vectors, transitions and the FIFO replay buffer.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

macro_rules! real_vec {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(len: usize) -> Self {
                Self(alloc::vec![0.0; len])
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

real_vec!(
    /// Environment observation.
    StateVec
);
real_vec!(
    /// Control input; entries lie in `[-1, 1]` once clipped.
    ActionVec
);

impl ActionVec {
    pub fn clip_unit(&mut self) {
        for v in self.0.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: StateVec,
    pub action: ActionVec,
    pub reward: f64,
    pub cost: f64,
    pub next_state: StateVec,
    /// True terminal (goal reached); time-limit truncation is not stored here
    /// so that TD targets keep bootstrapping through it.
    pub done: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if !self.state.is_finite() || !self.next_state.is_finite() {
            return Err(Error::Validation("non-finite state".into()));
        }
        if !self.action.is_finite() {
            return Err(Error::Validation("non-finite action".into()));
        }
        if !self.reward.is_finite() {
            return Err(Error::Validation(format!("non-finite reward {}", self.reward)));
        }
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(Error::Validation(format!(
                "cost must be finite and nonnegative, got {}",
                self.cost
            )));
        }
        Ok(())
    }
}

/// Fixed-capacity ring of transitions; once full, each push overwrites the
/// oldest entry.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::new(),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Slot the next push writes to.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.storage.get(slot)
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Uniform slot indices, with replacement.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        let n = self.storage.len();
        Ok((0..batch_size).map(|_| rng.below(n)).collect())
    }

    pub fn sample_batch(&self, batch_size: usize, rng: &mut RngStream) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }

    /// Transitions from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }
}
