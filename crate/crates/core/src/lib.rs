//! Augmented-Lagrangian guided diffusion (ALGD) for safe reinforcement learning.
//!
//! This crate is the allocation-only algorithmic core: replay storage, toy
//! safety environments, small MLPs with analytic gradients, the VE noise
//! ladder, Lagrangian energies, Monte-Carlo score targets and the off-policy
//! training loop. Everything here is `no_std` + `alloc`; IO, configuration
//! files and the command line live in the `algd-lab` crate.

#![no_std]

extern crate alloc;

pub mod energy;
pub mod env;
pub mod error;
pub mod net;
pub mod replay;
pub mod rng;
pub mod schedule;
pub mod score;
pub mod train;
pub mod verify;

pub use energy::{DualState, EnergyEval, Guidance};
pub use env::{EnvKind, EnvSpec, EnvState, StepOutcome};
pub use error::{Error, Result};
pub use net::{Activation, Mlp, ScoreNet};
pub use replay::{ActionVec, ReplayBuffer, StateVec, Transition};
pub use rng::RngStream;
pub use schedule::NoiseSchedule;
pub use train::{AgentState, SampleMode, TrainConfig, Trainer};
