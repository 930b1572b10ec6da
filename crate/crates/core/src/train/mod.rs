//! Off-policy training of the energy-guided diffusion policy.

mod agent;
mod config;
mod trainer;

pub use agent::{AgentState, CallCounters, CriticEnergy, CriticLosses, SampleMode, ScoreUpdate};
pub use config::TrainConfig;
pub use trainer::{evaluate_policy, EpochRecord, EvalSummary, Trainer};

/// Stream ids under the run seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const ACT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const UPDATE: u64 = 5;
    pub const EVAL: u64 = 6;
}
