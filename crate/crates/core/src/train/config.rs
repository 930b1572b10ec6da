use alloc::vec;
use alloc::vec::Vec;

use crate::energy::Guidance;
use crate::error::{Error, Result};

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub seed: u64,
    pub guidance: Guidance,
    pub total_env_steps: u64,
    /// Environment steps per epoch.
    pub epoch_length: u64,
    /// Gradient updates per epoch, spread evenly over its environment steps.
    pub train_repeat: u64,
    /// Uniform-random actions and no updates until the buffer holds this many transitions.
    pub warmup_steps: u64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub gamma_c: f64,
    pub lr: f64,
    pub polyak: f64,
    /// Target networks are Polyak-averaged every this many gradient steps.
    pub target_update_every: u64,
    pub grad_clip: f64,
    /// Diffusion steps `K`.
    pub diffusion_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Monte-Carlo samples `N` per score target.
    pub mc_samples: usize,
    /// Cost-critic ensemble size `M`.
    pub ensemble_size: usize,
    pub rho: f64,
    /// Boltzmann temperature `β`.
    pub beta: f64,
    pub eta_lambda: f64,
    pub lambda_init: f64,
    pub critic_hidden: Vec<usize>,
    pub cost_hidden: Vec<usize>,
    pub score_hidden: Vec<usize>,
    /// Evaluate every this many epochs (0 disables).
    pub eval_every: u64,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            guidance: Guidance::Augmented,
            total_env_steps: 200_000,
            epoch_length: 1000,
            train_repeat: 10,
            warmup_steps: 5000,
            buffer_capacity: 1_000_000,
            batch_size: 256,
            gamma: 0.99,
            gamma_c: 0.99,
            lr: 3e-4,
            polyak: 0.005,
            target_update_every: 5,
            grad_clip: 10.0,
            diffusion_steps: 5,
            sigma_min: 1e-4,
            sigma_max: 1e-1,
            mc_samples: 6,
            ensemble_size: 6,
            rho: 1.0,
            beta: 0.1,
            eta_lambda: 0.01,
            lambda_init: 0.0,
            critic_hidden: vec![256, 256],
            cost_hidden: vec![256, 256],
            score_hidden: vec![128, 128, 128],
            eval_every: 20,
            eval_episodes: 10,
        }
    }
}

impl TrainConfig {
    /// Checks ranges; the error names the offending key.
    pub fn validate(&self) -> Result<()> {
        fn bad(key: &str, why: &str) -> Result<()> {
            Err(Error::InvalidParameter(alloc::format!("{key}: {why}")))
        }
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.gamma) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !unit(self.gamma_c) {
            return bad("gamma_c", "must lie in (0, 1]");
        }
        if !unit(self.polyak) {
            return bad("polyak", "must lie in (0, 1]");
        }
        if self.epoch_length == 0 {
            return bad("epoch_length", "must be positive");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if self.target_update_every == 0 {
            return bad("target_update_every", "must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip", "must be positive");
        }
        if self.diffusion_steps == 0 {
            return bad("diffusion_steps", "must be positive");
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return bad("sigma_min", "must satisfy 0 < sigma_min < sigma_max");
        }
        if self.mc_samples == 0 {
            return bad("mc_samples", "must be positive");
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size", "must be positive");
        }
        if !(self.rho > 0.0) {
            return bad("rho", "must be positive");
        }
        if !(self.beta > 0.0) {
            return bad("beta", "must be positive");
        }
        if !(self.eta_lambda > 0.0) {
            return bad("eta_lambda", "must be positive");
        }
        if !(self.lambda_init >= 0.0) {
            return bad("lambda_init", "must be nonnegative");
        }
        for (key, h) in [
            ("critic_hidden", &self.critic_hidden),
            ("cost_hidden", &self.cost_hidden),
            ("score_hidden", &self.score_hidden),
        ] {
            if h.is_empty() || h.iter().any(|&w| w == 0) {
                return bad(key, "needs at least one nonzero width");
            }
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes", "must be positive when evaluation is enabled");
        }
        Ok(())
    }
}
