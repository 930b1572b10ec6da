//! Variance-exploding noise ladder.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::replay::ActionVec;
use crate::rng::RngStream;

/// `sigma[0] = 0` (clean actions) and `sigma[1..=K]` geometric from
/// `σ_min` to `σ_max`, endpoints included. `dsq(τ) = σ_τ² − σ_{τ−1}²` is the
/// per-step variance increment used for both drift and noise in the
/// reverse sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    sigma: Vec<f64>,
    dsq: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(steps: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("schedule needs K >= 1".into()));
        }
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise bounds must satisfy 0 < sigma_min < sigma_max".into(),
            ));
        }
        let mut sigma = vec![0.0; steps + 1];
        if steps == 1 {
            sigma[1] = sigma_max;
        } else {
            let ratio = sigma_max / sigma_min;
            for (tau, s) in sigma.iter_mut().enumerate().skip(1) {
                let frac = (tau - 1) as f64 / (steps - 1) as f64;
                *s = sigma_min * libm::pow(ratio, frac);
            }
            sigma[1] = sigma_min;
            sigma[steps] = sigma_max;
        }
        let dsq: Vec<f64> = sigma.windows(2).map(|w| w[1] * w[1] - w[0] * w[0]).collect();
        if dsq.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidParameter("noise ladder is not strictly increasing".into()));
        }
        Ok(Self { sigma, dsq })
    }

    pub fn steps(&self) -> usize {
        self.dsq.len()
    }

    /// `σ(τ)` for `τ ∈ 0..=K`.
    pub fn sigma(&self, tau: usize) -> f64 {
        self.sigma[tau]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    /// `σ_τ² − σ_{τ−1}²` for `τ ∈ 1..=K`.
    pub fn dsq(&self, tau: usize) -> f64 {
        self.dsq[tau - 1]
    }

    pub fn dsqs(&self) -> &[f64] {
        &self.dsq
    }

    fn check_step(&self, tau: usize) -> Result<()> {
        if tau == 0 || tau > self.steps() {
            return Err(Error::StepOutOfRange {
                step: tau,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// Forward mollification `a0 + σ_τ·ε`.
    pub fn forward_perturb(&self, a0: &[f64], tau: usize, rng: &mut RngStream) -> Result<ActionVec> {
        self.check_step(tau)?;
        Ok(perturb(a0, self.sigma(tau), rng))
    }
}

/// `a0 + sigma·ε`, one standard normal per coordinate.
pub fn perturb(a0: &[f64], sigma: f64, rng: &mut RngStream) -> ActionVec {
    ActionVec(a0.iter().map(|&x| x + sigma * rng.normal()).collect())
}
