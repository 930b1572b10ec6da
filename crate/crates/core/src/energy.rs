//! Lagrangian energies over actions and projected dual ascent.
//!
//! Standard:   `L(a)   = −Q(a) + λ (Q_c(a) − h)`
//! Augmented:  `L_A(a) = −Q(a) + ([λ + ρ (Q_c(a) − h)]₊² − λ²) / (2ρ)`

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Critic values and their action-gradients at one `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyEval {
    /// Reward value (min over the double-Q pair).
    pub q: f64,
    /// Ensemble-mean cost value.
    pub qc: f64,
    pub grad_q: Vec<f64>,
    pub grad_qc: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualState {
    pub lambda: f64,
    pub rho: f64,
    pub h: f64,
    pub eta_lambda: f64,
}

impl DualState {
    pub fn new(lambda: f64, rho: f64, h: f64, eta_lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter("rho must be positive".into()));
        }
        if !(eta_lambda > 0.0) {
            return Err(Error::InvalidParameter("eta_lambda must be positive".into()));
        }
        Ok(Self {
            lambda,
            rho,
            h,
            eta_lambda,
        })
    }

    /// `λ ← [λ + η (Q̄_c − h)]₊`.
    pub fn dual_update(&self, mean_qc: f64) -> DualState {
        DualState {
            lambda: (self.lambda + self.eta_lambda * (mean_qc - self.h)).max(0.0),
            ..*self
        }
    }

    /// Hinge multiplier `[λ + ρ(Q_c − h)]₊`, zero on the boundary.
    pub fn hinge(&self, qc: f64) -> f64 {
        let m = self.lambda + self.rho * (qc - self.h);
        if m > 0.0 {
            m
        } else {
            0.0
        }
    }
}

pub fn lagrangian(e: &EnergyEval, d: &DualState) -> f64 {
    -e.q + d.lambda * (e.qc - d.h)
}

pub fn lagrangian_grad_a(e: &EnergyEval, d: &DualState) -> Vec<f64> {
    e.grad_q
        .iter()
        .zip(&e.grad_qc)
        .map(|(gq, gc)| -gq + d.lambda * gc)
        .collect()
}

pub fn aug_lagrangian(e: &EnergyEval, d: &DualState) -> Result<f64> {
    if !(d.rho > 0.0) {
        return Err(Error::InvalidParameter("rho must be positive".into()));
    }
    let m = d.hinge(e.qc);
    Ok(-e.q + (m * m - d.lambda * d.lambda) / (2.0 * d.rho))
}

pub fn aug_lagrangian_grad_a(e: &EnergyEval, d: &DualState) -> Vec<f64> {
    let m = d.hinge(e.qc);
    e.grad_q.iter().zip(&e.grad_qc).map(|(gq, gc)| -gq + m * gc).collect()
}

/// Which energy guides the diffusion policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Guidance {
    Standard,
    Augmented,
}

impl Guidance {
    pub fn name(self) -> &'static str {
        match self {
            Guidance::Standard => "standard",
            Guidance::Augmented => "augmented",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(Guidance::Standard),
            "augmented" => Some(Guidance::Augmented),
            _ => None,
        }
    }

    pub fn energy(self, e: &EnergyEval, d: &DualState) -> Result<f64> {
        match self {
            Guidance::Standard => Ok(lagrangian(e, d)),
            Guidance::Augmented => aug_lagrangian(e, d),
        }
    }

    pub fn grad_a(self, e: &EnergyEval, d: &DualState) -> Vec<f64> {
        match self {
            Guidance::Standard => lagrangian_grad_a(e, d),
            Guidance::Augmented => aug_lagrangian_grad_a(e, d),
        }
    }
}
