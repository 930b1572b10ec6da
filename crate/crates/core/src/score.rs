//! Energy-guided scores of the Gaussian-mollified Boltzmann policy
//! `π(a) ∝ exp(−L(a)/β)`.
//!
//! At noise level `σ` the score at `a_τ` is the posterior expectation of
//! `−∇L/β` under `N(a_τ, σ²I)` reweighted by `exp(−L/β)`. Three routes are
//! provided: a Gaussian closed form, Gauss–Hermite quadrature for `d ≤ 2`
//! (oracle use only) and the self-normalised Monte-Carlo estimator used to
//! train the score network.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// An energy over actions with its exact gradient.
pub trait EnergyFn {
    /// `(L(a), ∇L(a))`.
    fn eval(&self, a: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn descriptor(&self) -> &str {
        "energy"
    }
}

/// Energy built from two closures.
pub struct FnEnergy {
    label: String,
    value: Box<dyn Fn(&[f64]) -> f64>,
    grad: Box<dyn Fn(&[f64]) -> Vec<f64>>,
}

impl FnEnergy {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            value: Box::new(value),
            grad: Box::new(grad),
        }
    }

    /// Like [`FnEnergy::new`], but first verifies the gradient against
    /// central differences (step 1e-5) at each probe point.
    pub fn checked(
        label: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + 'static,
        probes: &[Vec<f64>],
        rel_tol: f64,
    ) -> Result<Self> {
        let f = Self::new(label, value, grad);
        for p in probes {
            let g = (f.grad)(p);
            let fd = central_gradient(&*f.value, p, 1e-5);
            for (a, n) in g.iter().zip(&fd) {
                let scale = a.abs().max(n.abs()).max(1.0);
                if (a - n).abs() / scale > rel_tol {
                    return Err(Error::Validation(alloc::format!(
                        "gradient of `{}` disagrees with finite differences",
                        f.label
                    )));
                }
            }
        }
        Ok(f)
    }
}

impl EnergyFn for FnEnergy {
    fn eval(&self, a: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((self.value)(a), (self.grad)(a)))
    }

    fn descriptor(&self) -> &str {
        &self.label
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let fp = f(&p);
            p[i] = orig - step;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Score of `N(μ, (ς² + σ²) I)` at `a`.
pub fn gaussian_mollified_score(mu: &[f64], varsigma: f64, sigma_tau: f64, a: &[f64]) -> Vec<f64> {
    let var = varsigma * varsigma + sigma_tau * sigma_tau;
    a.iter().zip(mu).map(|(x, m)| -(x - m) / var).collect()
}

/// Gauss–Hermite nodes and weights for `∫ e^{−x²} f(x) dx`, by Newton
/// iteration on the normalised Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = libm::pow(core::f64::consts::PI, -0.25);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..(n + 1) / 2 {
        z = match i {
            0 => libm::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -0.16667),
            1 => z - 1.14 * libm::pow(nf, 0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * libm::sqrt(2.0 / jf) * p2 - libm::sqrt((jf - 1.0) / jf) * p3;
            }
            pp = libm::sqrt(2.0 * nf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Energy-guided score by tensor-product Gauss–Hermite quadrature over the
/// posterior `N(a_τ, σ²I)`; `d ∈ {1, 2}`. With `σ = 0` the posterior is a
/// point mass and the result is `−∇L(a_τ)/β`.
pub fn quadrature_score(f: &dyn EnergyFn, a_tau: &[f64], sigma_tau: f64, beta: f64, nodes: usize) -> Result<Vec<f64>> {
    let d = a_tau.len();
    if d == 0 || d > 2 {
        return Err(Error::InvalidParameter("quadrature supports 1 or 2 action dimensions".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    if sigma_tau == 0.0 {
        let (_, g) = f.eval(a_tau)?;
        return Ok(g.iter().map(|x| -x / beta).collect());
    }
    let (xs, ws) = gauss_hermite(nodes.max(DEFAULT_QUADRATURE_NODES));
    let n = xs.len();
    let scale = core::f64::consts::SQRT_2 * sigma_tau;
    let total = if d == 1 { n } else { n * n };
    let mut logw = Vec::with_capacity(total);
    let mut grads = Vec::with_capacity(total);
    let mut a = vec![0.0; d];
    for idx in 0..total {
        let (i, j) = (idx % n, idx / n);
        a[0] = a_tau[0] + scale * xs[i];
        let mut lw = libm::log(ws[i]);
        if d == 2 {
            a[1] = a_tau[1] + scale * xs[j];
            lw += libm::log(ws[j]);
        }
        let (l, g) = f.eval(&a)?;
        if !l.is_finite() {
            return Err(Error::NonFiniteEnergy { index: idx });
        }
        logw.push(lw - l / beta);
        grads.push(g);
    }
    let shift = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut den = 0.0;
    let mut num = vec![0.0; d];
    for (lw, g) in logw.iter().zip(&grads) {
        let e = libm::exp(lw - shift);
        den += e;
        for (acc, gk) in num.iter_mut().zip(g) {
            *acc += e * (-gk / beta);
        }
    }
    Ok(num.into_iter().map(|x| x / den).collect())
}

/// Monte-Carlo score target with its self-normalised weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTarget {
    pub value: Vec<f64>,
    pub weights: Vec<f64>,
    /// Effective sample size `1 / Σ w²`.
    pub ess: f64,
}

/// Softmax of `logits` with the max subtracted first.
pub fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|e| libm::exp(e - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Draws `a⁽ⁱ⁾ = a_τ + σ εᵢ`, `i = 1..N`, weights them by
/// `softmax(−L(a⁽ⁱ⁾)/β)` and returns `Σ wᵢ (−∇L(a⁽ⁱ⁾)/β)`.
pub fn mc_score_target(
    f: &dyn EnergyFn,
    a_tau: &[f64],
    sigma_tau: f64,
    beta: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<ScoreTarget> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one Monte-Carlo sample".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    let d = a_tau.len();
    let mut logits = Vec::with_capacity(samples);
    let mut grads = Vec::with_capacity(samples);
    let mut a = vec![0.0; d];
    for i in 0..samples {
        for (ak, base) in a.iter_mut().zip(a_tau) {
            *ak = base + sigma_tau * rng.normal();
        }
        let (l, g) = f.eval(&a)?;
        let e = -l / beta;
        if !e.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEnergy { index: i });
        }
        logits.push(e);
        grads.push(g);
    }
    let weights = stable_softmax(&logits);
    let mut value = vec![0.0; d];
    for (w, g) in weights.iter().zip(&grads) {
        for (v, gk) in value.iter_mut().zip(g) {
            *v += w * (-gk / beta);
        }
    }
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    Ok(ScoreTarget { value, weights, ess })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(beta: f64, varsigma: f64) -> FnEnergy {
        let k = beta / (varsigma * varsigma);
        FnEnergy::new(
            "quadratic",
            move |a: &[f64]| 0.5 * k * a.iter().map(|x| x * x).sum::<f64>(),
            move |a: &[f64]| a.iter().map(|x| k * x).collect(),
        )
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(gaussian_mollified_score(&[0.0], 1.0, 0.0, &[2.0]), vec![-2.0]);
        assert_eq!(gaussian_mollified_score(&[0.0], 1.0, 1.0, &[2.0]), vec![-1.0]);
        assert_eq!(gaussian_mollified_score(&[0.3, -0.1], 0.7, 0.2, &[0.3, -0.1]), vec![0.0, 0.0]);
    }

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite(64);
        let sqrt_pi = libm::sqrt(core::f64::consts::PI);
        let m0: f64 = w.iter().sum();
        let m2: f64 = w.iter().zip(&x).map(|(w, x)| w * x * x).sum();
        let m4: f64 = w.iter().zip(&x).map(|(w, x)| w * x * x * x * x).sum();
        assert!((m0 - sqrt_pi).abs() < 1e-12);
        assert!((m2 - sqrt_pi / 2.0).abs() < 1e-12);
        assert!((m4 - 3.0 * sqrt_pi / 4.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_gaussian_closed_form() {
        for &(beta, vs, sig) in &[(1.0, 1.0, 0.5), (0.3, 0.6, 0.1), (2.0, 1.5, 1.0)] {
            let f = quadratic(beta, vs);
            for a in [[0.4, -0.9], [1.3, 0.2]] {
                let q = quadrature_score(&f, &a, sig, beta, 64).unwrap();
                let c = gaussian_mollified_score(&[0.0, 0.0], vs, sig, &a);
                for (x, y) in q.iter().zip(&c) {
                    assert!((x - y).abs() < 1e-8, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn quadrature_zero_sigma_is_point_gradient() {
        let f = quadratic(0.5, 1.0);
        let q = quadrature_score(&f, &[0.7], 0.0, 0.5, 64).unwrap();
        assert_eq!(q, vec![-0.7 / 1.0]);
    }

    #[test]
    fn quadrature_even_energy_at_origin_is_zero() {
        let f = FnEnergy::new("quartic", |a: &[f64]| a[0].powi(4) + a[1].powi(2) * 0.5, |a: &[f64]| {
            vec![4.0 * a[0].powi(3), a[1]]
        });
        let q = quadrature_score(&f, &[0.0, 0.0], 0.3, 1.0, 64).unwrap();
        assert!(q.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn constant_energy_gives_uniform_weights() {
        let f = FnEnergy::new("flat", |_: &[f64]| 3.0, |a: &[f64]| vec![0.5; a.len()]);
        let t = mc_score_target(&f, &[0.0, 0.0], 0.2, 2.0, 7, &mut RngStream::new(0, 0)).unwrap();
        assert!(t.weights.iter().all(|&w| w == 1.0 / 7.0));
        assert!(t.value.iter().all(|v| (v + 0.25).abs() < 1e-15));
        assert!((t.ess - 7.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_target() {
        let f = quadratic(1.0, 1.0);
        let mut rng = RngStream::new(8, 2);
        let t = mc_score_target(&f, &[0.3], 0.5, 1.0, 1, &mut rng.clone()).unwrap();
        assert_eq!(t.weights, vec![1.0]);
        let a1 = 0.3 + 0.5 * rng.normal();
        assert_eq!(t.value, vec![-a1]);
    }

    #[test]
    fn non_finite_energy_names_sample() {
        let f = FnEnergy::new("bad", |a: &[f64]| if a[0] > 0.0 { f64::NAN } else { 0.0 }, |a: &[f64]| {
            vec![0.0; a.len()]
        });
        let err = mc_score_target(&f, &[10.0], 0.1, 1.0, 4, &mut RngStream::new(0, 0)).unwrap_err();
        assert_eq!(err, Error::NonFiniteEnergy { index: 0 });
    }

    #[test]
    fn checked_energy_rejects_wrong_gradient() {
        let probes = vec![vec![0.3, 0.4]];
        assert!(FnEnergy::checked("ok", |a: &[f64]| a[0] * a[1], |a: &[f64]| vec![a[1], a[0]], &probes, 1e-6).is_ok());
        assert!(FnEnergy::checked("bad", |a: &[f64]| a[0] * a[1], |a: &[f64]| vec![a[0], a[1]], &probes, 1e-6).is_err());
    }
}
