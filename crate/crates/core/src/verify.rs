//! Numerical checks of the Lagrangian energies and score estimators.
//!
//! Every check returns a [`CheckReport`] carrying a pass flag, named
//! metrics and a data table; writing the table to disk is left to the
//! caller.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::energy::{aug_lagrangian, lagrangian, DualState, EnergyEval};
use crate::error::{Error, Result};
use crate::net::{Activation, Mlp, ParamSet, ScoreNet};
use crate::rng::RngStream;
use crate::score::{gaussian_mollified_score, mc_score_target, FnEnergy};
use crate::train::EpochRecord;

/// Step of the central-difference Hessian.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

/// A rectangular 2-D slice of the action box.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub a1: (f64, f64),
    pub a2: (f64, f64),
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            a1: (-1.0, 1.0),
            a2: (-1.0, 1.0),
            resolution: 101,
        }
    }
}

impl GridSpec {
    pub fn new(a1: (f64, f64), a2: (f64, f64), resolution: usize) -> Result<Self> {
        let g = Self { a1, a2, resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 3 {
            return Err(Error::Validation("grid resolution must be at least 3".into()));
        }
        for (lo, hi) in [self.a1, self.a2] {
            if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::Validation("grid ranges must be increasing and inside [-1, 1]".into()));
            }
        }
        Ok(())
    }

    fn axis(range: (f64, f64), n: usize, i: usize) -> f64 {
        range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
    }

    /// Grid points, `a1` major.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let n = self.resolution;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push([Self::axis(self.a1, n, i), Self::axis(self.a2, n, j)]);
            }
        }
        out
    }
}

/// Column-named numeric table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub metrics: Vec<(String, f64)>,
    pub table: Table,
    /// Set once the table has been written somewhere.
    pub artifact_path: Option<String>,
}

impl CheckReport {
    fn new(name: &str, table: Table) -> Self {
        Self {
            name: name.into(),
            pass: false,
            metrics: Vec::new(),
            table,
            artifact_path: None,
        }
    }

    fn metric(&mut self, label: &str, value: f64) {
        self.metrics.push((label.into(), value));
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.metrics.iter().find(|(l, _)| l == label).map(|(_, v)| *v)
    }
}

/// Central-difference Hessian of `f` at `x`.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut h = vec![vec![0.0; d]; d];
    let mut p = x.to_vec();
    let f0 = f(x);
    for i in 0..d {
        p[i] = x[i] + step;
        let fp = f(&p);
        p[i] = x[i] - step;
        let fm = f(&p);
        p[i] = x[i];
        h[i][i] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                p[i] = x[i] + si * step;
                p[j] = x[j] + sj * step;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * step * step);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Analytic critic pair used by the theory checks:
/// `Q(a) = −‖a − μ_r‖²` and either `Q_c(a) = g·a + b` or `Q_c(a) = ‖a − μ_c‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestCritics {
    pub mu_r: Vec<f64>,
    pub cost: TestCost,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TestCost {
    Affine { g: Vec<f64>, b: f64 },
    Smooth { mu_c: Vec<f64> },
}

impl TestCritics {
    pub fn eval(&self, a: &[f64]) -> EnergyEval {
        let q = -a.iter().zip(&self.mu_r).map(|(x, m)| (x - m) * (x - m)).sum::<f64>();
        let grad_q = a.iter().zip(&self.mu_r).map(|(x, m)| -2.0 * (x - m)).collect();
        let (qc, grad_qc) = match &self.cost {
            TestCost::Affine { g, b } => (a.iter().zip(g).map(|(x, gi)| x * gi).sum::<f64>() + b, g.clone()),
            TestCost::Smooth { mu_c } => (
                a.iter().zip(mu_c).map(|(x, m)| (x - m) * (x - m)).sum::<f64>(),
                a.iter().zip(mu_c).map(|(x, m)| 2.0 * (x - m)).collect(),
            ),
        };
        EnergyEval { q, qc, grad_q, grad_qc }
    }

    /// `∇²Q_c`.
    pub fn cost_hessian(&self, d: usize) -> Vec<Vec<f64>> {
        let diag = match self.cost {
            TestCost::Affine { .. } => 0.0,
            TestCost::Smooth { .. } => 2.0,
        };
        (0..d).map(|i| (0..d).map(|j| if i == j { diag } else { 0.0 }).collect()).collect()
    }
}

fn frobenius(a: &[Vec<f64>]) -> f64 {
    libm::sqrt(a.iter().flatten().map(|x| x * x).sum())
}

/// FD Hessian of `L_A − L` at `a`, i.e. `ΔH`.
fn hessian_gap(critics: &TestCritics, d: &DualState, a: &[f64]) -> Vec<Vec<f64>> {
    let diff = |x: &[f64]| {
        let e = critics.eval(x);
        aug_lagrangian(&e, d).unwrap_or(f64::NAN) - lagrangian(&e, d)
    };
    fd_hessian(&diff, a, FD_HESSIAN_STEP)
}

/// Hessian-gap check for the augmented energy.
///
/// Three cases on `trials` random critic instances each: affine cost on
/// active points (`ΔH` must equal `ρ g gᵀ` to 1e-6), affine cost on
/// inactive points (`ΔH` must vanish to 1e-6), and a smooth cost near the
/// boundary, where the constant `C` in `λ_min(ΔH) ≥ −C |Q_c − h|` is fitted
/// on the first half of the points and must hold on the second half.
pub fn check_hessian_gap(dual: &DualState, grid: &GridSpec, trials: usize, rng: &mut RngStream) -> Result<CheckReport> {
    grid.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let tol = 1e-6;
    let rho = dual.rho;
    let margin = 4.0 * FD_HESSIAN_STEP;
    let mut table = Table::new(&["case", "a1", "a2", "qc_minus_h", "gap_error", "min_eig"]);
    let draw_in_grid = |rng: &mut RngStream| [rng.uniform_range(grid.a1.0, grid.a1.1), rng.uniform_range(grid.a2.0, grid.a2.1)];

    let mut affine_active_err: f64 = 0.0;
    let mut affine_inactive_err: f64 = 0.0;
    let mut active_points = 0usize;
    let mut inactive_points = 0usize;
    for _ in 0..trials {
        let g = vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
        let mu_r = vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
        // Place the hinge boundary λ + ρ(g·a + b − h) = 0 through a random grid point.
        let anchor = draw_in_grid(rng);
        let b = dual.h - dual.lambda / rho - (g[0] * anchor[0] + g[1] * anchor[1]);
        let critics = TestCritics {
            mu_r,
            cost: TestCost::Affine { g: g.clone(), b },
        };
        let gnorm = libm::sqrt(g[0] * g[0] + g[1] * g[1]);
        for _ in 0..8 {
            let a = draw_in_grid(rng);
            let e = critics.eval(&a);
            let m = dual.lambda + rho * (e.qc - dual.h);
            if libm::fabs(m) <= rho * gnorm * margin * 2.0 {
                continue;
            }
            let dh = hessian_gap(&critics, dual, &a);
            let expected: Vec<Vec<f64>> = if m > 0.0 {
                (0..2).map(|i| (0..2).map(|j| rho * g[i] * g[j]).collect()).collect()
            } else {
                vec![vec![0.0; 2]; 2]
            };
            let resid: Vec<Vec<f64>> = dh.iter().zip(&expected).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect();
            let err = frobenius(&resid);
            let min_eig = symmetric_eigenvalues(&dh)[0];
            if m > 0.0 {
                affine_active_err = affine_active_err.max(err);
                active_points += 1;
                table.push(vec![0.0, a[0], a[1], e.qc - dual.h, err, min_eig]);
            } else {
                affine_inactive_err = affine_inactive_err.max(err);
                inactive_points += 1;
                table.push(vec![1.0, a[0], a[1], e.qc - dual.h, err, min_eig]);
            }
        }
    }

    // Smooth cost: points with |Q_c − h| ≤ 0.25 on the active side of the hinge.
    let mut smooth: Vec<(f64, f64)> = Vec::new();
    let mut attempts = 0;
    while smooth.len() < 8 * trials && attempts < 1000 * trials {
        attempts += 1;
        let mu_c = vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
        let critics = TestCritics {
            mu_r: vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)],
            cost: TestCost::Smooth { mu_c },
        };
        let a = draw_in_grid(rng);
        let e = critics.eval(&a);
        let m = dual.lambda + rho * (e.qc - dual.h);
        let gnorm = libm::sqrt(e.grad_qc.iter().map(|x| x * x).sum());
        if libm::fabs(e.qc - dual.h) > 0.25 || m <= rho * (gnorm + 1.0) * margin * 2.0 {
            continue;
        }
        let dh = hessian_gap(&critics, dual, &a);
        let min_eig = symmetric_eigenvalues(&dh)[0];
        let deficit = (-min_eig).max(0.0);
        smooth.push((libm::fabs(e.qc - dual.h), deficit));
        table.push(vec![2.0, a[0], a[1], e.qc - dual.h, f64::NAN, min_eig]);
    }
    let half = smooth.len() / 2;
    let fitted_c = smooth[..half]
        .iter()
        .filter(|(gap, _)| *gap > 1e-3)
        .map(|(gap, def)| def / gap)
        .fold(0.0f64, f64::max);
    let held_out_worst = smooth[half..]
        .iter()
        .map(|(gap, def)| def - fitted_c * gap)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut report = CheckReport::new("hessian", table);
    report.metric("affine_active_points", active_points as f64);
    report.metric("affine_active_max_error", affine_active_err);
    report.metric("affine_inactive_points", inactive_points as f64);
    report.metric("affine_inactive_max_error", affine_inactive_err);
    report.metric("smooth_points", smooth.len() as f64);
    report.metric("fitted_c", fitted_c);
    report.metric("held_out_worst_excess", held_out_worst);
    report.pass = active_points > 0
        && inactive_points > 0
        && smooth.len() >= 2
        && affine_active_err < tol
        && affine_inactive_err < tol
        && fitted_c.is_finite()
        && held_out_worst <= tol;
    Ok(report)
}

fn grid_density(grid: &GridSpec, beta: f64, mut energy: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let logits: Vec<f64> = grid.points().iter().map(|a| -energy(a) / beta).collect();
    crate::score::stable_softmax(&logits)
}

/// Largest pointwise gap between the grid-normalised Boltzmann densities of
/// `L` and `L_A`.
pub fn boltzmann_gap(critics: &TestCritics, dual: &DualState, grid: &GridSpec, beta: f64) -> Result<f64> {
    let mut bad = None;
    let pa = grid_density(grid, beta, |a| {
        aug_lagrangian(&critics.eval(a), dual).unwrap_or_else(|e| {
            bad = Some(e);
            f64::NAN
        })
    });
    if let Some(e) = bad {
        return Err(e);
    }
    let pl = grid_density(grid, beta, |a| lagrangian(&critics.eval(a), dual));
    Ok(pa.iter().zip(&pl).map(|(x, y)| libm::fabs(x - y)).fold(0.0, f64::max))
}

/// Boltzmann-density invariance at complementary-slackness configurations.
///
/// Case 1: `λ = 0` with `Q_c ≤ h` on the whole grid. Case 2: `λ = lambda_star`
/// with `Q_c ≡ h`. Both gaps must be below 1e-9. The control case
/// (`λ = lambda_star`, `Q_c < h`) violates slackness; it is reported but does
/// not count, except that its gap must be visibly nonzero (> 1e-6).
pub fn check_boltzmann_invariance(lambda_star: f64, rho: f64, h: f64, grid: &GridSpec, beta: f64) -> Result<CheckReport> {
    grid.validate()?;
    if !(lambda_star > 0.0) {
        return Err(Error::InvalidParameter("lambda_star must be positive".into()));
    }
    let tol = 1e-9;
    let mu_r = vec![0.25, -0.4];
    let feasible = TestCritics {
        mu_r: mu_r.clone(),
        cost: TestCost::Affine {
            g: vec![0.3, 0.2],
            b: h - 0.6,
        },
    };
    let on_boundary = TestCritics {
        mu_r: mu_r.clone(),
        cost: TestCost::Affine { g: vec![0.0, 0.0], b: h },
    };
    let gap_feasible = boltzmann_gap(&feasible, &DualState::new(0.0, rho, h, 1.0)?, grid, beta)?;
    let gap_boundary = boltzmann_gap(&on_boundary, &DualState::new(lambda_star, rho, h, 1.0)?, grid, beta)?;
    let gap_control = boltzmann_gap(&feasible, &DualState::new(lambda_star, rho, h, 1.0)?, grid, beta)?;

    let mut table = Table::new(&["case", "lambda", "max_gap", "applicable"]);
    table.push(vec![0.0, 0.0, gap_feasible, 1.0]);
    table.push(vec![1.0, lambda_star, gap_boundary, 1.0]);
    table.push(vec![2.0, lambda_star, gap_control, 0.0]);
    let mut report = CheckReport::new("boltzmann", table);
    report.metric("gap_lambda_zero_feasible", gap_feasible);
    report.metric("gap_on_boundary", gap_boundary);
    report.metric("gap_control_not_applicable", gap_control);
    report.pass = gap_feasible < tol && gap_boundary < tol && gap_control > 1e-6;
    Ok(report)
}

/// Parameters of the Monte-Carlo convergence check.
#[derive(Clone, Debug, PartialEq)]
pub struct McCheck {
    pub beta: f64,
    /// Standard deviation of the Gaussian Boltzmann policy.
    pub varsigma: f64,
    /// Noise levels; levels at or below 1e-12 are skipped.
    pub sigma_taus: Vec<f64>,
    pub sample_counts: Vec<usize>,
    pub repeats: usize,
}

impl Default for McCheck {
    fn default() -> Self {
        Self {
            beta: 1.0,
            varsigma: 0.5,
            sigma_taus: vec![0.0, 0.1, 0.3],
            sample_counts: vec![4, 16, 64, 256, 1024],
            repeats: 200,
        }
    }
}

/// Slope of the least-squares line through `(x, y)` and its standard error
/// given per-point standard errors of `y`.
pub fn weighted_slope(x: &[f64], y: &[f64], y_se: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let slope = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let var: f64 = x.iter().zip(y_se).map(|(a, s)| ((a - mx) / sxx) * ((a - mx) / sxx) * s * s).sum();
    (slope, libm::sqrt(var))
}

/// RMSE of [`mc_score_target`] against the Gaussian closed form as `N`
/// grows; passes iff every fitted log–log slope lies in `[−0.65, −0.35]`.
pub fn check_mc_convergence(p: &McCheck, rng: &mut RngStream) -> Result<CheckReport> {
    if p.sample_counts.len() < 2 || p.repeats < 2 {
        return Err(Error::InvalidParameter("need two sample counts and two repeats".into()));
    }
    let mu = vec![0.2, -0.3];
    let a_tau = vec![0.6, 0.1];
    let k = p.beta / (p.varsigma * p.varsigma);
    let m2 = mu.clone();
    let energy = FnEnergy::new(
        "gaussian",
        move |a: &[f64]| 0.5 * k * a.iter().zip(&m2).map(|(x, m)| (x - m) * (x - m)).sum::<f64>(),
        {
            let m3 = mu.clone();
            move |a: &[f64]| a.iter().zip(&m3).map(|(x, m)| k * (x - m)).collect()
        },
    );
    let mut table = Table::new(&["sigma_tau", "samples", "rmse", "log_rmse_se"]);
    let mut report_metrics = Vec::new();
    let mut pass = true;
    let mut fitted = 0;
    for &sigma in &p.sigma_taus {
        if sigma <= 1e-12 {
            continue;
        }
        let truth = gaussian_mollified_score(&mu, p.varsigma, sigma, &a_tau);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ses = Vec::new();
        for &n in &p.sample_counts {
            let mut sq = Vec::with_capacity(p.repeats);
            for _ in 0..p.repeats {
                let est = mc_score_target(&energy, &a_tau, sigma, p.beta, n, rng)?;
                sq.push(est.value.iter().zip(&truth).map(|(e, t)| (e - t) * (e - t)).sum::<f64>());
            }
            let r = p.repeats as f64;
            let mse = sq.iter().sum::<f64>() / r;
            let var = sq.iter().map(|s| (s - mse) * (s - mse)).sum::<f64>() / (r - 1.0);
            // Delta method: se(log √mse) = se(mse) / (2 mse).
            let se = libm::sqrt(var / r) / (2.0 * mse);
            let rmse = libm::sqrt(mse);
            xs.push(libm::log(n as f64));
            ys.push(libm::log(rmse));
            ses.push(se);
            table.push(vec![sigma, n as f64, rmse, se]);
        }
        let (slope, se) = weighted_slope(&xs, &ys, &ses);
        fitted += 1;
        pass &= (-0.65..=-0.35).contains(&slope);
        report_metrics.push((format!("slope_sigma_{sigma}"), slope));
        report_metrics.push((format!("slope_se_sigma_{sigma}"), se));
    }
    let mut report = CheckReport::new("mc", table);
    report.metrics = report_metrics;
    report.pass = pass && fitted > 0;
    Ok(report)
}

/// `𝓛` and `𝓛_A` over a 2-D action slice. The two tables share the
/// columns `a1, a2, energy, qc, feasible` where `feasible` is `Q̄_c ≤ h`.
pub fn landscape_grids(
    critics: &dyn Fn(&[f64]) -> Result<EnergyEval>,
    d_std: &DualState,
    d_aug: &DualState,
    grid: &GridSpec,
) -> Result<(Table, Table)> {
    grid.validate()?;
    let cols = ["a1", "a2", "energy", "qc", "feasible"];
    let mut std_t = Table::new(&cols);
    let mut aug_t = Table::new(&cols);
    for a in grid.points() {
        let e = critics(&a)?;
        let l = lagrangian(&e, d_std);
        let la = aug_lagrangian(&e, d_aug)?;
        std_t.push(vec![a[0], a[1], l, e.qc, (e.qc <= d_std.h) as u8 as f64]);
        aug_t.push(vec![a[0], a[1], la, e.qc, (e.qc <= d_aug.h) as u8 as f64]);
    }
    Ok((std_t, aug_t))
}

/// Per-run summary used by the standard-vs-augmented comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    /// Env steps at the first of `window` consecutive evaluations with
    /// episode cost `≤ h`; `None` if never reached.
    pub steps_to_feasibility: Option<u64>,
    /// Population variance of λ over the trailing quarter of epochs.
    pub trailing_lambda_var: f64,
    /// Mean of `max(0, c − h)` over the trailing quarter of evaluations.
    pub trailing_overshoot: f64,
}

pub fn steps_to_sustained_feasibility(log: &[EpochRecord], h: f64, window: usize) -> Option<u64> {
    let evals: Vec<(u64, f64)> = log.iter().filter_map(|r| r.eval_episode_cost.map(|c| (r.env_steps, c))).collect();
    if window == 0 {
        return evals.first().map(|e| e.0);
    }
    evals.windows(window).find(|w| w.iter().all(|(_, c)| *c <= h)).map(|w| w[0].0)
}

fn trailing<T>(xs: &[T], frac: f64) -> &[T] {
    let n = xs.len();
    let k = libm::ceil(n as f64 * frac) as usize;
    &xs[n - k.min(n)..]
}

pub fn trailing_variance(xs: &[f64], frac: f64) -> f64 {
    let t = trailing(xs, frac);
    if t.is_empty() {
        return 0.0;
    }
    let m = t.iter().sum::<f64>() / t.len() as f64;
    t.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / t.len() as f64
}

pub fn run_stats(log: &[EpochRecord], h: f64) -> RunStats {
    let lambdas: Vec<f64> = log.iter().map(|r| r.lambda).collect();
    let costs: Vec<f64> = log.iter().filter_map(|r| r.eval_episode_cost).collect();
    let tail = trailing(&costs, 0.25);
    let trailing_overshoot = if tail.is_empty() {
        0.0
    } else {
        tail.iter().map(|c| (c - h).max(0.0)).sum::<f64>() / tail.len() as f64
    };
    RunStats {
        steps_to_feasibility: steps_to_sustained_feasibility(log, h, 5),
        trailing_lambda_var: trailing_variance(&lambdas, 0.25),
        trailing_overshoot,
    }
}

/// `true` if the augmented run reaches sustained feasibility no later than
/// the standard run. A run that never gets there counts as infinitely late.
pub fn feasible_no_later(augmented: &RunStats, standard: &RunStats) -> bool {
    match (augmented.steps_to_feasibility, standard.steps_to_feasibility) {
        (Some(a), Some(s)) => a <= s,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

/// Network shapes exercised by [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub state_dim: usize,
    pub action_dim: usize,
    pub steps: usize,
    pub critic_hidden: Vec<usize>,
    pub cost_hidden: Vec<usize>,
    pub score_hidden: Vec<usize>,
    /// Draws per network kind.
    pub draws: usize,
    pub step: f64,
}

impl Default for GradientCheck {
    fn default() -> Self {
        Self {
            state_dim: 4,
            action_dim: 2,
            steps: 5,
            critic_hidden: vec![256, 256],
            cost_hidden: vec![256, 256],
            score_hidden: vec![128, 128, 128],
            draws: 100,
            step: 1e-6,
        }
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / libm::fabs(analytic).max(libm::fabs(numeric)).max(1e-6)
}

fn relu_pattern(net: &Mlp, cache: &crate::net::ForwardCache) -> Vec<bool> {
    net.layers
        .iter()
        .zip(cache.pre_activations())
        .filter(|(l, _)| l.activation == Activation::Relu)
        .flat_map(|(_, z)| z.iter().map(|v| *v > 0.0))
        .collect()
}

fn random_direction(tensors: &[&[f64]], rng: &mut RngStream) -> Vec<Vec<f64>> {
    tensors.iter().map(|t| (0..t.len()).map(|_| rng.normal()).collect()).collect()
}

fn shifted<P: ParamSet + Clone>(net: &P, dir: &[Vec<f64>], eps: f64) -> P {
    let mut out = net.clone();
    for (t, d) in out.tensors_mut().into_iter().zip(dir) {
        for (x, dx) in t.iter_mut().zip(d) {
            *x += eps * dx;
        }
    }
    out
}

fn inner(a: &[&[f64]], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Directional central-difference checks of parameter and input gradients
/// for the reward critic (ReLU), a cost critic (SiLU) and the score network.
/// Draws whose perturbation flips a ReLU unit are redrawn; the count is
/// reported. Passes iff the worst relative error is below 1e-4.
pub fn check_gradients(p: &GradientCheck, rng: &mut RngStream) -> Result<CheckReport> {
    let eps = p.step;
    let input = p.state_dim + p.action_dim;
    let mut table = Table::new(&["kind", "draw", "param_rel_err", "input_rel_err"]);
    let mut worst: f64 = 0.0;
    let mut redraws = 0u64;
    let max_redraws = 10 * p.draws as u64 + 100;
    let sizes = |hidden: &[usize]| {
        let mut v = vec![input];
        v.extend_from_slice(hidden);
        v.push(1);
        v
    };
    let kinds = [
        (sizes(&p.critic_hidden), Activation::Relu),
        (sizes(&p.cost_hidden), Activation::Silu),
    ];
    for (kind, (shape, act)) in kinds.iter().enumerate() {
        let mut done = 0;
        while done < p.draws {
            let net = Mlp::new(shape, *act, Activation::Linear, rng)?;
            let x: Vec<f64> = (0..input).map(|_| rng.normal()).collect();
            let u = [rng.normal()];
            let (_, cache) = net.forward(&x)?;
            let grads = net.backward(&cache, &u);
            let dir = random_direction(&net.tensors(), rng);
            let xdir: Vec<f64> = (0..input).map(|_| rng.normal()).collect();
            let plus = shifted(&net, &dir, eps);
            let minus = shifted(&net, &dir, -eps);
            let xp: Vec<f64> = x.iter().zip(&xdir).map(|(a, d)| a + eps * d).collect();
            let xm: Vec<f64> = x.iter().zip(&xdir).map(|(a, d)| a - eps * d).collect();
            let pattern = relu_pattern(&net, &cache);
            let flips = [(&plus, &x), (&minus, &x), (&net, &xp), (&net, &xm)]
                .iter()
                .any(|(n, xx)| relu_pattern(n, &n.forward(xx).unwrap().1) != pattern);
            if flips {
                redraws += 1;
                if redraws > max_redraws {
                    break;
                }
                continue;
            }
            let f = |n: &Mlp, xx: &[f64]| -> Result<f64> { Ok(u[0] * n.predict(xx)?[0]) };
            let fd_param = (f(&plus, &x)? - f(&minus, &x)?) / (2.0 * eps);
            let fd_input = (f(&net, &xp)? - f(&net, &xm)?) / (2.0 * eps);
            let e_param = rel_err(inner(&grads.tensors(), &dir), fd_param);
            let e_input = rel_err(dot(&grads.input, &xdir), fd_input);
            worst = worst.max(e_param).max(e_input);
            table.push(vec![kind as f64, done as f64, e_param, e_input]);
            done += 1;
        }
    }

    let mut done = 0;
    while done < p.draws {
        let net = ScoreNet::new(p.state_dim, p.action_dim, p.steps, &p.score_hidden, rng)?;
        let s: Vec<f64> = (0..p.state_dim).map(|_| rng.normal()).collect();
        let a: Vec<f64> = (0..p.action_dim).map(|_| rng.normal()).collect();
        let tau = 1 + rng.below(p.steps);
        let u: Vec<f64> = (0..p.action_dim).map(|_| rng.normal()).collect();
        let (_, cache) = net.forward(&s, &a, tau)?;
        let grads = net.backward(&cache, &u);
        let dir = random_direction(&net.tensors(), rng);
        let adir: Vec<f64> = (0..p.action_dim).map(|_| rng.normal()).collect();
        let plus = shifted(&net, &dir, eps);
        let minus = shifted(&net, &dir, -eps);
        let ap: Vec<f64> = a.iter().zip(&adir).map(|(x, d)| x + eps * d).collect();
        let am: Vec<f64> = a.iter().zip(&adir).map(|(x, d)| x - eps * d).collect();
        let pattern = relu_pattern(&net.trunk, cache.trunk());
        let flips = [(&plus, &a), (&minus, &a), (&net, &ap), (&net, &am)]
            .iter()
            .any(|(n, aa)| relu_pattern(&n.trunk, n.forward(&s, aa, tau).unwrap().1.trunk()) != pattern);
        if flips {
            redraws += 1;
            if redraws > max_redraws {
                break;
            }
            continue;
        }
        let f = |n: &ScoreNet, aa: &[f64]| -> Result<f64> { Ok(dot(&u, &n.eval(&s, aa, tau)?)) };
        let fd_param = (f(&plus, &a)? - f(&minus, &a)?) / (2.0 * eps);
        let fd_action = (f(&net, &ap)? - f(&net, &am)?) / (2.0 * eps);
        // The trunk input is [s, a, embedding(τ)].
        let ga = &grads.trunk.input[p.state_dim..p.state_dim + p.action_dim];
        let e_param = rel_err(inner(&grads.tensors(), &dir), fd_param);
        let e_action = rel_err(dot(ga, &adir), fd_action);
        worst = worst.max(e_param).max(e_action);
        table.push(vec![2.0, done as f64, e_param, e_action]);
        done += 1;
    }

    let mut report = CheckReport::new("gradients", table);
    report.metric("draws", (3 * p.draws) as f64);
    report.metric("max_rel_err", worst);
    report.metric("relu_flip_redraws", redraws as f64);
    report.pass = worst < 1e-4 && p.draws > 0 && redraws <= max_redraws;
    Ok(report)
}
