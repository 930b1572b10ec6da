//! Built-in safety-constrained control tasks.
//!
//! Both tasks share one layout: start on the left, a goal disc on the right
//! and a hazard disc in between, so the straight-line route pays cost. The
//! per-step cost is the hazard indicator of the successor state; the episode
//! budget `h` applies to the undiscounted episode sum.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::replay::{ActionVec, StateVec};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EnvKind {
    /// Double-integrator point mass, state `(x, y, vx, vy)`.
    PointHazard,
    /// Unicycle kinematics, state `(x, y, θ)`, action `(v, ω)`.
    DiffDrive,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointHazard => "point_hazard",
            EnvKind::DiffDrive => "diff_drive",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_hazard" => Ok(EnvKind::PointHazard),
            "diff_drive" => Ok(EnvKind::DiffDrive),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Disc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.x, y - self.y);
        dx * dx + dy * dy < self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EnvSpec {
    #[cfg_attr(feature = "serde", serde(rename = "name"))]
    pub kind: EnvKind,
    pub dt: f64,
    pub horizon: usize,
    /// Episode cost budget.
    pub h: f64,
    /// Half-width of the uniform box perturbation applied to the start pose.
    pub start_noise: f64,
    /// Start pose `(x, y, θ)`; θ is ignored by `point_hazard`.
    pub start: [f64; 3],
    pub goal: Disc,
    pub goal_bonus: f64,
    pub hazards: Vec<Disc>,
    pub damping: f64,
    pub accel_scale: f64,
    pub v_scale: f64,
    pub omega_scale: f64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self::point_hazard()
    }
}

impl EnvSpec {
    pub fn point_hazard() -> Self {
        Self {
            kind: EnvKind::PointHazard,
            dt: 0.1,
            horizon: 400,
            h: 25.0,
            start_noise: 0.1,
            start: [-1.2, 0.0, 0.0],
            goal: Disc { x: 1.2, y: 0.0, radius: 0.3 },
            goal_bonus: 10.0,
            hazards: vec![Disc { x: 0.0, y: 0.0, radius: 0.4 }],
            damping: 0.95,
            accel_scale: 1.0,
            v_scale: 1.0,
            omega_scale: 2.0,
        }
    }

    pub fn diff_drive() -> Self {
        Self {
            kind: EnvKind::DiffDrive,
            ..Self::point_hazard()
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointHazard => Self::point_hazard(),
            EnvKind::DiffDrive => Self::diff_drive(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::for_kind(name.parse()?))
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointHazard => 4,
            EnvKind::DiffDrive => 3,
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::InvalidParameter(alloc::format!("{key}: {why}")));
        if self.horizon == 0 {
            return bad("horizon", "must be positive");
        }
        if !(self.h >= 0.0) {
            return bad("h", "must be nonnegative");
        }
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if !(self.start_noise >= 0.0) {
            return bad("start_noise", "must be nonnegative");
        }
        if !(self.goal.radius > 0.0) {
            return bad("goal.radius", "must be positive");
        }
        if self.hazards.iter().any(|d| !(d.radius >= 0.0)) {
            return bad("hazards.radius", "must be nonnegative");
        }
        Ok(())
    }

    /// Hazard indicator of a state (max over all discs).
    pub fn cost_of(&self, s: &[f64]) -> f64 {
        if self.hazards.iter().any(|d| d.contains(s[0], s[1])) {
            1.0
        } else {
            0.0
        }
    }

    fn goal_distance(&self, s: &[f64]) -> f64 {
        libm::hypot(s[0] - self.goal.x, s[1] - self.goal.y)
    }

    pub fn reset(&self, rng: &mut RngStream) -> Result<EnvState> {
        self.validate()?;
        let n = self.start_noise;
        let jitter = |rng: &mut RngStream| if n > 0.0 { rng.uniform_range(-n, n) } else { 0.0 };
        let x = self.start[0] + jitter(rng);
        let y = self.start[1] + jitter(rng);
        let s = match self.kind {
            EnvKind::PointHazard => vec![x, y, 0.0, 0.0],
            EnvKind::DiffDrive => vec![x, y, self.start[2] + jitter(rng)],
        };
        Ok(EnvState {
            s: StateVec(s),
            step_count: 0,
            episode_cost: 0.0,
            done: false,
        })
    }

    /// Advances one step. Actions are clipped to `[-1, 1]` before use.
    pub fn step(&self, st: &EnvState, a: &ActionVec) -> Result<(EnvState, StepOutcome)> {
        if st.done {
            return Err(Error::EpisodeDone);
        }
        if a.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim(),
                got: a.len(),
            });
        }
        let a0 = a[0].clamp(-1.0, 1.0);
        let a1 = a[1].clamp(-1.0, 1.0);
        let s = &st.s;
        let next = match self.kind {
            EnvKind::PointHazard => {
                let vx = self.damping * s[2] + self.dt * self.accel_scale * a0;
                let vy = self.damping * s[3] + self.dt * self.accel_scale * a1;
                vec![s[0] + self.dt * vx, s[1] + self.dt * vy, vx, vy]
            }
            EnvKind::DiffDrive => {
                let theta = s[2];
                let v = self.v_scale * a0;
                vec![
                    s[0] + self.dt * v * libm::cos(theta),
                    s[1] + self.dt * v * libm::sin(theta),
                    theta + self.dt * self.omega_scale * a1,
                ]
            }
        };
        let d_prev = self.goal_distance(s);
        let d_next = self.goal_distance(&next);
        let reached = d_next <= self.goal.radius;
        let mut reward = d_prev - d_next;
        if reached {
            reward += self.goal_bonus;
        }
        let cost = self.cost_of(&next);
        let step_count = st.step_count + 1;
        let done = reached || step_count >= self.horizon;
        let state = EnvState {
            s: StateVec(next),
            step_count,
            episode_cost: st.episode_cost + cost,
            done,
        };
        Ok((
            state,
            StepOutcome {
                reward,
                cost,
                done,
                terminal: reached,
            },
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub s: StateVec,
    pub step_count: usize,
    pub episode_cost: f64,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub cost: f64,
    /// Episode over: goal reached or horizon hit.
    pub done: bool,
    /// Goal reached (true terminal, no bootstrap).
    pub terminal: bool,
}
