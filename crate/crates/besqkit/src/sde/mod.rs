//! Path simulation with full-truncation Euler steps: drifted BESQ and dual
//! diffusions, reflected half-array and edge dynamics, the conditioned singular
//! SDE, and a Monte Carlo non-collision estimator.

mod conditioned;
pub(crate) mod halfarray;
mod noncollision;

pub use conditioned::simulate_conditioned;
pub use halfarray::{simulate_edge, simulate_half_array, HalfArray};
pub use noncollision::{estimate_noncollision, estimate_noncollision_with, NonCollisionEstimate, NonCollisionOpts};

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffspec::BesselParams;
use crate::rng::StreamId;
use crate::specfun::{ratio_table, RatioTable, SpecError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid initial state: {0}")]
    Init(String),
    #[error("step size fell below the minimum at t={time} (state {state:?})")]
    DtUnderflow { time: f64, state: Vec<f64> },
    #[error("barriers from level {level} crossed at t={time} even at the minimum step")]
    CollisionTrap { time: f64, level: usize },
    #[error(transparent)]
    Special(#[from] SpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerFullTruncation,
}

/// How a coordinate that leaves its interval is put back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reflection {
    /// Clamp to the nearest end. Weak error of order √dt.
    Projection,
    /// Fold back across the end that was crossed (symmetrized Euler). Weak error
    /// of order dt.
    #[default]
    Mirror,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_trials() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_halvings() -> u32 {
    24
}

/// Simulation settings shared by all simulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub reflection: Reflection,
    /// Gaps at or below this value count as collisions.
    #[serde(default)]
    pub boundary_guard: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Record every this many base steps; 0 records only the endpoints.
    #[serde(default)]
    pub record_every: usize,
    /// Reflection between levels; off turns every coordinate into a free diffusion.
    #[serde(default = "default_true")]
    pub pushes: bool,
    /// Smallest step is `dt / 2^max_halvings`.
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            scheme: Scheme::EulerFullTruncation,
            reflection: Reflection::Mirror,
            boundary_guard: 0.0,
            seed: 0,
            trials: 1,
            record_every: 0,
            pushes: true,
            max_halvings: 24,
        }
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SdeError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(SdeError::Config(format!("need dt <= horizon, got dt={} horizon={}", self.dt, self.horizon)));
        }
        if !(self.boundary_guard >= 0.0) {
            return Err(SdeError::Config("boundary_guard must be non-negative".into()));
        }
        if self.max_halvings > 30 {
            return Err(SdeError::Config("max_halvings must be at most 30".into()));
        }
        Ok(())
    }

    pub fn dt_min(&self) -> f64 {
        self.dt / f64::powi(2.0, self.max_halvings as i32)
    }

    fn check_gaps(&self, x: &[f64]) -> Result<(), SdeError> {
        for w in x.windows(2) {
            if w[1] - w[0] <= self.boundary_guard {
                return Err(SdeError::Init(format!("gap {} not above boundary_guard {}", w[1] - w[0], self.boundary_guard)));
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    fn step_size(&self, k: usize) -> f64 {
        (self.horizon - k as f64 * self.dt).min(self.dt)
    }

    fn records(&self, k: usize, n: usize) -> bool {
        k == n || (self.record_every > 0 && k % self.record_every == 0)
    }
}

/// Recorded path of one trial. `states[i]` is the (flattened) state at `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub seed: u64,
    pub trial: u64,
    /// Cumulative reflection displacement per coordinate (reflected simulators only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pushes: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbed_at: Option<f64>,
    /// Steps that were split because of a same-level collision or crossing.
    #[serde(default)]
    pub halvings: u64,
    /// Steps taken at the minimum step size although they still failed the
    /// separation rule (gap criterion, or two coordinates of a level meeting).
    #[serde(default)]
    pub capped_steps: u64,
}

impl PathGrid {
    fn new(stream: StreamId, dt: f64) -> Self {
        Self {
            times: vec![],
            states: vec![],
            dt,
            seed: stream.seed,
            trial: stream.trial,
            pushes: vec![],
            absorbed_at: None,
            halvings: 0,
            capped_steps: 0,
        }
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Drift of one level of the half-array, as a function of the coordinate.
#[derive(Clone)]
pub(crate) enum LevelDrift {
    /// BESQ_λ: `2(ν+1) + 2z R_ν(z)`, `z = √(2λx)`.
    Besq { nu: f64, lambda: f64, table: Arc<RatioTable> },
    /// Dual with the Doob term: `−2ν − 2z R_ν(z)`.
    Dual { nu: f64, lambda: f64, table: Arc<RatioTable> },
}

impl LevelDrift {
    pub(crate) fn besq(params: BesselParams, lambda: f64) -> Result<Self, SdeError> {
        check_lambda(lambda)?;
        Ok(Self::Besq { nu: params.nu(), lambda, table: ratio_table(params.nu())? })
    }

    pub(crate) fn dual(params: BesselParams, lambda: f64) -> Result<Self, SdeError> {
        check_lambda(lambda)?;
        Ok(Self::Dual { nu: params.nu(), lambda, table: ratio_table(params.nu())? })
    }

    /// Drift of level `k` (one-based) for drift parameters `mu`: odd levels `2n−1`
    /// are BESQ with `λ = μ_n/2`, even levels `2n` are dual with `λ = μ_{n+1}/2`.
    pub(crate) fn for_level(params: BesselParams, mu: &[f64], k: usize) -> Result<Self, SdeError> {
        if k % 2 == 1 {
            Self::besq(params, 0.5 * mu[(k - 1) / 2])
        } else {
            Self::dual(params, 0.5 * mu[k / 2])
        }
    }

    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Besq { nu, lambda, table } => {
                let z = (2.0 * lambda * x.max(0.0)).sqrt();
                2.0 * (nu + 1.0) + 2.0 * z * table.eval(z)
            }
            Self::Dual { nu, lambda, table } => {
                let z = (2.0 * lambda * x.max(0.0)).sqrt();
                -2.0 * nu - 2.0 * z * table.eval(z)
            }
        }
    }

    pub(crate) fn is_dual(&self) -> bool {
        matches!(self, Self::Dual { .. })
    }
}

fn check_lambda(lambda: f64) -> Result<(), SdeError> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(SdeError::Config(format!("lambda must be non-negative, got {lambda}")))
    }
}

#[inline]
pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One full-truncation Euler step of `dx = b dt + 2√x dW` with increment `dw`.
#[inline]
pub(crate) fn euler(drift: &LevelDrift, x: f64, h: f64, dw: f64) -> f64 {
    let xp = x.max(0.0);
    x + drift.eval(xp) * h + 2.0 * xp.sqrt() * dw
}

fn simulate_one(
    drift: LevelDrift,
    x0: f64,
    cfg: &SimConfig,
    stream: StreamId,
    absorb: bool,
) -> Result<PathGrid, SdeError> {
    cfg.validate()?;
    if !(x0 >= 0.0) || !x0.is_finite() || (absorb && x0 <= 0.0) {
        return Err(SdeError::Init(format!("bad starting point {x0}")));
    }
    let mut rng = stream.rng(0);
    let mut g = PathGrid::new(stream, cfg.dt);
    let n = cfg.steps();
    let mut x = x0;
    let mut t = 0.0;
    g.times.push(0.0);
    g.states.push(vec![x]);
    for k in 1..=n {
        let h = cfg.step_size(k - 1);
        let dw = h.sqrt() * normal(&mut rng);
        if g.absorbed_at.is_none() {
            x = euler(&drift, x, h, dw).max(0.0);
            if absorb && x <= 0.0 {
                x = 0.0;
                g.absorbed_at = Some(t + h);
            }
        }
        t = if k == n { cfg.horizon } else { k as f64 * cfg.dt };
        if cfg.records(k, n) {
            g.times.push(t);
            g.states.push(vec![x]);
        }
    }
    Ok(g)
}

/// BESQ_λ(δ) path: `dx = 2√x dW + [2(ν+1) + 2√(2λx) I_{ν+1}/I_ν(√(2λx))] dt`,
/// truncated at 0 (entrance boundary, never absorbed).
pub fn simulate_besq_lambda(
    params: BesselParams,
    lambda: f64,
    x0: f64,
    cfg: &SimConfig,
    stream: StreamId,
) -> Result<PathGrid, SdeError> {
    simulate_one(LevelDrift::besq(params, lambda)?, x0, cfg, stream, false)
}

/// Dual diffusion with drift `2 − δ − 2√(2λx) I_{ν+1}/I_ν(√(2λx))`, absorbed at 0.
pub fn simulate_dual(
    params: BesselParams,
    lambda: f64,
    x0: f64,
    cfg: &SimConfig,
    stream: StreamId,
) -> Result<PathGrid, SdeError> {
    simulate_one(LevelDrift::dual(params, lambda)?, x0, cfg, stream, true)
}

#[cfg(test)]
mod tests;
