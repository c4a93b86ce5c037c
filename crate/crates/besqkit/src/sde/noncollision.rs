//! Monte Carlo estimate of the probability that independent drifted BESQ
//! particles never collide.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{euler, normal, LevelDrift, SdeError, SimConfig};
use crate::diffspec::BesselParams;
use crate::kernels::ChamberPoint;
use crate::rng::{map_trials, StreamId};
use crate::stats::wilson_interval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonCollisionOpts {
    /// Stop a path once the estimated chance of any later collision drops below this.
    pub tail_stop: f64,
    /// Test for crossings inside each step with the Brownian-bridge probability.
    pub bridge: bool,
}

impl Default for NonCollisionOpts {
    fn default() -> Self {
        Self { tail_stop: 1e-4, bridge: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCollisionEstimate {
    pub probability: f64,
    pub std_err: f64,
    /// 95% Wilson interval.
    pub wilson: (f64, f64),
    /// Mean residual collision chance of surviving paths when they stopped; an
    /// estimate of the bias from stopping early.
    pub allowance: f64,
    /// Fraction of trials that reached the horizon with the tail estimate still
    /// above `tail_stop`.
    pub unresolved: f64,
    pub trials: usize,
    pub survivors: usize,
    pub mean_stop_time: f64,
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Collided,
    Survived { tail: f64, time: f64, unresolved: bool },
}

/// Drift of `r = √x` for BESQ_λ, split as `(2ν+1)/(2r)` and `√(2λ) R_ν(√(2λ) r)`.
fn root_drift_parts(d: &LevelDrift, x: f64) -> (f64, f64) {
    match d {
        LevelDrift::Besq { nu, lambda, table } => {
            let r = x.max(0.0).sqrt();
            let k = (2.0 * lambda).sqrt();
            ((2.0 * nu + 1.0) / (2.0 * r.max(1e-300)), k * table.eval(k * r))
        }
        LevelDrift::Dual { .. } => unreachable!("non-collision paths are BESQ_λ"),
    }
}

/// Rough chance that the pair `(x₁ < x₂)` ever meets. In `r = √x` coordinates the
/// gap has noise of variance rate 2 and drift
/// `√(2λ₂)R(z₂) + (2ν+1)/(2r₂) − √(2λ₁)R(z₁) − (2ν+1)/(2r₁)`; the drift is bounded
/// below by replacing `R(z₁)` with its supremum 1 and dropping the upper push,
/// and the hitting chance of the resulting drifted Brownian motion is `e^{−m G}`.
fn pair_tail(d1: &LevelDrift, d2: &LevelDrift, x1: f64, x2: f64) -> f64 {
    let (push1, _) = root_drift_parts(d1, x1);
    let (_, pull2) = root_drift_parts(d2, x2);
    let k1 = match d1 {
        LevelDrift::Besq { lambda, .. } => (2.0 * lambda).sqrt(),
        LevelDrift::Dual { .. } => unreachable!(),
    };
    let m = pull2 - k1 - push1;
    let g = x2.max(0.0).sqrt() - x1.max(0.0).sqrt();
    if m <= 0.0 || g <= 0.0 {
        1.0
    } else {
        (-m * g).exp()
    }
}

fn tail_bound(drifts: &[LevelDrift], x: &[f64]) -> f64 {
    let s: f64 = x
        .windows(2)
        .zip(drifts.windows(2))
        .map(|(w, d)| pair_tail(&d[0], &d[1], w[0], w[1]))
        .sum();
    s.min(1.0)
}

fn run_path(
    drifts: &[LevelDrift],
    x0: &[f64],
    cfg: &SimConfig,
    opts: &NonCollisionOpts,
    stream: StreamId,
) -> Outcome {
    let n = x0.len();
    let mut rngs: Vec<_> = (0..n as u64).map(|l| stream.rng(l)).collect();
    let mut bridge = stream.rng(n as u64);
    let mut x = x0.to_vec();
    let mut y = vec![0.0; n];
    let steps = cfg.steps();
    for k in 1..=steps {
        let h = cfg.step_size(k - 1);
        let sh = h.sqrt();
        for i in 0..n {
            y[i] = euler(&drifts[i], x[i], h, sh * normal(&mut rngs[i])).max(0.0);
        }
        for i in 0..n.saturating_sub(1) {
            let g1 = y[i + 1] - y[i];
            if g1 <= cfg.boundary_guard {
                return Outcome::Collided;
            }
            if opts.bridge {
                let g0 = x[i + 1] - x[i];
                let var = 4.0 * (x[i] + x[i + 1]).max(0.0);
                if var > 0.0 {
                    let p = (-2.0 * g0 * g1 / (var * h)).exp();
                    if bridge.random::<f64>() < p {
                        return Outcome::Collided;
                    }
                }
            }
        }
        std::mem::swap(&mut x, &mut y);
        if k % 16 == 0 || k == steps {
            let tb = tail_bound(drifts, &x);
            let time = if k == steps { cfg.horizon } else { k as f64 * cfg.dt };
            if tb < opts.tail_stop {
                return Outcome::Survived { tail: tb, time, unresolved: false };
            }
            if k == steps {
                return Outcome::Survived { tail: tb, time, unresolved: true };
            }
        }
    }
    unreachable!("loop always returns on the last step")
}

/// Estimates `P(no collision)` for independent BESQ_{λ_i} particles started at
/// `x0`, using `cfg.trials` paths. A path counts as surviving once the gap tail
/// bound falls below `tail_stop` or the horizon is reached.
pub fn estimate_noncollision(
    params: BesselParams,
    lambdas: &[f64],
    x0: &ChamberPoint,
    cfg: &SimConfig,
) -> Result<NonCollisionEstimate, SdeError> {
    estimate_noncollision_with(params, lambdas, x0, cfg, &NonCollisionOpts::default())
}

pub fn estimate_noncollision_with(
    params: BesselParams,
    lambdas: &[f64],
    x0: &ChamberPoint,
    cfg: &SimConfig,
    opts: &NonCollisionOpts,
) -> Result<NonCollisionEstimate, SdeError> {
    cfg.validate()?;
    if lambdas.len() != x0.len() {
        return Err(SdeError::Init(format!("{} lambdas for {} particles", lambdas.len(), x0.len())));
    }
    if cfg.trials == 0 {
        return Err(SdeError::Config("need at least one trial".into()));
    }
    cfg.check_gaps(x0.coords())?;
    let drifts = lambdas.iter().map(|&l| LevelDrift::besq(params, l)).collect::<Result<Vec<_>, _>>()?;
    let outcomes = map_trials(cfg.trials, |trial| {
        run_path(&drifts, x0.coords(), cfg, opts, StreamId::new(cfg.seed, trial))
    });
    let n = outcomes.len();
    let mut survivors = 0;
    let mut tail_sum = 0.0;
    let mut unresolved = 0;
    let mut time_sum = 0.0;
    for o in &outcomes {
        if let Outcome::Survived { tail, time, unresolved: u } = *o {
            survivors += 1;
            tail_sum += tail;
            time_sum += time;
            unresolved += u as usize;
        }
    }
    let p = survivors as f64 / n as f64;
    let (lo, hi) = wilson_interval(survivors as u64, n as u64, 1.959963984540054);
    Ok(NonCollisionEstimate {
        probability: p,
        std_err: (p * (1.0 - p) / n as f64).sqrt(),
        wilson: (lo, hi),
        allowance: tail_sum / n as f64,
        unresolved: unresolved as f64 / n as f64,
        trials: n,
        survivors,
        mean_stop_time: if survivors > 0 { time_sum / survivors as f64 } else { 0.0 },
    })
}
