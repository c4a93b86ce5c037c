//! Non-colliding BESQ particles as the singular SDE
//! `dz_i = 2√z_i dW_i + (δ + 4 z_i ∂_i log det[φ_{λ_k}(z_j)]) dt`.

use super::{normal, PathGrid, SdeError, SimConfig};
use crate::diffspec::BesselParams;
use crate::kernels::{ChamberPoint, DriftSpectrum};
use crate::linalg::Lu;
use crate::rng::StreamId;
use crate::specfun::{log_phi_unchecked, phi_log_deriv_unchecked};

/// Evaluates the interaction drift.
pub(crate) struct ConditionedDrift {
    nu: f64,
    delta: f64,
    lambdas: Vec<f64>,
    degenerate: bool,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl ConditionedDrift {
    pub(crate) fn new(params: BesselParams, mu: &DriftSpectrum) -> Self {
        let n = mu.len();
        Self {
            nu: params.nu(),
            delta: params.delta(),
            lambdas: mu.lambdas(),
            degenerate: mu.is_degenerate(),
            phi: vec![0.0; n * n],
            dphi: vec![0.0; n * n],
        }
    }

    /// Writes the drift at `z` into `out`; `None` if the determinant is singular.
    pub(crate) fn eval(&mut self, z: &[f64], out: &mut [f64]) -> Option<()> {
        let n = z.len();
        if self.degenerate {
            for i in 0..n {
                let s: f64 = (0..n).filter(|&j| j != i).map(|j| 1.0 / (z[i] - z[j])).sum();
                out[i] = self.delta + 4.0 * z[i].max(0.0) * s;
            }
            return out.iter().all(|v| v.is_finite()).then_some(());
        }
        for k in 0..n {
            let lam = self.lambdas[k];
            let row: Vec<f64> = z.iter().map(|&x| log_phi_unchecked(self.nu, lam, x.max(0.0))).collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for j in 0..n {
                let v = (row[j] - m).exp();
                self.phi[k * n + j] = v;
                self.dphi[k * n + j] = v * phi_log_deriv_unchecked(self.nu, lam, z[j].max(0.0));
            }
        }
        let lu = Lu::new(&self.phi, n).ok()?;
        for i in 0..n {
            let col: Vec<f64> = (0..n).map(|k| self.dphi[k * n + i]).collect();
            let g = lu.solve(&col)[i];
            out[i] = self.delta + 4.0 * z[i].max(0.0) * g;
        }
        out.iter().all(|v| v.is_finite()).then_some(())
    }
}

/// Step-size rule: every gap should exceed ten noise scales `√(2a(z)h)` with
/// `a(z) = 2z` evaluated at the upper particle.
fn gaps_ok(z: &[f64], h: f64) -> bool {
    z.windows(2).all(|w| w[1] - w[0] >= 10.0 * (4.0 * w[1].max(0.0) * h).sqrt())
}

struct Stepper<'a> {
    cfg: &'a SimConfig,
    drift: ConditionedDrift,
    rngs: Vec<rand_chacha::ChaCha8Rng>,
    b: Vec<f64>,
    halvings: u64,
}

impl Stepper<'_> {
    fn try_step(&mut self, z: &[f64], h: f64, dw: &[f64]) -> Option<Vec<f64>> {
        let mut b = std::mem::take(&mut self.b);
        let ok = self.drift.eval(z, &mut b);
        let out = ok.and_then(|_| {
            let y: Vec<f64> = z
                .iter()
                .zip(&b)
                .zip(dw)
                .map(|((&x, &bi), &w)| {
                    let xp = x.max(0.0);
                    (x + bi * h + 2.0 * xp.sqrt() * w).max(0.0)
                })
                .collect();
            y.windows(2).all(|w| w[1] - w[0] > self.cfg.boundary_guard).then_some(y)
        });
        self.b = b;
        out
    }

    /// Advances by `units` minimal steps of size `unit`, splitting with
    /// Brownian-bridge refinement when the proposed step breaks the ordering.
    fn advance(&mut self, z: &mut Vec<f64>, t: f64, unit: f64, units: u64, dw: &[f64]) -> Result<(), SdeError> {
        let h = unit * units as f64;
        if let Some(y) = self.try_step(z, h, dw) {
            *z = y;
            return Ok(());
        }
        if units == 1 {
            return Err(SdeError::DtUnderflow { time: t, state: z.clone() });
        }
        self.halvings += 1;
        let s = 0.5 * h.sqrt();
        let dw1: Vec<f64> = dw.iter().zip(self.rngs.iter_mut()).map(|(w, r)| 0.5 * w + s * normal(r)).collect();
        let dw2: Vec<f64> = dw.iter().zip(&dw1).map(|(w, a)| w - a).collect();
        let half = units / 2;
        self.advance(z, t, unit, half, &dw1)?;
        self.advance(z, t + unit * half as f64, unit, half, &dw2)
    }
}

/// Simulates the conditioned system from a strictly ordered start. Each base
/// step of `dt` is covered by dyadic sub-steps chosen so that gaps stay large
/// against the local noise; a sub-step that still breaks the ordering is split
/// by Brownian-bridge refinement down to `dt_min`.
pub fn simulate_conditioned(
    params: BesselParams,
    mu: &DriftSpectrum,
    x0: &ChamberPoint,
    cfg: &SimConfig,
    stream: StreamId,
) -> Result<PathGrid, SdeError> {
    cfg.validate()?;
    let n = x0.len();
    if mu.len() != n {
        return Err(SdeError::Init(format!("{} drift parameters for {n} particles", mu.len())));
    }
    let mut z = x0.coords().to_vec();
    cfg.check_gaps(&z)?;
    let mut st = Stepper {
        cfg,
        drift: ConditionedDrift::new(params, mu),
        rngs: (0..n as u64).map(|l| stream.rng(l)).collect(),
        b: vec![0.0; n],
        halvings: 0,
    };
    let total_units: u64 = 1 << cfg.max_halvings;
    let steps = cfg.steps();
    let mut g = PathGrid::new(stream, cfg.dt);
    g.times.push(0.0);
    g.states.push(z.clone());
    let mut t = 0.0;
    for k in 1..=steps {
        let hb = cfg.step_size(k - 1);
        let unit = hb / total_units as f64;
        let mut left = total_units;
        while left > 0 {
            let mut u = total_units;
            while u > 1 && !gaps_ok(&z, u as f64 * unit) {
                u /= 2;
            }
            if u == 1 && !gaps_ok(&z, unit) {
                g.capped_steps += 1;
            }
            while u > left {
                u /= 2;
            }
            let h = u as f64 * unit;
            let sh = h.sqrt();
            let dw: Vec<f64> = st.rngs.iter_mut().map(|r| sh * normal(r)).collect();
            st.advance(&mut z, t, unit, u, &dw)?;
            t += h;
            left -= u;
        }
        t = if k == steps { cfg.horizon } else { k as f64 * cfg.dt };
        if cfg.records(k, steps) {
            g.times.push(t);
            g.states.push(z.clone());
        }
    }
    g.halvings = st.halvings;
    Ok(g)
}
