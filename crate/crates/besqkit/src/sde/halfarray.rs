//! Interlacing half-arrays and their reflected dynamics.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{euler, normal, LevelDrift, PathGrid, Reflection, SdeError, SimConfig};
use crate::diffspec::BesselParams;
use crate::kernels::DriftSpectrum;
use crate::rng::StreamId;

/// Rows `x^{(1)}, …, x^{(2N−1)}`; row `k` (one-based) has `⌊(k+1)/2⌋` entries.
///
/// Consecutive rows interlace: on an even level `2n`,
/// `x^{(2n−1)}_i ≤ x^{(2n)}_i ≤ x^{(2n−1)}_{i+1}` (no upper bound for `i = n`); on an
/// odd level `2n+1`, `x^{(2n)}_{i−1} ≤ x^{(2n+1)}_i ≤ x^{(2n)}_i` (only `≥ 0` for
/// `i = 1`, no upper bound for `i = n+1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct HalfArray {
    rows: Vec<Vec<f64>>,
}

pub(crate) fn row_len(k: usize) -> usize {
    (k + 1) / 2
}

/// Interval allowed for coordinate `i` (zero-based) of level `k` (one-based) given
/// the row below.
pub(crate) fn bounds(k: usize, i: usize, below: &[f64]) -> (f64, f64) {
    if k % 2 == 0 {
        (below[i], below.get(i + 1).copied().unwrap_or(f64::INFINITY))
    } else {
        let lo = if i == 0 { 0.0 } else { below[i - 1] };
        (lo, below.get(i).copied().unwrap_or(f64::INFINITY))
    }
}

impl HalfArray {
    /// Checks row lengths, non-negativity and (weak) interlacing.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, SdeError> {
        if rows.is_empty() || rows.len() % 2 == 0 {
            return Err(SdeError::Init(format!("need an odd number of rows, got {}", rows.len())));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != row_len(r + 1) {
                return Err(SdeError::Init(format!("row {} has {} entries, expected {}", r + 1, row.len(), row_len(r + 1))));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(SdeError::Init(format!("row {} has negative or non-finite entries", r + 1)));
            }
        }
        let a = Self { rows };
        if !a.is_interlaced() {
            return Err(SdeError::Init("rows do not interlace".into()));
        }
        Ok(a)
    }

    /// Rebuilds an array from its row-major flattening.
    pub fn from_flat(levels: usize, flat: &[f64]) -> Result<Self, SdeError> {
        let mut rows = Vec::with_capacity(levels);
        let mut off = 0;
        for k in 1..=levels {
            let l = row_len(k);
            if off + l > flat.len() {
                return Err(SdeError::Init("flat state too short".into()));
            }
            rows.push(flat[off..off + l].to_vec());
            off += l;
        }
        if off != flat.len() {
            return Err(SdeError::Init("flat state too long".into()));
        }
        Self::new(rows)
    }

    pub fn levels(&self) -> usize {
        self.rows.len()
    }

    /// Size `N` of the top row.
    pub fn n(&self) -> usize {
        self.rows.last().map_or(0, |r| r.len())
    }

    /// Row `k` (one-based).
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k - 1]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn top(&self) -> &[f64] {
        self.rows.last().unwrap()
    }

    /// Rightmost coordinate of every level.
    pub fn edge(&self) -> Vec<f64> {
        self.rows.iter().map(|r| *r.last().unwrap()).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn is_interlaced(&self) -> bool {
        self.check(false)
    }

    /// Interlacing with strict inequalities everywhere (and strictly ordered rows).
    pub fn is_strictly_interlaced(&self) -> bool {
        self.check(true)
    }

    fn check(&self, strict: bool) -> bool {
        let le = |a: f64, b: f64| if strict { a < b } else { a <= b };
        for k in 2..=self.rows.len() {
            let below = &self.rows[k - 2];
            for (i, &x) in self.rows[k - 1].iter().enumerate() {
                let (lo, hi) = bounds(k, i, below);
                let lo_ok = if k % 2 == 1 && i == 0 { x >= 0.0 && (!strict || x > 0.0) } else { le(lo, x) };
                if !lo_ok || !(hi.is_infinite() || le(x, hi)) {
                    return false;
                }
            }
        }
        !strict || self.rows.iter().all(|r| r.windows(2).all(|w| w[0] < w[1]) && r[0] > 0.0)
    }
}

impl TryFrom<Vec<Vec<f64>>> for HalfArray {
    type Error = SdeError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, SdeError> {
        Self::new(rows)
    }
}

impl From<HalfArray> for Vec<Vec<f64>> {
    fn from(a: HalfArray) -> Self {
        a.rows
    }
}

/// Shared stepping machinery for reflected systems stored as flat vectors.
struct Reflected<'a> {
    cfg: &'a SimConfig,
    drifts: Vec<LevelDrift>,
    /// Level (one-based) of each flat coordinate.
    level: Vec<usize>,
    offset: Vec<usize>,
    edge: bool,
    rngs: Vec<ChaCha8Rng>,
    absorbed: Vec<bool>,
    halvings: u64,
    capped: u64,
}

/// Reflects `v` back and forth across the ends of `[lo, hi]` until it lies inside.
pub(crate) fn fold(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= lo && v <= hi {
        return v;
    }
    if hi == f64::INFINITY {
        return lo + (v - lo).abs();
    }
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    let r = (v - lo).rem_euclid(2.0 * w);
    lo + if r <= w { r } else { 2.0 * w - r }
}

enum StepOutcome {
    Ok,
    /// Two coordinates of a level met (squeezed onto the coordinate between them).
    Touch,
    /// The interval allowed by the level below was empty.
    Trap(usize),
}

impl Reflected<'_> {
    fn dim(&self) -> usize {
        self.level.len()
    }

    /// One step of size `h` with Brownian increments `dw`, bottom level first.
    fn try_step(&mut self, x: &[f64], h: f64, dw: &[f64], out: &mut [f64], push: &mut [f64]) -> StepOutcome {
        for j in 0..self.dim() {
            let k = self.level[j];
            let drift = &self.drifts[k - 1];
            if self.absorbed[j] {
                out[j] = 0.0;
                continue;
            }
            let prop = euler(drift, x[j], h, dw[j]);
            if !self.cfg.pushes {
                if drift.is_dual() && prop <= 0.0 {
                    out[j] = 0.0;
                } else {
                    out[j] = prop.max(0.0);
                }
                push[j] = 0.0;
                continue;
            }
            let (lo, hi) = if self.edge {
                (if j == 0 { 0.0 } else { out[j - 1] }, f64::INFINITY)
            } else if k == 1 {
                (0.0, f64::INFINITY)
            } else {
                let i = j - self.offset[k - 1];
                let below = &out[self.offset[k - 2]..self.offset[k - 1]];
                bounds(k, i, below)
            };
            if lo > hi {
                return StepOutcome::Trap(k);
            }
            let y = match self.cfg.reflection {
                Reflection::Projection => prop.max(lo.max(0.0)).min(hi),
                Reflection::Mirror => fold(prop, lo.max(0.0), hi),
            };
            push[j] = (y - prop).abs();
            out[j] = y;
        }
        if self.cfg.pushes && !self.edge {
            for k in 2..=self.drifts.len() {
                let row = &out[self.offset[k - 1]..self.offset[k - 1] + row_len(k)];
                if row.windows(2).any(|w| w[1] - w[0] <= self.cfg.boundary_guard) {
                    return StepOutcome::Touch;
                }
            }
        }
        StepOutcome::Ok
    }

    /// Advances `x` by `h`, splitting the step with Brownian-bridge refinement of
    /// `dw` when two coordinates of a level meet. A meeting that persists at the
    /// smallest step is accepted and counted; an empty interval there is an error.
    fn advance(
        &mut self,
        x: &mut Vec<f64>,
        pushes: &mut [f64],
        t: f64,
        h: f64,
        dw: &[f64],
        depth: u32,
    ) -> Result<(), SdeError> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        let mut push = vec![0.0; n];
        let outcome = self.try_step(x, h, dw, &mut out, &mut push);
        let at_floor = depth >= self.cfg.max_halvings;
        match outcome {
            StepOutcome::Trap(level) if at_floor => return Err(SdeError::CollisionTrap { time: t + h, level }),
            StepOutcome::Ok => {}
            StepOutcome::Touch if at_floor => self.capped += 1,
            StepOutcome::Touch | StepOutcome::Trap(_) => {
                self.halvings += 1;
                let half = 0.5 * h;
                let s = 0.5 * h.sqrt();
                let dw1: Vec<f64> =
                    (0..n).map(|j| 0.5 * dw[j] + s * normal(&mut self.rngs[j])).collect();
                let dw2: Vec<f64> = (0..n).map(|j| dw[j] - dw1[j]).collect();
                self.advance(x, pushes, t, half, &dw1, depth + 1)?;
                return self.advance(x, pushes, t + half, half, &dw2, depth + 1);
            }
        }
        for j in 0..n {
            pushes[j] += push[j];
            if !self.cfg.pushes && self.drifts[self.level[j] - 1].is_dual() && out[j] <= 0.0 {
                self.absorbed[j] = true;
            }
        }
        *x = out;
        Ok(())
    }

    fn run(&mut self, x0: Vec<f64>, stream: StreamId) -> Result<PathGrid, SdeError> {
        let cfg = self.cfg;
        let n = cfg.steps();
        let mut g = PathGrid::new(stream, cfg.dt);
        let mut x = x0;
        let mut pushes = vec![0.0; x.len()];
        g.times.push(0.0);
        g.states.push(x.clone());
        g.pushes.push(pushes.clone());
        let mut t = 0.0;
        for k in 1..=n {
            let h = cfg.step_size(k - 1);
            let sh = h.sqrt();
            let dw: Vec<f64> = self.rngs.iter_mut().map(|r| sh * normal(r)).collect();
            self.advance(&mut x, &mut pushes, t, h, &dw, 0)?;
            t = if k == n { cfg.horizon } else { k as f64 * cfg.dt };
            if cfg.records(k, n) {
                g.times.push(t);
                g.states.push(x.clone());
                g.pushes.push(pushes.clone());
            }
        }
        g.halvings = self.halvings;
        g.capped_steps = self.capped;
        Ok(g)
    }
}

fn check_mu(mu: &DriftSpectrum, n: usize) -> Result<(), SdeError> {
    if mu.len() != n {
        return Err(SdeError::Init(format!("{} drift parameters for {n} top coordinates", mu.len())));
    }
    Ok(())
}

/// Reflected dynamics on half-arrays. Rows are updated bottom to top; each
/// coordinate takes a free Euler step with its level drift and is then put back
/// into the interval set by the already-updated row below, by `cfg.reflection`.
/// States are flattened row-major; `pushes` holds the cumulative displacement
/// from putting coordinates back.
pub fn simulate_half_array(
    params: BesselParams,
    mu: &DriftSpectrum,
    init: &HalfArray,
    cfg: &SimConfig,
    stream: StreamId,
) -> Result<PathGrid, SdeError> {
    cfg.validate()?;
    check_mu(mu, init.n())?;
    if !init.is_strictly_interlaced() && init.levels() > 1 {
        return Err(SdeError::Init("initial array must interlace strictly".into()));
    }
    let levels = init.levels();
    let drifts = (1..=levels)
        .map(|k| LevelDrift::for_level(params, mu.mu(), k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut level = Vec::new();
    let mut offset = vec![0];
    for k in 1..=levels {
        level.extend(std::iter::repeat_n(k, row_len(k)));
        offset.push(offset[k - 1] + row_len(k));
    }
    let dim = level.len();
    let mut sim = Reflected {
        cfg,
        drifts,
        level,
        offset,
        edge: false,
        rngs: (0..dim as u64).map(|l| stream.rng(l)).collect(),
        absorbed: vec![false; dim],
        halvings: 0,
        capped: 0,
    };
    sim.run(init.flatten(), stream)
}

/// Edge particle system: coordinate `i` (level `i`) follows its level drift and is
/// pushed up off coordinate `i − 1` only.
pub fn simulate_edge(
    params: BesselParams,
    mu: &DriftSpectrum,
    x0: &[f64],
    cfg: &SimConfig,
    stream: StreamId,
) -> Result<PathGrid, SdeError> {
    cfg.validate()?;
    let levels = x0.len();
    if levels % 2 == 0 || levels == 0 {
        return Err(SdeError::Init(format!("need 2N-1 coordinates, got {levels}")));
    }
    check_mu(mu, levels.div_ceil(2))?;
    if x0.iter().any(|v| !(*v >= 0.0)) || x0.windows(2).any(|w| w[0] > w[1]) {
        return Err(SdeError::Init("edge start must be non-negative and weakly increasing".into()));
    }
    let drifts = (1..=levels)
        .map(|k| LevelDrift::for_level(params, mu.mu(), k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sim = Reflected {
        cfg,
        drifts,
        level: (1..=levels).collect(),
        offset: (0..=levels).collect(),
        edge: true,
        rngs: (0..levels as u64).map(|l| stream.rng(l)).collect(),
        absorbed: vec![false; levels],
        halvings: 0,
        capped: 0,
    };
    sim.run(x0.to_vec(), stream)
}
