//! Acceptance suite. Each criterion runs its checks at fixed tolerances and
//! sample sizes and reports one pass/fail line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use super::{cmd_simulate, with_jobs, Cell, Format, SimulateConfig, Table, Target, VERSION};
use crate::diffspec::{besq_spec, BesselParams};
use crate::gibbs::{gibbs_density, sample_gibbs, PsiBundle};
use crate::kernels::{
    besq_density, conditioned_density, entrance_density, laguerre_density, noncollision_prob, BiorthogonalEnsemble,
    ChamberPoint, DriftSpectrum,
};
use crate::linalg::CMatrix;
use crate::matproc::{bgw_check, drift_matrix, eval_matrix_process, hciz_rect_check, McCheck};
use crate::quad::{integrate, integrate_ordered_pairs, integrate_to_infinity, QuadOpts};
use crate::rng::{map_trials, StreamId, LANES};
use crate::sde::{
    estimate_noncollision, simulate_besq_lambda, simulate_conditioned, simulate_edge, simulate_half_array, SimConfig,
};
use crate::specfun::{bessel_ratio, besseli};
use crate::stats::{cdf_from_density, ks_one_sample, ks_two_sample, mean_se, CdfOpts, KsResult, TestRecord};

pub const DEFAULT_SEED: u64 = 20_241_017;

/// Significance level of every goodness-of-fit check.
pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Caps Monte Carlo sample sizes for quick runs; `None` runs the stated sizes.
    pub trial_cap: Option<usize>,
    /// Criterion numbers, names or tags to run; empty runs everything.
    pub only: Vec<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: DEFAULT_SEED, trial_cap: None, only: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub tags: Vec<String>,
    pub pass: bool,
    pub checks: Vec<TestRecord>,
    pub note: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub version: &'static str,
    pub seed: u64,
    pub trial_cap: Option<usize>,
    pub criteria: Vec<CriterionReport>,
    pub passed: usize,
    pub failed: usize,
}

impl VerifyReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["criterion", "check", "statistic", "p", "n", "tolerance", "pass"]);
        for c in &self.criteria {
            for k in &c.checks {
                t.push(vec![
                    Cell::Int(c.id as u64),
                    k.name.as_str().into(),
                    k.statistic.into(),
                    k.p.into(),
                    k.n.into(),
                    k.tolerance.into(),
                    Cell::Int(k.pass as u64),
                ]);
            }
        }
        t
    }
}

pub fn summary_line(r: &CriterionReport) -> String {
    let status = if r.pass { "PASS" } else { "FAIL" };
    let worst = r.checks.iter().find(|c| !c.pass).or(r.checks.first());
    let detail = worst.map_or(String::new(), |c| format!(" [{}: stat={:.3e} p={:.3e} tol={:.1e}]", c.name, c.statistic, c.p, c.tolerance));
    format!("{status} {:>2} {} ({:.1}s){detail}{}", r.id, r.name, r.seconds, if r.note.is_empty() { String::new() } else { format!(" {}", r.note) })
}

type RunFn = fn(&mut Ctx) -> Result<Outcome, String>;

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub tags: &'static [&'static str],
    run: RunFn,
}

#[derive(Default)]
struct Outcome {
    checks: Vec<TestRecord>,
    note: String,
}

impl Outcome {
    fn push(&mut self, r: TestRecord) {
        self.checks.push(r);
    }
    fn note(&mut self, s: impl AsRef<str>) {
        if !self.note.is_empty() {
            self.note.push_str("; ");
        }
        self.note.push_str(s.as_ref());
    }
}

pub fn criteria() -> Vec<Criterion> {
    let c = |id, name, tags, run| Criterion { id, name, tags, run };
    vec![
        c(1, "special functions", &["specfun", "quick"][..], specfun as RunFn),
        c(2, "kernel normalization", &["kernels", "quick"], normalization),
        c(3, "Chapman-Kolmogorov", &["kernels", "quick"], chapman_kolmogorov),
        c(4, "fixed-time symmetry", &["kernels", "quick"], symmetry),
        c(5, "small-drift limit", &["kernels", "quick"], degenerate_limit),
        c(6, "non-collision probability", &["sde", "noncollision", "slow"], noncollision),
        c(7, "matrix process eigenvalues", &["matproc", "slow"], matrix_process),
        c(8, "HCIZ and BGW integrals", &["matproc", "quick"], matrix_integrals),
        c(9, "half-array top row", &["sde", "gibbs", "slow"], top_row),
        c(10, "half-array Gibbs invariance", &["sde", "gibbs", "slow"], full_array),
        c(11, "edge top coordinate", &["sde", "edge", "slow"], edge),
        c(12, "large-time growth", &["sde", "quick"], watanabe),
        c(13, "intertwining integral identities", &["gibbs", "quick"], integral_identities),
        c(14, "Gibbs density reference point", &["gibbs", "quick"], reference_point),
        c(15, "simulate determinism", &["cli", "quick"], determinism),
    ]
}

pub fn select(opts: &VerifyOptions) -> Vec<Criterion> {
    criteria()
        .into_iter()
        .filter(|c| {
            opts.only.is_empty()
                || opts.only.iter().any(|s| {
                    s == &c.id.to_string() || s.eq_ignore_ascii_case(c.name) || c.tags.iter().any(|t| t.eq_ignore_ascii_case(s))
                })
        })
        .collect()
}

/// Runs the selected criteria in order, calling `progress` after each.
pub fn run_verify(opts: &VerifyOptions, mut progress: impl FnMut(&CriterionReport)) -> VerifyReport {
    let mut ctx = Ctx::new(opts.clone());
    let mut out = vec![];
    for c in select(opts) {
        let start = Instant::now();
        let (pass, checks, note) = match (c.run)(&mut ctx) {
            Ok(o) => (!o.checks.is_empty() && o.checks.iter().all(|k| k.pass), o.checks, o.note),
            Err(e) => (false, vec![], format!("error: {e}")),
        };
        let r = CriterionReport {
            id: c.id,
            name: c.name.to_string(),
            tags: c.tags.iter().map(|s| s.to_string()).collect(),
            pass,
            checks,
            note,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&r);
        out.push(r);
    }
    let passed = out.iter().filter(|r| r.pass).count();
    VerifyReport { version: VERSION, seed: opts.seed, trial_cap: opts.trial_cap, failed: out.len() - passed, passed, criteria: out }
}

fn tol(name: impl Into<String>, err: f64, tolerance: f64, n: usize) -> TestRecord {
    TestRecord { name: name.into(), statistic: err, p: f64::NAN, n: n as f64, tolerance, pass: err <= tolerance }
}

fn ks(name: impl Into<String>, r: KsResult) -> TestRecord {
    TestRecord { name: name.into(), statistic: r.statistic, p: r.p_value, n: r.n, tolerance: ALPHA, pass: r.p_value > ALPHA }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn bp(nu: f64) -> Result<BesselParams, String> {
    BesselParams::from_nu(nu).map_err(|e| e.to_string())
}

fn cp(v: &[f64]) -> Result<ChamberPoint, String> {
    ChamberPoint::new(v.to_vec()).map_err(|e| e.to_string())
}

fn ds(v: &[f64]) -> Result<DriftSpectrum, String> {
    DriftSpectrum::new(v.to_vec()).map_err(|e| e.to_string())
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Common setting of the path criteria: two particles, `μ = (1, 4)`, started (or
/// with top row) at `(1, 4)`, observed at time 1.
const PATH_NU: f64 = 1.0;
const PATH_MU: [f64; 2] = [1.0, 4.0];
const PATH_TOP: [f64; 2] = [1.0, 4.0];
const PATH_T: f64 = 1.0;
const PATH_DT: f64 = 1e-3;
const PATH_TRIALS: usize = 10_000;

struct Ctx {
    opts: VerifyOptions,
    /// Final states, and the number of paths where two coordinates of a level met.
    half: Option<Result<(Vec<Vec<f64>>, usize), String>>,
    conditioned: Option<Result<Vec<Vec<f64>>, String>>,
}

impl Ctx {
    fn new(opts: VerifyOptions) -> Self {
        Self { opts, half: None, conditioned: None }
    }

    fn trials(&self, n: usize) -> usize {
        self.opts.trial_cap.map_or(n, |c| c.min(n)).max(1)
    }

    /// Seed for one independent use within the suite.
    fn seed(&self, k: u64) -> u64 {
        self.opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
    }

    fn rng(&self, k: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(k))
    }

    fn path_cfg(&self) -> SimConfig {
        SimConfig::new(PATH_DT, PATH_T)
    }

    /// Final flattened states of Gibbs-initialized half-arrays.
    fn half_run(&mut self) -> Result<(Vec<Vec<f64>>, usize), String> {
        if self.half.is_none() {
            let r = (|| {
                let p = bp(PATH_NU)?;
                let mu = ds(&PATH_MU)?;
                let bundle = PsiBundle::besq(p, &mu, 1.0).map_err(s)?;
                let top = cp(&PATH_TOP)?;
                let cfg = self.path_cfg();
                let seed = self.seed(900);
                map_trials(self.trials(PATH_TRIALS), |k| {
                    let st = StreamId::new(seed, k);
                    let init = sample_gibbs(&bundle, &top, &mut st.rng(LANES - 1)).map_err(s)?;
                    let g = simulate_half_array(p, &mu, &init, &cfg, st).map_err(|e| format!("trial {k}: {e}"))?;
                    Ok((g.final_state().to_vec(), g.capped_steps > 0))
                })
                .into_iter()
                .collect::<Result<Vec<_>, String>>()
                .map(|v| {
                    let touched = v.iter().filter(|(_, t)| *t).count();
                    (v.into_iter().map(|(x, _)| x).collect(), touched)
                })
            })();
            self.half = Some(r);
        }
        self.half.clone().unwrap()
    }

    fn conditioned_run(&mut self) -> Result<Vec<Vec<f64>>, String> {
        if self.conditioned.is_none() {
            let r = (|| {
                let p = bp(PATH_NU)?;
                let mu = ds(&PATH_MU)?;
                let x0 = cp(&PATH_TOP)?;
                let cfg = self.path_cfg();
                let seed = self.seed(901);
                map_trials(self.trials(PATH_TRIALS), |k| {
                    let g = simulate_conditioned(p, &mu, &x0, &cfg, StreamId::new(seed, k))
                        .map_err(|e| format!("trial {k}: {e}"))?;
                    Ok(g.final_state().to_vec())
                })
                .into_iter()
                .collect()
            })();
            self.conditioned = Some(r);
        }
        self.conditioned.clone().unwrap()
    }
}

// ---------------------------------------------------------------- oracles

/// Double-double number, enough for a series oracle to ~30 digits.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }
    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        Dd::two_sum(s.0, s.1 + self.1 + o.1)
    }
    fn mul_f(self, b: f64) -> Dd {
        let p = self.0 * b;
        Dd::two_sum(p, self.0.mul_add(b, -p) + self.1 * b)
    }
    fn div_f(self, b: f64) -> Dd {
        let q = self.0 / b;
        let p = q * b;
        let r = self.add(Dd(-p, -q.mul_add(b, -p)));
        Dd::two_sum(q, r.0 / b)
    }
}

/// `I_ν(x) = (x/2)^ν / Γ(ν+1) Σ_m (x²/4)^m / (m! (ν+1)_m)` summed in double-double.
fn besseli_series(nu: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut t = Dd(1.0, 0.0);
    let mut sum = Dd(1.0, 0.0);
    for m in 1..120 {
        let m = m as f64;
        t = t.mul_f(q).div_f(m).div_f(m + nu);
        sum = sum.add(t);
        if t.0 < 1e-34 * sum.0 {
            break;
        }
    }
    (sum.0 + sum.1) * (0.5 * x).powf(nu) / statrs::function::gamma::gamma(nu + 1.0)
}

/// CDF of a density on `[0, ∞)` by adaptive quadrature.
fn quad_cdf(density: impl Fn(f64) -> f64 + Send + Sync + 'static, scale: f64) -> Result<(impl Fn(f64) -> f64, f64), String> {
    let c = cdf_from_density(density, 0.0, f64::INFINITY, CdfOpts { scale, resolution: 300, ..CdfOpts::default() })
        .map_err(s)?;
    let total = c.total();
    Ok((move |x| c.cdf(x), total))
}

type Pair = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Marginal densities of the two coordinates and of the gap of an ordered pair law.
fn pair_marginals(d: Pair) -> [Box<dyn Fn(f64) -> f64 + Send + Sync>; 3] {
    let o = QuadOpts::tol(1e-13, 1e-10);
    let (d1, d2, d3) = (d.clone(), d.clone(), d);
    [
        Box::new(move |a| integrate_to_infinity(|b| d1(a, b), a, 1.0, o).map_or(f64::NAN, |r| r.value)),
        Box::new(move |b| integrate(|a| d2(a, b), 0.0, b, o).map_or(f64::NAN, |r| r.value)),
        Box::new(move |g| integrate_to_infinity(|a| d3(a, a + g), 0.0, 1.0, o).map_or(f64::NAN, |r| r.value)),
    ]
}

fn column(v: &[Vec<f64>], j: usize) -> Vec<f64> {
    v.iter().map(|r| r[j]).collect()
}

fn gaps(v: &[Vec<f64>], i: usize, j: usize) -> Vec<f64> {
    v.iter().map(|r| r[j] - r[i]).collect()
}

fn random_chamber(rng: &mut ChaCha8Rng, n: usize, lo: f64, width: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| lo + width * rng.random::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[1] - w[0] > 1e-3) {
            return v;
        }
    }
}

// ---------------------------------------------------------------- criteria

fn specfun(_: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &nu in &[0.0, 0.5, 1.0, 2.5, 5.0] {
        for i in 1..=40 {
            let x = 0.75 * i as f64;
            worst = worst.max(rel(besseli(nu, x).map_err(s)?, besseli_series(nu, x)));
            count += 1;
        }
    }
    o.push(tol("besseli vs double-double series", worst, 1e-12, count));

    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &x in &[0.5, 1.0, 2.0, 3.7, 5.0, 10.0, 20.0, 27.0, 50.0, 300.0] {
        let k = (2.0 / (PI * x)).sqrt();
        worst = worst.max(rel(besseli(0.5, x).map_err(s)?, k * x.sinh()));
        if x >= 1.0 {
            worst = worst.max(rel(besseli(1.5, x).map_err(s)?, k * (x.cosh() - x.sinh() / x)));
            count += 1;
        }
        count += 1;
    }
    o.push(tol("half-integer closed forms", worst, 1e-12, count));

    // d/dx[√x R_ν(√x)] = ½[1 − I_{ν−1} I_{ν+1} / I_ν²](√x); I_{ν−1} evaluated
    // directly (I_{−1} = I_1, I_{−1/2} in closed form).
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &nu in &[0.0, 0.5, 1.0, 3.0] {
        for i in 0..20 {
            let x = 0.05 + 2.5 * i as f64;
            let g = |x: f64| bessel_ratio(nu, x.sqrt()).map(|r| x.sqrt() * r);
            let fd = (g(x + h).map_err(s)? - g(x - h).map_err(s)?) / (2.0 * h);
            let z = x.sqrt();
            let below = if nu == 0.5 {
                (2.0 / (PI * z)).sqrt() * z.cosh()
            } else {
                besseli((nu - 1.0).abs(), z).map_err(s)?
            };
            let i0 = besseli(nu, z).map_err(s)?;
            let want = 0.5 * (1.0 - below * besseli(nu + 1.0, z).map_err(s)? / (i0 * i0));
            worst = worst.max((fd - want).abs());
            count += 1;
        }
    }
    o.push(tol("ratio derivative identity by finite differences", worst, 1e-6, count));
    Ok(o)
}

fn normalization(_: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &nu in &[0.0, 0.5, 2.0] {
        for &x in &[0.0, 0.5, 3.0] {
            for &t in &[0.5, 2.0] {
                let p = bp(nu)?;
                let r = integrate_to_infinity(
                    |y| besq_density(p, t, x, y).unwrap_or(f64::NAN),
                    0.0,
                    1.0 + t,
                    QuadOpts::tol(1e-14, 1e-12),
                )
                .map_err(s)?;
                worst = worst.max((r.value - 1.0).abs());
                count += 1;
            }
        }
    }
    o.push(tol("one-particle density mass", worst, 1e-8, count));

    let q = QuadOpts::tol(1e-10, 1e-8);
    for (nu, mu, x, t) in [(0.5, [1.0, 4.0], [1.0, 4.0], 0.7), (1.0, [0.5, 2.0], [0.3, 2.0], 1.0)] {
        let (p, mu, x) = (bp(nu)?, ds(&mu)?, cp(&x)?);
        let r = integrate_ordered_pairs(|a, b| conditioned_density(p, &mu, t, &x, &cp(&[a, b]).unwrap()).unwrap_or(f64::NAN), 2.0, q)
            .map_err(s)?;
        o.push(tol(format!("conditioned N=2 mass, nu={nu}, mu={:?}", mu.mu()), (r.value - 1.0).abs(), 1e-4, 1));
    }
    for (nu, mu) in [(0.0, [1.0, 4.0]), (1.0, [0.0, 2.0]), (0.5, [0.0, 0.0])] {
        let (p, m) = (bp(nu)?, ds(&mu)?);
        let r = integrate_ordered_pairs(|a, b| entrance_density(p, &m, 1.0, &cp(&[a, b]).unwrap()).unwrap_or(f64::NAN), 2.0, q)
            .map_err(s)?;
        o.push(tol(format!("entrance N=2 mass, nu={nu}, mu={mu:?}"), (r.value - 1.0).abs(), 1e-4, 1));
    }
    Ok(o)
}

fn chapman_kolmogorov(_: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let mut worst: f64 = 0.0;
    for (nu, m, x, y) in [(0.5, 1.3, 1.0, 2.0), (0.0, 0.4, 2.5, 0.7), (2.0, 3.0, 0.2, 4.0)] {
        let (p, mu) = (bp(nu)?, ds(&[m])?);
        let d = |t: f64, a: f64, b: f64| conditioned_density(p, &mu, t, &cp(&[a])?, &cp(&[b])?).map_err(s);
        let r = integrate_to_infinity(
            |z| if z > 0.0 { d(0.4, x, z).unwrap_or(f64::NAN) * d(0.6, z, y).unwrap_or(f64::NAN) } else { 0.0 },
            0.0,
            1.0,
            QuadOpts::tol(1e-14, 1e-12),
        )
        .map_err(s)?;
        worst = worst.max(rel(r.value, d(1.0, x, y)?));
    }
    o.push(tol("N=1 semigroup", worst, 1e-7, 3));

    let q = QuadOpts::tol(1e-11, 1e-8);
    let (p, mu) = (bp(0.0)?, ds(&[0.5, 2.0])?);
    let (x, y) = (cp(&[0.8, 2.5])?, cp(&[1.5, 3.5])?);
    let r = integrate_ordered_pairs(
        |a, b| {
            let z = cp(&[a, b]).unwrap();
            conditioned_density(p, &mu, 0.3, &x, &z).unwrap_or(f64::NAN)
                * conditioned_density(p, &mu, 0.5, &z, &y).unwrap_or(f64::NAN)
        },
        1.0,
        q,
    )
    .map_err(s)?;
    let want = conditioned_density(p, &mu, 0.8, &x, &y).map_err(s)?;
    o.push(tol("N=2 semigroup", rel(r.value, want), 1e-4, 1));

    let mu = ds(&[1.0, 4.0])?;
    let mut worst: f64 = 0.0;
    for y in [[0.5, 1.5], [1.0, 3.0], [0.2, 4.0], [2.0, 5.0], [3.0, 7.0]] {
        let yp = cp(&y)?;
        let r = integrate_ordered_pairs(
            |a, b| {
                let z = cp(&[a, b]).unwrap();
                entrance_density(p, &mu, 0.5, &z).unwrap_or(f64::NAN)
                    * conditioned_density(p, &mu, 0.5, &z, &yp).unwrap_or(f64::NAN)
            },
            1.0,
            q,
        )
        .map_err(s)?;
        worst = worst.max(rel(r.value, entrance_density(p, &mu, 1.0, &yp).map_err(s)?));
    }
    o.push(tol("entrance law consistency", worst, 1e-4, 5));
    Ok(o)
}

fn symmetry(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let mut rng = ctx.rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let nu = [0.0, 0.5, 1.0, 2.0][rng.random_range(0..4)];
        let p = bp(nu)?;
        let (x, mu, y) = (random_chamber(&mut rng, n, 0.1, 5.0), random_chamber(&mut rng, n, 0.1, 5.0), random_chamber(&mut rng, n, 0.1, 5.0));
        let a = conditioned_density(p, &ds(&mu)?, 1.0, &cp(&x)?, &cp(&y)?).map_err(s)?;
        let b = conditioned_density(p, &ds(&x)?, 1.0, &cp(&mu)?, &cp(&y)?).map_err(s)?;
        worst = worst.max(rel(a, b));
    }
    o.push(tol("drift and start exchanged at t=1", worst, 1e-12, 20));
    Ok(o)
}

fn degenerate_limit(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let mut rng = ctx.rng(5);
    let eps = 1e-4;
    let mu = ds(&[eps, 2.0 * eps])?;
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let p = bp(if k % 2 == 0 { 0.0 } else { 1.0 })?;
        let x = cp(&random_chamber(&mut rng, 2, 0.05, 4.0))?;
        let y = cp(&random_chamber(&mut rng, 2, 0.05, 4.0))?;
        let a = conditioned_density(p, &mu, 1.0, &x, &y).map_err(s)?;
        let b = laguerre_density(p, 1.0, &x, &y).map_err(s)?;
        worst = worst.max(rel(a, b));
    }
    o.push(tol("mu = 1e-4 (1, 2) vs zero drift", worst, 1e-3, 10));
    Ok(o)
}

fn noncollision(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let lambdas = [0.25, 1.0];
    let x = cp(&[1.0, 6.0])?;
    for nu in [0.0, 1.0] {
        let p = bp(nu)?;
        let closed = noncollision_prob(&besq_spec(p, 1.0).map_err(s)?, &lambdas, &x).map_err(s)?;
        let mut cfg = SimConfig::new(1e-3, 50.0);
        cfg.trials = ctx.trials(100_000);
        cfg.seed = ctx.seed(600 + nu as u64);
        let e = estimate_noncollision(p, &lambdas, &x, &cfg).map_err(s)?;
        let bound = 3.0 * e.std_err + e.allowance;
        let mut r = tol(format!("nu={nu}: |estimate - closed form|"), (e.probability - closed).abs(), bound, e.trials);
        r.pass &= e.allowance <= 0.005;
        o.push(r);
        o.note(format!(
            "nu={nu}: estimate {:.5} closed {:.5} se {:.2e} allowance {:.2e} unresolved {:.1e}",
            e.probability, closed, e.std_err, e.allowance, e.unresolved
        ));
    }
    Ok(o)
}

fn matrix_process(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let (k, mu, t) = (3, [1.0, 4.0], 1.0);
    let m = drift_matrix(k, &mu).map_err(s)?;
    let seed = ctx.seed(700);
    let ev: Vec<Vec<f64>> = map_trials(ctx.trials(10_000), |i| eval_matrix_process(&m, t, &mut StreamId::new(seed, i).rng(0)))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(s)?;
    let p = bp((k - mu.len()) as f64)?;
    let spec = ds(&mu)?;
    let d: Pair = Arc::new(move |a, b| {
        if 0.0 < a && a < b {
            entrance_density(p, &spec, t, &ChamberPoint::new(vec![a, b]).unwrap()).unwrap_or(f64::NAN)
        } else {
            0.0
        }
    });
    let [m1, m2, _] = pair_marginals(d);
    for (j, m) in [m1, m2].into_iter().enumerate() {
        let (cdf, total) = quad_cdf(m, 2.0)?;
        o.push(ks(format!("eigenvalue {} vs entrance marginal", j + 1), ks_one_sample(&column(&ev, j), cdf).map_err(s)?));
        o.note(format!("marginal {} mass {total:.8}", j + 1));
    }
    Ok(o)
}

fn matrix_integrals(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let c = num_complex::Complex64::new;
    let cm = |r, k, v: &[num_complex::Complex64]| CMatrix { rows: r, cols: k, data: v.to_vec() };
    let n = ctx.trials(100_000);
    let push = |o: &mut Outcome, name: &str, r: McCheck| {
        o.push(tol(name, r.z_score().abs(), 3.0, n));
        o.note(format!("{name}: {:.6} vs {:.6} (se {:.1e})", r.mc_estimate, r.closed_form, r.std_err));
    };
    let a = cm(2, 1, &[c(0.5, 0.1), c(-0.2, 0.4)]);
    let cc = cm(2, 1, &[c(0.3, -0.6), c(0.8, 0.0)]);
    push(&mut o, "HCIZ K=2 N=1 |z|", hciz_rect_check(&a, &cc, n, &mut ctx.rng(800)).map_err(s)?);
    let b = cm(2, 2, &[c(0.8, 0.2), c(0.3, -0.1), c(-0.4, 0.5), c(1.1, 0.0)]);
    push(&mut o, "BGW K=2 |z|", bgw_check(&b, n, &mut ctx.rng(801)).map_err(s)?);
    Ok(o)
}

fn conditioned_pair_density(t: f64) -> Result<Pair, String> {
    let (p, mu, x) = (bp(PATH_NU)?, ds(&PATH_MU)?, cp(&PATH_TOP)?);
    Ok(Arc::new(move |a, b| {
        if 0.0 < a && a < b {
            conditioned_density(p, &mu, t, &x, &ChamberPoint::new(vec![a, b]).unwrap()).unwrap_or(f64::NAN)
        } else {
            0.0
        }
    }))
}

fn top_row(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let (half, touched) = ctx.half_run()?;
    let cond = ctx.conditioned_run()?;
    o.note(format!("{touched} of {} array paths had two coordinates of a level meet at the minimum step", half.len()));
    // Top row of the N=2 array is row 3, the last two flattened entries.
    let top: Vec<Vec<f64>> = half.iter().map(|v| v[v.len() - 2..].to_vec()).collect();
    let samples = [column(&top, 0), column(&top, 1), gaps(&top, 0, 1)];
    let reference = [column(&cond, 0), column(&cond, 1), gaps(&cond, 0, 1)];
    let names = ["lower", "upper", "gap"];
    for ((name, a), b) in names.iter().zip(&samples).zip(&reference) {
        o.push(ks(format!("{name} vs conditioned SDE"), ks_two_sample(a, b).map_err(s)?));
    }
    for ((name, a), m) in names.iter().zip(&samples).zip(pair_marginals(conditioned_pair_density(PATH_T)?)) {
        let (cdf, total) = quad_cdf(m, 2.0)?;
        o.push(ks(format!("{name} vs transition density marginal"), ks_one_sample(a, cdf).map_err(s)?));
        o.note(format!("{name} marginal mass {total:.8}"));
    }
    Ok(o)
}

fn full_array(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let (half, _) = ctx.half_run()?;
    let p = bp(PATH_NU)?;
    let mu = ds(&PATH_MU)?;
    let bundle = PsiBundle::besq(p, &mu, 1.0).map_err(s)?;
    let ens = BiorthogonalEnsemble::transition(p, &mu, PATH_T, &cp(&PATH_TOP)?).map_err(s)?;
    let seed = ctx.seed(1000);
    let exact: Vec<Vec<f64>> = map_trials(half.len(), |k| {
        let mut r = StreamId::new(seed, k).rng(0);
        let top = ChamberPoint::new(ens.sample(&mut r).map_err(s)?).map_err(s)?;
        Ok::<_, String>(sample_gibbs(&bundle, &top, &mut r).map_err(s)?.flatten())
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    for (j, name) in ["row 1", "row 2", "row 3 lower", "row 3 upper"].iter().enumerate() {
        o.push(ks(format!("{name} vs Gibbs law over exact tops"), ks_two_sample(&column(&half, j), &column(&exact, j)).map_err(s)?));
    }
    Ok(o)
}

fn edge(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let cond = ctx.conditioned_run()?;
    let p = bp(PATH_NU)?;
    let mu = ds(&PATH_MU)?;
    let bundle = PsiBundle::besq(p, &mu, 1.0).map_err(s)?;
    let top = cp(&PATH_TOP)?;
    let cfg = ctx.path_cfg();
    let seed = ctx.seed(1100);
    let tops: Vec<f64> = map_trials(ctx.trials(PATH_TRIALS), |k| {
        let st = StreamId::new(seed, k);
        let init = sample_gibbs(&bundle, &top, &mut st.rng(LANES - 1)).map_err(s)?;
        let g = simulate_edge(p, &mu, &init.edge(), &cfg, st).map_err(|e| format!("trial {k}: {e}"))?;
        Ok::<_, String>(*g.final_state().last().unwrap())
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    o.push(ks("edge top vs conditioned upper particle", ks_two_sample(&tops, &column(&cond, 1)).map_err(s)?));
    Ok(o)
}

fn watanabe(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let p = bp(0.0)?;
    let horizon = 200.0;
    let cfg = SimConfig::new(1e-2, horizon);
    for (i, lambda) in [0.25, 0.5].into_iter().enumerate() {
        let seed = ctx.seed(1200 + i as u64);
        let v: Vec<f64> = map_trials(ctx.trials(100), |k| {
            simulate_besq_lambda(p, lambda, 1.0, &cfg, StreamId::new(seed, k)).map(|g| g.final_state()[0] / (horizon * horizon))
        })
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(s)?;
        let (m, se) = mean_se(&v);
        o.push(tol(format!("lambda={lambda}: relative error of mean x(T)/T^2"), (m / (2.0 * lambda) - 1.0).abs(), 0.05, v.len()));
        o.note(format!("lambda={lambda}: {m:.4} (se {se:.4}) vs {}", 2.0 * lambda));
    }
    Ok(o)
}

fn integral_identities(_: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let (nu, c) = (0.5, 1.3);
    let b = PsiBundle::besq(bp(nu)?, &ds(&[0.5, 1.0, 3.0])?, c).map_err(s)?;
    let sp = b.spec().clone();
    let lam = b.lambdas().to_vec();
    let q = QuadOpts::tol(1e-14, 1e-12);
    let int1 = |f: &dyn Fn(f64) -> f64, a: f64, z: f64| integrate(f, a, z, q).map(|r| r.value).map_err(s);
    let int2 = |f: &dyn Fn(f64, f64) -> f64, c0: (f64, f64), c1: (f64, f64)| {
        int1(&|u| integrate(|v| f(u, v), c1.0, c1.1, q).map_or(f64::NAN, |r| r.value), c0.0, c0.1)
    };
    let log_psi_c = |n: usize| sp.log_psi(lam[n], c);

    // Λ_{2n,2n−1} Ψ^{(n)} = c_n Ψ̃^{(n)}: weight ψ_{n+1}(x)² m(x) / ψ_{n+1}(c)² per coordinate.
    let w1 = |n: usize, x: f64| (2.0 * (sp.log_psi(lam[n], x) - log_psi_c(n))).exp() * sp.speed(x);
    // Λ_{2n+1,2n} Ψ̃^{(n)} = Ψ̄^{(n+1)}: weight ψ_{n+1}(c)² ψ_{n+1}(x)^{−2} s'(x)/a(c).
    let w2 = |n: usize, x: f64| (2.0 * (log_psi_c(n) - sp.log_psi(lam[n], x))).exp() * sp.scale(x) / sp.a(c);
    let psi = |x: &[f64]| b.log_psi_n(x).map_or(f64::NAN, f64::exp);
    let psi_t = |x: &[f64]| b.log_psi_tilde(x).map_or(f64::NAN, f64::exp);

    let mut worst: f64 = 0.0;
    for y in [1.7, 4.0] {
        let lhs = int1(&|x| w1(1, x) * psi(&[x]), 0.0, y)?;
        worst = worst.max(rel(lhs, (b.log_c(1).map_err(s)? + b.log_psi_tilde(&[y]).map_err(s)?).exp()));
    }
    for y in [[0.8, 2.6], [1.5, 5.0]] {
        let lhs = int2(&|u, v| w1(2, u) * w1(2, v) * psi(&[u, v]), (0.0, y[0]), (y[0], y[1]))?;
        worst = worst.max(rel(lhs, (b.log_c(2).map_err(s)? + b.log_psi_tilde(&y).map_err(s)?).exp()));
    }
    o.push(tol("first intertwining identity, n = 1, 2", worst, 1e-6, 4));

    let mut worst: f64 = 0.0;
    for y in [[0.9, 3.1], [0.2, 6.0]] {
        let lhs = int1(&|x| w2(1, x) * psi_t(&[x]), y[0], y[1])?;
        worst = worst.max(rel(lhs, b.log_psi_bar(&y).map_err(s)?.exp()));
    }
    for y in [[0.4, 1.9, 4.2], [1.0, 2.0, 3.5]] {
        let lhs = int2(&|u, v| w2(2, u) * w2(2, v) * psi_t(&[u, v]), (y[0], y[1]), (y[1], y[2]))?;
        worst = worst.max(rel(lhs, b.log_psi_bar(&y).map_err(s)?.exp()));
    }
    o.push(tol("second intertwining identity, n = 1, 2", worst, 1e-6, 4));

    // ∫_0^y ψ_i ψ_{n+1} m / ψ_{n+1}(c)² = D r_i(y) / ((λ_i − λ_{n+1}) a(c)), with
    // D r_i the dual derivative of r_i = ψ_i / ψ_{n+1}.
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let y = 0.2 + 0.5 * k as f64;
        let (i, n) = [(0, 1), (1, 2), (0, 2)][k % 3];
        let lc = log_psi_c(n);
        let lhs = int1(&|x| (sp.log_psi(lam[i], x) + sp.log_psi(lam[n], x) - 2.0 * lc).exp() * sp.speed(x), 0.0, y)?;
        let rhs = b.psi_tilde_entry(i, n, y).map_err(s)? / ((lam[i] - lam[n]) * sp.a(c));
        worst = worst.max(rel(lhs, rhs));
    }
    o.push(tol("dual derivative integral relation", worst, 1e-8, 20));
    Ok(o)
}

fn reference_point(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let p = bp(1.0)?;
    let mu = ds(&[0.5, 1.0, 3.0])?;
    let b1 = PsiBundle::besq(p, &mu, 1.0).map_err(s)?;
    let b2 = PsiBundle::besq(p, &mu, 2.0).map_err(s)?;
    let mut rng = ctx.rng(14);
    let log_top = |x: &[f64]| -x.iter().sum::<f64>();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let top = cp(&random_chamber(&mut rng, 3, 0.05, 10.0))?;
        let a = sample_gibbs(&b1, &top, &mut rng).map_err(s)?;
        let x = gibbs_density(&b1, &a, &log_top).map_err(s)?;
        let y = gibbs_density(&b2, &a, &log_top).map_err(s)?;
        worst = worst.max(rel(x, y));
    }
    o.push(tol("ref_point 1 vs 2 on random arrays", worst, 1e-10, 100));
    Ok(o)
}

fn determinism(ctx: &mut Ctx) -> Result<Outcome, String> {
    let mut o = Outcome::default();
    let base = SimulateConfig { trials: 24, horizon: 0.2, record_every: 50, seed: ctx.seed(1500), ..SimulateConfig::default() };
    for target in [Target::ConditionedSde, Target::HalfArray, Target::Edge, Target::Matrix] {
        for format in [Format::Csv, Format::Json] {
            let render = |jobs, cfg: &SimulateConfig| {
                with_jobs(Some(jobs), || cmd_simulate(target, cfg).map(|r| r.render(format)))
                    .and_then(|r| r)
                    .map_err(s)
            };
            let a = render(1, &base)?;
            let b = render(1, &base)?;
            let c = render(4, &base)?;
            let d = render(1, &SimulateConfig { seed: base.seed + 1, ..base.clone() })?;
            let name = format!("{target:?} {format:?}");
            o.push(tol(format!("{name}: repeat differs"), (a != b) as u8 as f64, 0.0, 2));
            o.push(tol(format!("{name}: 1 vs 4 workers differ"), (a != c) as u8 as f64, 0.0, 2));
            o.push(tol(format!("{name}: new seed gives same output"), (a == d) as u8 as f64, 0.0, 2));
        }
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_by_number_name_and_tag() {
        let ids = |only: &[&str]| {
            select(&VerifyOptions { only: only.iter().map(|s| s.to_string()).collect(), ..Default::default() })
                .iter()
                .map(|c| c.id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(&[]).len(), 15);
        assert_eq!(ids(&["6"]), vec![6]);
        assert_eq!(ids(&["gibbs"]), vec![9, 10, 13, 14]);
        assert_eq!(ids(&["matproc", "1"]), vec![1, 7, 8]);
        assert!(ids(&["nothing"]).is_empty());
    }

    #[test]
    fn series_oracle_sanity() {
        assert!((besseli_series(0.0, 1.0) - 1.2660658777520082).abs() < 1e-15);
        assert!((besseli_series(1.0, 2.0) - 1.5906368546373291).abs() < 1e-15);
    }

    #[test]
    fn quick_criteria_pass() {
        let opts = VerifyOptions { only: vec!["1".into(), "4".into(), "5".into(), "14".into(), "15".into()], ..Default::default() };
        let r = run_verify(&opts, |_| {});
        for c in &r.criteria {
            assert!(c.pass, "{}", summary_line(c));
        }
        assert_eq!(r.passed, 5);
        let j = super::super::to_json(&r);
        assert!(j.contains("\"criteria\""));
    }

    #[test]
    fn capped_run_reports_failure_reason() {
        let opts = VerifyOptions { only: vec!["12".into()], trial_cap: Some(3), ..Default::default() };
        let r = run_verify(&opts, |_| {});
        assert_eq!(r.criteria.len(), 1);
        assert_eq!(r.criteria[0].checks.len(), 2);
        assert_eq!(r.criteria[0].checks[0].n, 3.0);
    }
}
