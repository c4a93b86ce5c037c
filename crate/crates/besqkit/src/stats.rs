//! Goodness-of-fit tests, interval estimates and CDFs tabulated from densities.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::quad::{gk15, integrate_panels, QuadError, QuadOpts};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("invalid weights")]
    BadWeights,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Values with optional non-negative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl EmpiricalSample {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Self { values, weights: None })
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self, StatsError> {
        let mut s = Self::new(values)?;
        let ok = weights.len() == s.values.len()
            && weights.iter().all(|w| w.is_finite() && *w >= 0.0)
            && weights.iter().sum::<f64>() > 0.0;
        if !ok {
            return Err(StatsError::BadWeights);
        }
        s.weights = Some(weights);
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weighted mean and its standard error (Kish effective sample size).
    pub fn mean_se(&self) -> (f64, f64) {
        match &self.weights {
            None => mean_se(&self.values),
            Some(w) => {
                let sw: f64 = w.iter().sum();
                let sw2: f64 = w.iter().map(|x| x * x).sum();
                let m = self.values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / sw;
                let var = self.values.iter().zip(w).map(|(v, w)| w * (v - m).powi(2)).sum::<f64>() / sw;
                let n_eff = sw * sw / sw2;
                let se = if n_eff > 1.0 { (var * n_eff / (n_eff - 1.0) / n_eff).sqrt() } else { f64::NAN };
                (m, se)
            }
        }
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size used for the p-value.
    pub n: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form converges fast for small λ.
        let pi2 = std::f64::consts::PI.powi(2);
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += (-(j * j) * pi2 / (8.0 * lambda * lambda)).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

fn sorted_finite(x: &[f64]) -> Result<Vec<f64>, StatsError> {
    if x.is_empty() {
        return Err(StatsError::Empty);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample Kolmogorov–Smirnov test. The p-value uses the asymptotic
/// Kolmogorov law with Stephens' finite-n correction; it is accurate for n ≥ 100.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult, StatsError> {
    let v = sorted_finite(sample)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        if !f.is_finite() {
            return Err(StatsError::NonFinite);
        }
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n), n })
}

/// Two-sample Kolmogorov–Smirnov test (asymptotic p-value, effective size `nm/(n+m)`).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n_eff), n: n_eff })
}

/// Pearson χ² test of binned counts against expected counts; `dof = bins − 1 − fitted`.
pub fn chi_square_binned(observed: &[u64], expected: &[f64], fitted: usize) -> Result<(f64, f64), StatsError> {
    if observed.is_empty() || observed.len() != expected.len() {
        return Err(StatsError::Invalid("observed and expected must have equal, non-zero length".into()));
    }
    if expected.iter().any(|e| !(*e > 0.0)) {
        return Err(StatsError::Invalid("expected counts must be positive".into()));
    }
    let dof = observed.len() as i64 - 1 - fitted as i64;
    if dof < 1 {
        return Err(StatsError::Invalid("no degrees of freedom left".into()));
    }
    let stat: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let chi = ChiSquared::new(dof as f64).map_err(|e| StatsError::Invalid(e.to_string()))?;
    Ok((stat, chi.sf(stat)))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// One line of a test report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub name: String,
    pub statistic: f64,
    pub p: f64,
    pub n: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Options for [`cdf_from_density`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfOpts {
    pub quad: QuadOpts,
    /// Initial panel width for semi-infinite supports.
    pub scale: f64,
    /// If non-zero, panels are split so none is wider than `1/resolution` of the
    /// bulk of the distribution; this makes the Hermite-interpolated [`DensityCdf::cdf`]
    /// accurate to roughly `1e-7` at a resolution of a few hundred.
    pub resolution: usize,
}

impl Default for CdfOpts {
    fn default() -> Self {
        Self { quad: QuadOpts::tol(1e-14, 1e-11), scale: 1.0, resolution: 0 }
    }
}

/// CDF tabulated from a non-negative density by adaptive quadrature. The total
/// mass is kept (not renormalized away) so callers can check it.
pub struct DensityCdf<F> {
    density: F,
    edges: Vec<f64>,
    cum: Vec<f64>,
    dens: Vec<f64>,
    total: f64,
}

impl<F> std::fmt::Debug for DensityCdf<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityCdf").field("panels", &(self.edges.len() - 1)).field("total", &self.total).finish()
    }
}

/// Builds a [`DensityCdf`] on `[lo, hi]`; `hi = ∞` marches panels of doubling width
/// until two consecutive chunks carry less than `1e-14` of the mass.
pub fn cdf_from_density<F: Fn(f64) -> f64>(
    density: F,
    lo: f64,
    hi: f64,
    opts: CdfOpts,
) -> Result<DensityCdf<F>, StatsError> {
    if !(hi > lo) || !lo.is_finite() {
        return Err(StatsError::Invalid(format!("bad support [{lo}, {hi}]")));
    }
    let mut f = |x: f64| density(x);
    let mut panels: Vec<(f64, f64, f64)> = Vec::new();
    if hi.is_finite() {
        panels = integrate_panels(&mut f, lo, hi, opts.quad)?.1;
    } else {
        let mut a = lo;
        let mut w = opts.scale;
        let mut total = 0.0;
        let mut quiet = 0;
        for _ in 0..200 {
            let (r, p) = integrate_panels(&mut f, a, a + w, opts.quad)?;
            total += r.value;
            panels.extend(p);
            if r.value.abs() <= 1e-14 * total.abs() || r.value.abs() <= opts.quad.abs_tol * 1e-3 {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
            a += w;
            w *= 2.0;
        }
        if quiet < 2 {
            return Err(QuadError::NoConvergence { value: total, error: f64::NAN }.into());
        }
    }
    if opts.resolution > 0 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let mut acc = 0.0;
        let mut bulk_hi = panels.last().map_or(hi, |p| p.1);
        for p in &panels {
            acc += p.2;
            if acc >= (1.0 - 1e-9) * total {
                bulk_hi = p.1;
                break;
            }
        }
        let max_w = (bulk_hi - lo) / opts.resolution as f64;
        let mut refined = Vec::with_capacity(panels.len() + opts.resolution);
        for (a, b, v) in panels {
            let k = ((b - a) / max_w).ceil().max(1.0) as usize;
            if k == 1 || a >= bulk_hi {
                refined.push((a, b, v));
                continue;
            }
            let h = (b - a) / k as f64;
            for i in 0..k {
                let (pa, pb) = (a + h * i as f64, if i + 1 == k { b } else { a + h * (i + 1) as f64 });
                refined.push((pa, pb, gk15(&mut f, pa, pb)?.0));
            }
        }
        panels = refined;
    }
    let mut edges = Vec::with_capacity(panels.len() + 1);
    let mut cum = Vec::with_capacity(panels.len() + 1);
    edges.push(panels[0].0);
    cum.push(0.0);
    for p in &panels {
        edges.push(p.1);
        cum.push(cum.last().unwrap() + p.2.max(0.0));
    }
    let dens: Vec<f64> = edges.iter().map(|&x| density(x).max(0.0)).collect();
    if dens.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(StatsError::Invalid("density has no mass on the support".into()));
    }
    Ok(DensityCdf { density, edges, cum, dens, total })
}

impl<F: Fn(f64) -> f64> DensityCdf<F> {
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn support(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }

    fn panel(&self, x: f64) -> usize {
        let k = self.edges.partition_point(|&e| e <= x);
        k.saturating_sub(1).min(self.edges.len() - 2)
    }

    /// Normalized CDF by cubic Hermite interpolation of the tabulated values
    /// (density values as slopes); no density evaluations.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= *self.edges.last().unwrap() {
            return 1.0;
        }
        let k = self.panel(x);
        let (a, b) = (self.edges[k], self.edges[k + 1]);
        let (c0, c1) = (self.cum[k], self.cum[k + 1]);
        let h = b - a;
        let s = (x - a) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let v = c0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + h * self.dens[k] * (s3 - 2.0 * s2 + s)
            + c1 * (-2.0 * s3 + 3.0 * s2)
            + h * self.dens[k + 1] * (s3 - s2);
        v.clamp(c0, c1) / self.total
    }

    /// Normalized CDF with the partial panel integrated by Gauss–Kronrod.
    pub fn cdf_exact(&self, x: f64) -> f64 {
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= *self.edges.last().unwrap() {
            return 1.0;
        }
        let k = self.panel(x);
        self.partial(k, x) / self.total
    }

    fn partial(&self, k: usize, x: f64) -> f64 {
        let a = self.edges[k];
        let mut f = |y: f64| (self.density)(y);
        let v = gk15(&mut f, a, x).map(|r| r.0).unwrap_or(f64::NAN);
        (self.cum[k] + v).clamp(self.cum[k], self.cum[k + 1])
    }

    /// Quantile for `u ∈ [0, 1]`: panel search, then safeguarded Newton on the
    /// Gauss–Kronrod partial integral, to relative bracket width `1e-12`.
    pub fn quantile(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.total;
        let k = self.cum.partition_point(|&c| c < target).clamp(1, self.edges.len() - 1) - 1;
        let (mut lo, mut hi) = (self.edges[k], self.edges[k + 1]);
        let mut x = if self.cum[k + 1] > self.cum[k] {
            lo + (hi - lo) * (target - self.cum[k]) / (self.cum[k + 1] - self.cum[k])
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..200 {
            let fx = self.partial(k, x) - target;
            if fx.abs() <= 1e-15 * self.total {
                return x;
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
                break;
            }
            let d = (self.density)(x);
            let newton = x - fx / d;
            x = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_cdf(x: f64) -> f64 {
        if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() }
    }

    #[test]
    fn kolmogorov_known_values() {
        // Standard tabulated critical values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(1.2238) - 0.10).abs() < 1e-4);
        // Both branches agree where they meet.
        let a = kolmogorov_sf(1.18 - 1e-12);
        let b = kolmogorov_sf(1.18);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ks_one_sample_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rejections = 0;
        for _ in 0..200 {
            let s: Vec<f64> = (0..200).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            if ks_one_sample(&s, exp_cdf).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let frac = rejections as f64 / 200.0;
        assert!((0.01..=0.10).contains(&frac), "{frac}");
    }

    #[test]
    fn ks_constant_sample() {
        let s = vec![0.0; 50];
        let r = ks_one_sample(&s, |x| 0.5 * (1.0 + (x / 2f64.sqrt()).tanh())).unwrap();
        assert!(r.statistic >= 0.5);
    }

    #[test]
    fn ks_monotone_transform_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 3.0).collect();
        let r1 = ks_one_sample(&s, exp_cdf).unwrap();
        let t: Vec<f64> = s.iter().map(|x| x.powi(3) + 2.0).collect();
        let r2 = ks_one_sample(&t, |y| exp_cdf((y - 2.0).cbrt())).unwrap();
        assert!((r1.statistic - r2.statistic).abs() < 1e-12);
    }

    #[test]
    fn ks_two_sample_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);

        let mut rejections = 0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
            if ks_two_sample(&a, &b).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let frac = rejections as f64 / 200.0;
        assert!((0.01..=0.10).contains(&frac), "{frac}");

        // Shift of 0.1 sd at n = 10^4.
        let sd = (1.0f64 / 12.0).sqrt();
        let mut power = 0;
        for _ in 0..20 {
            let a: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() + 0.1 * sd).collect();
            if ks_two_sample(&a, &b).unwrap().p_value < 0.01 {
                power += 1;
            }
        }
        assert!(power as f64 / 20.0 > 0.9);
    }

    #[test]
    fn wilson_edges_and_coverage() {
        assert_eq!(wilson_interval(0, 40, 1.96).0, 0.0);
        assert_eq!(wilson_interval(40, 40, 1.96).1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut covered = 0;
        let reps = 4000;
        for _ in 0..reps {
            let k = (0..100).filter(|_| rng.random::<f64>() < 0.3).count() as u64;
            let (lo, hi) = wilson_interval(k, 100, 1.96);
            if lo <= 0.3 && 0.3 <= hi {
                covered += 1;
            }
        }
        let c = covered as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&c), "{c}");
    }

    #[test]
    fn chi_square_matches_uniform() {
        let (s, p) = chi_square_binned(&[25, 25, 25, 25], &[25.0; 4], 0).unwrap();
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, p) = chi_square_binned(&[50, 0, 25, 25], &[25.0; 4], 0).unwrap();
        assert!(p < 1e-6);
    }

    #[test]
    fn uniform_density_linear_cdf() {
        let c = cdf_from_density(|_| 0.5, 0.0, 2.0, CdfOpts { resolution: 64, ..CdfOpts::default() }).unwrap();
        assert!((c.total() - 1.0).abs() < 1e-14);
        for &x in &[0.1, 0.7, 1.3, 1.99] {
            assert!((c.cdf(x) - 0.5 * x).abs() < 1e-13);
            assert!((c.quantile(0.5 * x) - x).abs() < 1e-11);
        }
    }

    #[test]
    fn semi_infinite_gamma_cdf() {
        let c = cdf_from_density(|x: f64| x * (-x).exp(), 0.0, f64::INFINITY, CdfOpts { resolution: 400, ..CdfOpts::default() })
            .unwrap();
        assert!((c.total() - 1.0).abs() < 1e-10);
        let mut prev = 0.0;
        for i in 1..200 {
            let x = i as f64 * 0.1;
            let want = 1.0 - (1.0 + x) * (-x).exp();
            assert!((c.cdf(x) - want).abs() < 2e-7, "{x}");
            assert!((c.cdf_exact(x) - want).abs() < 1e-11, "{x}");
            assert!(c.cdf(x) >= prev);
            prev = c.cdf(x);
        }
        for &u in &[1e-6, 0.1, 0.5, 0.9, 0.999999] {
            let q = c.quantile(u);
            assert!((c.cdf_exact(q) - u).abs() < 1e-11);
        }
    }

    #[test]
    fn weighted_mean() {
        let s = EmpiricalSample::weighted(vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 1.0]).unwrap();
        assert!((s.mean_se().0 - 2.0).abs() < 1e-15);
        assert!(EmpiricalSample::weighted(vec![1.0], vec![-1.0]).is_err());
        assert!(EmpiricalSample::new(vec![]).is_err());
    }
}
