//! Exact sampling from chamber densities of the form `det f_i(y_j) · det g_i(y_j) / det G`,
//! `G_ij = ∫ f_i g_j`. Both the conditioned transition law and the entrance law
//! have this shape.
//!
//! The symmetrized law is a determinantal process with the projection kernel
//! `K(a, b) = f(a)ᵀ G⁻ᵀ g(b)`; points are drawn one at a time from the Schur
//! complement `K(y,y) − K(y,Y) K(Y,Y)⁻¹ K(Y,y)` and sorted at the end.

use std::sync::Arc;

use rand::Rng;

use super::{check_time, entrance_derivative, log_besq_density_nu, ChamberPoint, DriftSpectrum, KernelError};
use crate::diffspec::BesselParams;
use crate::linalg::Lu;
use crate::quad::{integrate_to_infinity, QuadOpts};
use crate::specfun::log_phi_unchecked;
use crate::stats::{cdf_from_density, CdfOpts, DensityCdf};

/// A signed function given as `(sign, log|value|)`.
pub type LogFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

struct Inner {
    f: Vec<LogFn>,
    g: Vec<LogFn>,
    log_alpha: Vec<f64>,
    log_beta: Vec<f64>,
    /// `G̃⁻ᵀ`, row-major.
    a: Vec<f64>,
}

impl Inner {
    fn n(&self) -> usize {
        self.f.len()
    }

    /// `(u, v)` with `u_i v_j = f_i(y) g_j(y) / (α_i β_j)`; a common per-point factor is
    /// moved between `u` and `v` to keep both representable.
    fn vectors(&self, y: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut lu = Vec::with_capacity(n);
        let mut su = Vec::with_capacity(n);
        let mut lv = Vec::with_capacity(n);
        let mut sv = Vec::with_capacity(n);
        for i in 0..n {
            let (s, l) = (self.f[i])(y);
            su.push(s);
            lu.push(l - self.log_alpha[i]);
            let (s, l) = (self.g[i])(y);
            sv.push(s);
            lv.push(l - self.log_beta[i]);
        }
        let mu = lu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mv = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mu.is_finite() || !mv.is_finite() {
            return (vec![0.0; n], vec![0.0; n]);
        }
        let shift = 0.5 * (mu - mv);
        let u = (0..n).map(|i| su[i] * (lu[i] - shift).exp()).collect();
        let v = (0..n).map(|i| sv[i] * (lv[i] + shift).exp()).collect();
        (u, v)
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| (0..n).map(|j| self.a[i * n + j] * v[j]).sum()).collect()
    }

    fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|j| (0..n).map(|i| self.a[i * n + j] * u[i]).sum()).collect()
    }

    fn one_point(&self, y: f64) -> f64 {
        let (u, v) = self.vectors(y);
        dot(&u, &self.apply(&v))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Density = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Prepared sampler for a biorthogonal ensemble on `(0, ∞)`.
pub struct BiorthogonalEnsemble {
    inner: Arc<Inner>,
    scale: f64,
    first: DensityCdf<Density>,
}

impl std::fmt::Debug for BiorthogonalEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BiorthogonalEnsemble").field("n", &self.inner.n()).field("scale", &self.scale).finish()
    }
}

fn sampling_error<E: std::fmt::Display>(e: E) -> KernelError {
    KernelError::Domain(format!("ensemble sampler: {e}"))
}

impl BiorthogonalEnsemble {
    /// `upper` is a rough upper end of the bulk; it sets the quadrature scale and
    /// the grid used to normalize the Gram matrix.
    pub fn new(f: Vec<LogFn>, g: Vec<LogFn>, upper: f64) -> Result<Self, KernelError> {
        let n = f.len();
        if n == 0 || g.len() != n {
            return Err(KernelError::Size(format!("{} f-functions and {} g-functions", n, g.len())));
        }
        if !(upper > 0.0) || !upper.is_finite() {
            return Err(KernelError::Domain(format!("bad upper bound {upper}")));
        }
        let scale = upper / 8.0;
        let grid: Vec<f64> = (1..=1024).map(|k| 4.0 * upper * k as f64 / 1024.0).collect();
        let fl: Vec<Vec<f64>> = f.iter().map(|fi| grid.iter().map(|&y| fi(y).1).collect()).collect();
        let gl: Vec<Vec<f64>> = g.iter().map(|gj| grid.iter().map(|&y| gj(y).1).collect()).collect();
        let mut log_g = vec![0.0; n * n];
        let mut sign_g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let m = (0..grid.len()).map(|k| fl[i][k] + gl[j][k]).fold(f64::NEG_INFINITY, f64::max);
                if !m.is_finite() {
                    return Err(KernelError::Domain("ensemble function vanishes on the grid".into()));
                }
                let (fi, gj) = (&f[i], &g[j]);
                let r = integrate_to_infinity(
                    |y| {
                        let (s1, l1) = fi(y);
                        let (s2, l2) = gj(y);
                        if s1 == 0.0 || s2 == 0.0 { 0.0 } else { s1 * s2 * (l1 + l2 - m).exp() }
                    },
                    0.0,
                    scale,
                    QuadOpts::tol(1e-13, 1e-12),
                )?;
                log_g[i * n + j] = m + r.value.abs().ln();
                sign_g[i * n + j] = r.value.signum();
            }
        }
        let log_alpha: Vec<f64> =
            (0..n).map(|i| (0..n).map(|j| log_g[i * n + j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let log_beta: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| log_g[i * n + j] - log_alpha[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let gt: Vec<f64> = (0..n * n)
            .map(|k| sign_g[k] * (log_g[k] - log_alpha[k / n] - log_beta[k % n]).exp())
            .collect();
        let lu = Lu::new(&gt, n).map_err(sampling_error)?;
        // Column k of G̃⁻ᵀ solves G̃ᵀ x = e_k.
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let col = lu.solve_transpose(&e);
            for i in 0..n {
                a[i * n + k] = col[i];
            }
        }
        let inner = Arc::new(Inner { f, g, log_alpha, log_beta, a });
        let c = inner.clone();
        let nf = n as f64;
        let density: Density = Box::new(move |y| (c.one_point(y) / nf).max(0.0));
        let first = cdf_from_density(density, 0.0, f64::INFINITY, CdfOpts { scale, ..CdfOpts::default() })
            .map_err(sampling_error)?;
        if (first.total() - 1.0).abs() > 1e-6 {
            return Err(KernelError::Domain(format!("ensemble one-point mass {} is not 1", first.total())));
        }
        Ok(Self { inner, scale, first })
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    /// One-point density `ρ(y) = K(y, y)`; integrates to `N`.
    pub fn one_point_density(&self, y: f64) -> f64 {
        self.inner.one_point(y).max(0.0)
    }

    /// Draws one ordered configuration.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, KernelError> {
        let n = self.n();
        let mut ys = vec![self.first.quantile(rng.random::<f64>())];
        while ys.len() < n {
            let k = ys.len();
            // K(Y,Y), Ã v(y_a) and Ãᵀ u(y_a) for the points drawn so far.
            let vecs: Vec<(Vec<f64>, Vec<f64>)> = ys.iter().map(|&y| self.inner.vectors(y)).collect();
            let av: Vec<Vec<f64>> = vecs.iter().map(|(_, v)| self.inner.apply(v)).collect();
            let atu: Vec<Vec<f64>> = vecs.iter().map(|(u, _)| self.inner.apply_t(u)).collect();
            let mut kyy = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    kyy[a * k + b] = dot(&vecs[a].0, &av[b]);
                }
            }
            let lu = Lu::new(&kyy, k).map_err(sampling_error)?;
            let inner = &self.inner;
            let remaining = (n - k) as f64;
            let density = |y: f64| {
                let (u, v) = inner.vectors(y);
                let diag = dot(&u, &inner.apply(&v));
                let row: Vec<f64> = av.iter().map(|w| dot(&u, w)).collect();
                let col: Vec<f64> = atu.iter().map(|w| dot(w, &v)).collect();
                let sol = lu.solve(&col);
                ((diag - dot(&row, &sol)) / remaining).max(0.0)
            };
            let cdf = cdf_from_density(
                density,
                0.0,
                f64::INFINITY,
                CdfOpts { scale: self.scale, quad: QuadOpts::tol(1e-12, 1e-9), resolution: 0 },
            )
            .map_err(sampling_error)?;
            ys.push(cdf.quantile(rng.random::<f64>()));
        }
        ys.sort_by(f64::total_cmp);
        Ok(ys)
    }

    /// Sampler for the conditioned transition law from `x` over time `t`.
    pub fn transition(
        params: BesselParams,
        mu: &DriftSpectrum,
        t: f64,
        x: &ChamberPoint,
    ) -> Result<Self, KernelError> {
        check_time(t)?;
        if x.len() != mu.len() {
            return Err(KernelError::Size(format!("x has {} coordinates, mu has {}", x.len(), mu.len())));
        }
        let nu = params.nu();
        let f: Vec<LogFn> = x
            .coords()
            .iter()
            .map(|&xi| Arc::new(move |y: f64| (1.0, log_besq_density_nu(nu, t, xi, y))) as LogFn)
            .collect();
        let g = g_functions(nu, mu);
        let xmax = *x.coords().last().unwrap();
        Self::new(f, g, bulk_upper(params, mu, t, xmax))
    }

    /// Sampler for the law at time `t` of the conditioned system started at the origin.
    pub fn entrance(params: BesselParams, mu: &DriftSpectrum, t: f64) -> Result<Self, KernelError> {
        check_time(t)?;
        let nu = params.nu();
        let f: Vec<LogFn> = (0..mu.len())
            .map(|k| Arc::new(move |y: f64| entrance_derivative(nu, t, k, y)) as LogFn)
            .collect();
        let g = g_functions(nu, mu);
        Self::new(f, g, bulk_upper(params, mu, t, 0.0))
    }
}

fn g_functions(nu: f64, mu: &DriftSpectrum) -> Vec<LogFn> {
    if mu.is_degenerate() {
        (0..mu.len()).map(|j| Arc::new(move |y: f64| (1.0, j as f64 * y.ln())) as LogFn).collect()
    } else {
        mu.mu()
            .iter()
            .map(|&m| Arc::new(move |y: f64| (1.0, log_phi_unchecked(nu, 0.5 * m, y))) as LogFn)
            .collect()
    }
}

fn bulk_upper(params: BesselParams, mu: &DriftSpectrum, t: f64, xmax: f64) -> f64 {
    let n = mu.len() as f64;
    let mmax = mu.mu().last().copied().unwrap_or(0.0);
    let mean = xmax + (params.delta() + 4.0 * n) * t + mmax * t * t;
    mean + 8.0 * (4.0 * mean * t).sqrt() + 1e-3
}

/// One draw from the entrance law at time `t` (builds the sampler each call; use
/// [`BiorthogonalEnsemble::entrance`] for repeated draws).
pub fn sample_entrance<R: Rng + ?Sized>(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    rng: &mut R,
) -> Result<ChamberPoint, KernelError> {
    ChamberPoint::new(BiorthogonalEnsemble::entrance(params, mu, t)?.sample(rng)?)
}

/// One draw from the conditioned transition law started at `x`.
pub fn sample_conditioned<R: Rng + ?Sized>(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    x: &ChamberPoint,
    rng: &mut R,
) -> Result<ChamberPoint, KernelError> {
    ChamberPoint::new(BiorthogonalEnsemble::transition(params, mu, t, x)?.sample(rng)?)
}
