//! Gibbs measures on half-arrays: the Ψ functions, the Markov kernels linking
//! consecutive rows, exact top-down sampling and the explicit joint density.
//!
//! Rows are indexed as in [`HalfArray`]: `x^{(2n−1)}` and `x^{(2n)}` have `n`
//! entries. The kernel from row `2n` to row `2n−1` places `x_j` in
//! `[y_{j−1}, y_j]` (with `y_0 = 0`); the kernel from row `2n+1` to row `2n`
//! places `x_j` in `[y_j, y_{j+1}]`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffspec::{besq_spec, BesselParams, DiffusionSpec, SpecDomainError};
use crate::kernels::{ChamberPoint, DriftSpectrum};
use crate::linalg::{log_det_from_logs, log_vandermonde, Lu};
use crate::sde::HalfArray;
use crate::specfun::ln_gamma_unchecked;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GibbsError {
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("point is not strictly increasing and positive: {0:?}")]
    NotInChamber(Vec<f64>),
    #[error("rows do not interlace strictly")]
    Interlacing,
    #[error("eigenvalue parameters must be strictly increasing and non-negative: {0:?}")]
    BadSpectrum(Vec<f64>),
    #[error("sampling cell [{0}, {1}] is degenerate")]
    DegenerateCell(f64, f64),
    #[error("the Ψ functions are not defined for the zero spectrum; use the degenerate kernels")]
    DegenerateSpectrum,
    #[error("determinant is not positive ({0})")]
    NonPositive(f64),
    #[error(transparent)]
    Spec(#[from] SpecDomainError),
}

/// Which pair of consecutive rows a kernel connects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelStep {
    /// From row `2n` (size `n`) down to row `2n−1` (size `n`).
    EvenToOdd,
    /// From row `2n+1` (size `n+1`) down to row `2n` (size `n`).
    OddToEven,
}

impl KernelStep {
    fn cells(self, y: &[f64]) -> Vec<(f64, f64)> {
        match self {
            KernelStep::EvenToOdd => (0..y.len()).map(|j| (if j == 0 { 0.0 } else { y[j - 1] }, y[j])).collect(),
            KernelStep::OddToEven => y.windows(2).map(|w| (w[0], w[1])).collect(),
        }
    }

    fn x_len(self, y_len: usize) -> usize {
        match self {
            KernelStep::EvenToOdd => y_len,
            KernelStep::OddToEven => y_len.saturating_sub(1),
        }
    }
}

fn check_chamber(x: &[f64]) -> Result<(), GibbsError> {
    if x.iter().all(|v| v.is_finite()) && x.first().is_none_or(|v| *v > 0.0) && x.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(GibbsError::NotInChamber(x.to_vec()))
    }
}

fn in_cells(x: &[f64], cells: &[(f64, f64)]) -> bool {
    x.iter().zip(cells).all(|(v, (lo, hi))| lo <= v && v <= hi)
}

/// Closed-form λ ≡ 0 kernels for the squared Bessel process:
/// `h^{(n)}(x) = K_n Δ(x)` and `ĥ^{(n)}(y) = K̂_n Δ(y) Π y_j^{ν+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateKernels {
    pub nu: f64,
    pub ref_point: f64,
}

pub fn degenerate_kernels(params: BesselParams, ref_point: f64) -> Result<DegenerateKernels, GibbsError> {
    if !(ref_point > 0.0) || !ref_point.is_finite() {
        return Err(SpecDomainError::RefPoint(ref_point).into());
    }
    Ok(DegenerateKernels { nu: params.nu(), ref_point })
}

impl DegenerateKernels {
    /// `(ln K_n, ln K̂_n)` with `K_1 = 1`, `K̂_n = K_n Π_{i≤n} 1/(ν+i) / (2c^{ν+1})^n`,
    /// `K_{n+1} = K̂_n (c^ν/2)^n / n!`.
    pub fn log_constants(&self, n: usize) -> (f64, f64) {
        let (nu, lc) = (self.nu, self.ref_point.ln());
        let hat = |k: usize, lk: f64| {
            lk - (1..=k).map(|i| (nu + i as f64).ln()).sum::<f64>()
                - k as f64 * (std::f64::consts::LN_2 + (nu + 1.0) * lc)
        };
        let mut lk = 0.0;
        for k in 1..n {
            let lh = hat(k, lk);
            lk = lh + k as f64 * (nu * lc - std::f64::consts::LN_2) - ln_gamma_unchecked(k as f64 + 1.0);
        }
        (lk, hat(n, lk))
    }

    pub fn log_h(&self, x: &[f64]) -> f64 {
        self.log_constants(x.len()).0 + log_vandermonde(x)
    }

    pub fn log_h_hat(&self, y: &[f64]) -> f64 {
        self.log_constants(y.len()).1 + log_vandermonde(y) + (self.nu + 1.0) * y.iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Kernel density; both kernels are free of the reference point.
    pub fn log_density(&self, step: KernelStep, y: &[f64], x: &[f64]) -> Result<f64, GibbsError> {
        check_chamber(y)?;
        if x.len() != step.x_len(y.len()) || x.is_empty() {
            return Err(GibbsError::Size(format!("{} coordinates below a row of {}", x.len(), y.len())));
        }
        if !in_cells(x, &step.cells(y)) || x.windows(2).any(|w| w[0] >= w[1]) || x[0] <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let n = x.len();
        Ok(match step {
            KernelStep::EvenToOdd => {
                (1..=n).map(|i| (self.nu + i as f64).ln()).sum::<f64>()
                    + self.nu * x.iter().map(|v| v.ln()).sum::<f64>()
                    + log_vandermonde(x)
                    - log_vandermonde(y)
                    - (self.nu + 1.0) * y.iter().map(|v| v.ln()).sum::<f64>()
            }
            KernelStep::OddToEven => ln_gamma_unchecked(n as f64 + 1.0) + log_vandermonde(x) - log_vandermonde(y),
        })
    }

    fn columns(&self, step: KernelStep, n: usize, ymax: f64) -> impl Fn(f64, &mut [f64], &mut [f64]) + '_ {
        let nu = self.nu;
        let shift = match step {
            KernelStep::EvenToOdd => nu,
            KernelStep::OddToEven => 0.0,
        };
        let lmax = ymax.ln();
        move |x: f64, f: &mut [f64], big: &mut [f64]| {
            for i in 0..n {
                let p = shift + (i + 1) as f64;
                if x <= 0.0 {
                    f[i] = if p - 1.0 == 0.0 { (-(p - 1.0) * lmax).exp() } else { 0.0 };
                    big[i] = 0.0;
                } else {
                    let lx = x.ln();
                    f[i] = ((p - 1.0) * lx - p * lmax).exp();
                    big[i] = (p * lx - p * lmax).exp() / p;
                }
            }
        }
    }
}

/// Eigenfunction data for a Gibbs measure with eigenvalue parameters
/// `λ_1 < … < λ_N`, or the degenerate λ ≡ 0 case for BESQ.
#[derive(Clone)]
pub struct PsiBundle {
    spec: DiffusionSpec,
    lambdas: Vec<f64>,
    degenerate: Option<DegenerateKernels>,
}

impl std::fmt::Debug for PsiBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PsiBundle")
            .field("lambdas", &self.lambdas)
            .field("ref_point", &self.spec.ref_point)
            .field("degenerate", &self.degenerate.is_some())
            .finish()
    }
}

impl PsiBundle {
    /// BESQ bundle with `λ_i = μ_i/2`; the zero spectrum selects the degenerate kernels.
    pub fn besq(params: BesselParams, mu: &DriftSpectrum, ref_point: f64) -> Result<Self, GibbsError> {
        let spec = besq_spec(params, ref_point)?;
        let degenerate = if mu.is_degenerate() { Some(degenerate_kernels(params, ref_point)?) } else { None };
        Ok(Self { spec, lambdas: mu.lambdas(), degenerate })
    }

    /// Bundle for a general diffusion with strictly increasing `λ`.
    pub fn new(spec: DiffusionSpec, lambdas: Vec<f64>) -> Result<Self, GibbsError> {
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) || lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GibbsError::BadSpectrum(lambdas));
        }
        Ok(Self { spec, lambdas, degenerate: None })
    }

    /// Number of particles `N` on the top row.
    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn ref_point(&self) -> f64 {
        self.spec.ref_point
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    fn need(&self, n: usize, extra: usize) -> Result<(), GibbsError> {
        if self.degenerate.is_some() {
            return Err(GibbsError::DegenerateSpectrum);
        }
        if n == 0 || n + extra > self.lambdas.len() {
            return Err(GibbsError::Size(format!("level {n} needs {} eigenvalues, have {}", n + extra, self.lambdas.len())));
        }
        Ok(())
    }

    #[inline]
    fn lpsi(&self, i: usize, x: f64) -> f64 {
        self.spec.log_psi(self.lambdas[i], x)
    }

    #[inline]
    fn dlog(&self, i: usize, x: f64) -> f64 {
        self.spec.psi_log_deriv(self.lambdas[i], x)
    }

    /// `ln c_n = −Σ_{i≤n} ln((λ_{n+1} − λ_i) a(c))`.
    pub fn log_c(&self, n: usize) -> Result<f64, GibbsError> {
        self.need(n, 1)?;
        let ac = self.spec.a(self.spec.ref_point);
        Ok(-(0..n).map(|i| ((self.lambdas[n] - self.lambdas[i]) * ac).ln()).sum::<f64>())
    }

    fn det_psi(&self, x: &[f64], rows: usize) -> (f64, f64) {
        let n = x.len();
        let mut l = Vec::with_capacity(n * n);
        for i in 0..rows {
            for &xj in x {
                l.push(self.lpsi(i, xj));
            }
        }
        let d = log_det_from_logs(&l, &vec![1.0; n * n], n);
        (d.sign, d.log_abs)
    }

    /// `ln Ψ^{(n)}(x) = ln det(ψ_{λ_i}(x_j)) − Σ_j ln ψ_{λ_{n+1}}(x_j)`.
    pub fn log_psi_n(&self, x: &[f64]) -> Result<f64, GibbsError> {
        let n = x.len();
        self.need(n, 1)?;
        check_chamber(x)?;
        let (s, l) = self.det_psi(x, n);
        positive(s, l - x.iter().map(|&v| self.lpsi(n, v)).sum::<f64>())
    }

    /// `ln Ψ̄^{(n)}(x) = ln det(ψ_{λ_i}(x_j)) − Σ_j ln ψ_{λ_n}(x_j)`.
    pub fn log_psi_bar(&self, x: &[f64]) -> Result<f64, GibbsError> {
        let n = x.len();
        self.need(n, 0)?;
        check_chamber(x)?;
        let (s, l) = self.det_psi(x, n);
        positive(s, l - x.iter().map(|&v| self.lpsi(n - 1, v)).sum::<f64>())
    }

    /// `ln |D r_i(x)|` where `r_i = ψ_{λ_i}/ψ_{λ_{n+1}}` and `D` differentiates with
    /// respect to the dual speed measure of the `ψ_{λ_{n+1}}` transform:
    /// `D r_i = ψ_iψ_{n+1}(L_i − L_{n+1}) a(c) / (ψ_{n+1}(c)² s')`, which is negative.
    fn log_neg_dr(&self, i: usize, n: usize, x: f64) -> f64 {
        let c = self.spec.ref_point;
        self.lpsi(i, x) + self.lpsi(n, x) + (self.dlog(n, x) - self.dlog(i, x)).ln() + self.spec.a(c).ln()
            - 2.0 * self.lpsi(n, c)
            - self.spec.scale(x).ln()
    }

    /// Value of the entry `D r_i(x)` (row `i`, zero-based, at level `n`).
    pub fn psi_tilde_entry(&self, i: usize, n: usize, x: f64) -> Result<f64, GibbsError> {
        self.need(n, 1)?;
        if i >= n {
            return Err(GibbsError::Size(format!("row {i} at level {n}")));
        }
        Ok(-self.log_neg_dr(i, n, x).exp())
    }

    /// `ln Ψ̃^{(n)}(x)` with `Ψ̃^{(n)} = (−1)^n det(D r_i(x_j))`.
    pub fn log_psi_tilde(&self, x: &[f64]) -> Result<f64, GibbsError> {
        let n = x.len();
        self.need(n, 1)?;
        check_chamber(x)?;
        let mut l = Vec::with_capacity(n * n);
        for i in 0..n {
            for &xj in x {
                l.push(self.log_neg_dr(i, n, xj));
            }
        }
        let d = log_det_from_logs(&l, &vec![1.0; n * n], n);
        positive(d.sign, d.log_abs)
    }

    fn log_speed(&self, x: f64) -> f64 {
        self.spec.speed(x).ln()
    }

    /// `ln m̂(x) = ln s'(x) − ln a(c)`.
    fn log_dual_speed(&self, x: f64) -> f64 {
        self.spec.scale(x).ln() - self.spec.a(self.spec.ref_point).ln()
    }

    /// Kernel density for rows with `n = x.len()` entries.
    pub fn log_kernel_density(&self, step: KernelStep, y: &[f64], x: &[f64]) -> Result<f64, GibbsError> {
        if let Some(d) = &self.degenerate {
            return d.log_density(step, y, x);
        }
        check_chamber(y)?;
        let n = x.len();
        if n != step.x_len(y.len()) || n == 0 {
            return Err(GibbsError::Size(format!("{} coordinates below a row of {}", n, y.len())));
        }
        self.need(n, 1)?;
        if !in_cells(x, &step.cells(y)) || check_chamber(x).is_err() {
            return Ok(f64::NEG_INFINITY);
        }
        let c = self.spec.ref_point;
        let lc = self.lpsi(n, c);
        Ok(match step {
            KernelStep::EvenToOdd => {
                let lam: f64 = x.iter().map(|&v| 2.0 * self.lpsi(n, v) + self.log_speed(v)).sum::<f64>() - 2.0 * n as f64 * lc;
                lam + self.log_psi_n(x)? - self.log_c(n)? - self.log_psi_tilde(y)?
            }
            KernelStep::OddToEven => {
                let lam: f64 = x.iter().map(|&v| -2.0 * self.lpsi(n, v) + self.log_dual_speed(v)).sum::<f64>() + 2.0 * n as f64 * lc;
                lam + self.log_psi_tilde(x)? - self.log_psi_bar(y)?
            }
        })
    }

    /// Row-scaled column functions `(f_i, F_i)` with `F_i' = f_i`, for the kernel
    /// with `n` coordinates and barriers up to `ymax`.
    fn columns(&self, step: KernelStep, n: usize, lo: f64, ymax: f64) -> Box<dyn Fn(f64, &mut [f64], &mut [f64]) + '_> {
        if let Some(d) = &self.degenerate {
            return Box::new(d.columns(step, n, ymax));
        }
        match step {
            KernelStep::EvenToOdd => {
                // f_i = ψ_iψ_{n+1} m, F_i = ψ_iψ_{n+1}(L_{n+1} − L_i) / ((λ_{n+1} − λ_i) s').
                let big = move |i: usize, x: f64| {
                    self.lpsi(i, x) + self.lpsi(n, x) + (self.dlog(n, x) - self.dlog(i, x)).ln()
                        - (self.lambdas[n] - self.lambdas[i]).ln()
                        - self.spec.scale(x).ln()
                };
                let scale: Vec<f64> = (0..n).map(|i| big(i, ymax)).collect();
                Box::new(move |x: f64, f: &mut [f64], bf: &mut [f64]| {
                    for i in 0..n {
                        if x <= 0.0 {
                            f[i] = 0.0;
                            bf[i] = 0.0;
                        } else {
                            f[i] = (self.lpsi(i, x) + self.lpsi(n, x) + self.log_speed(x) - scale[i]).exp();
                            bf[i] = (big(i, x) - scale[i]).exp();
                        }
                    }
                })
            }
            KernelStep::OddToEven => {
                // F_i = ψ_i/ψ_{n+1}, f_i = F_i (L_i − L_{n+1}).
                let lr = move |i: usize, x: f64| self.lpsi(i, x) - self.lpsi(n, x);
                let scale: Vec<f64> = (0..n).map(|i| lr(i, lo).max(lr(i, ymax))).collect();
                Box::new(move |x: f64, f: &mut [f64], bf: &mut [f64]| {
                    for i in 0..n {
                        let r = (lr(i, x) - scale[i]).exp();
                        bf[i] = r;
                        f[i] = r * (self.dlog(i, x) - self.dlog(n, x));
                    }
                })
            }
        }
    }

    /// Draws row `x` from the kernel below row `y`.
    pub fn sample_kernel<R: Rng + ?Sized>(&self, step: KernelStep, y: &[f64], rng: &mut R) -> Result<Vec<f64>, GibbsError> {
        check_chamber(y)?;
        let n = step.x_len(y.len());
        if n == 0 {
            return Err(GibbsError::Size("nothing to sample below a single point".into()));
        }
        if self.degenerate.is_none() {
            self.need(n, 1)?;
        }
        let cells = step.cells(y);
        let cols = self.columns(step, n, cells[0].0.max(y[0]), *y.last().unwrap());
        sample_cells(&cells, &*cols, rng)
    }
}

fn positive(sign: f64, log_abs: f64) -> Result<f64, GibbsError> {
    if sign > 0.0 && log_abs.is_finite() {
        Ok(log_abs)
    } else {
        Err(GibbsError::NonPositive(sign * log_abs.exp()))
    }
}

/// Sequential inverse-CDF sampling from a density proportional to
/// `det(f_i(x_j))` on a product of cells. Coordinate `j` is drawn from its
/// conditional law given `x_1..x_{j−1}`, which is linear in the antiderivatives
/// `F_i`: later coordinates are integrated out by replacing their columns with
/// `F(hi) − F(lo)`.
fn sample_cells<R: Rng + ?Sized>(
    cells: &[(f64, f64)],
    cols: &dyn Fn(f64, &mut [f64], &mut [f64]),
    rng: &mut R,
) -> Result<Vec<f64>, GibbsError> {
    let n = cells.len();
    let mut m = vec![0.0; n * n];
    let (mut f, mut big, mut big_lo) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (j, &(lo, hi)) in cells.iter().enumerate() {
        if !(hi > lo) {
            return Err(GibbsError::DegenerateCell(lo, hi));
        }
        cols(lo, &mut f, &mut big_lo);
        cols(hi, &mut f, &mut big);
        for i in 0..n {
            m[i * n + j] = big[i] - big_lo[i];
        }
    }
    let mut out = Vec::with_capacity(n);
    for (j, &(lo, hi)) in cells.iter().enumerate() {
        let lu = Lu::new(&m, n).map_err(|_| GibbsError::NonPositive(0.0))?;
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let u = lu.solve_transpose(&e);
        cols(lo, &mut f, &mut big_lo);
        let mut cdf = |x: f64| {
            cols(x, &mut f, &mut big);
            (0..n).map(|i| u[i] * (big[i] - big_lo[i])).sum::<f64>()
        };
        let total = cdf(hi);
        let target = rng.random::<f64>() * total;
        let (mut a, mut b) = (lo, hi);
        let tol = 1e-10 * hi.abs().max(1.0);
        while b - a > tol {
            let mid = 0.5 * (a + b);
            if (cdf(mid) < target) == (total > 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        let x = 0.5 * (a + b);
        cols(x, &mut f, &mut big);
        for i in 0..n {
            m[i * n + j] = f[i];
        }
        out.push(x);
    }
    Ok(out)
}

/// Draws a half-array from the Gibbs measure with the given top row, sampling
/// rows from the top down.
pub fn sample_gibbs<R: Rng + ?Sized>(bundle: &PsiBundle, top: &ChamberPoint, rng: &mut R) -> Result<HalfArray, GibbsError> {
    let big_n = bundle.n();
    if top.len() != big_n {
        return Err(GibbsError::Size(format!("top row of {} for {big_n} eigenvalues", top.len())));
    }
    let mut rows: Vec<Vec<f64>> = vec![top.coords().to_vec()];
    for n in (1..big_n).rev() {
        let even = bundle.sample_kernel(KernelStep::OddToEven, rows.last().unwrap(), rng)?;
        let odd = bundle.sample_kernel(KernelStep::EvenToOdd, &even, rng)?;
        debug_assert_eq!(odd.len(), n);
        rows.push(even);
        rows.push(odd);
    }
    rows.reverse();
    HalfArray::new(rows).map_err(|_| GibbsError::Interlacing)
}

fn check_array(bundle: &PsiBundle, array: &HalfArray) -> Result<(), GibbsError> {
    if array.n() != bundle.n() {
        return Err(GibbsError::Size(format!("array with top row {} for {} eigenvalues", array.n(), bundle.n())));
    }
    if array.levels() > 1 && !array.is_strictly_interlaced() {
        return Err(GibbsError::Interlacing);
    }
    Ok(())
}

/// Log density of the Gibbs measure as the product of row kernels times the top
/// density.
pub fn log_gibbs_density_product(
    bundle: &PsiBundle,
    array: &HalfArray,
    log_top: &dyn Fn(&[f64]) -> f64,
) -> Result<f64, GibbsError> {
    check_array(bundle, array)?;
    let mut v = log_top(array.top());
    for n in 1..bundle.n() {
        v += bundle.log_kernel_density(KernelStep::OddToEven, array.row(2 * n + 1), array.row(2 * n))?;
        v += bundle.log_kernel_density(KernelStep::EvenToOdd, array.row(2 * n), array.row(2 * n - 1))?;
    }
    Ok(v)
}

/// Log density of the Gibbs measure from the explicit product formula:
/// `ℳ(x^{(2N−1)}) a(c)^{N(N−1)/2} Π_{i<j}(λ_j − λ_i) Π_i ψ_N(x_i^{(2N−1)}) / det ψ_i(x_j^{(2N−1)})`
/// times, for each `n < N` and `i ≤ n`,
/// `ψ_{n+1}ψ_n m (x_i^{(2n−1)}) · ψ_{n+1}^{−2} m̂ (x_i^{(2n)})`.
pub fn log_gibbs_density(
    bundle: &PsiBundle,
    array: &HalfArray,
    log_top: &dyn Fn(&[f64]) -> f64,
) -> Result<f64, GibbsError> {
    if bundle.is_degenerate() {
        return log_gibbs_density_product(bundle, array, log_top);
    }
    check_array(bundle, array)?;
    let big_n = bundle.n();
    let top = array.top();
    check_chamber(top)?;
    let lam = bundle.lambdas();
    let c = bundle.ref_point();
    let mut v = log_top(top) + (big_n * (big_n - 1) / 2) as f64 * bundle.spec.a(c).ln();
    for j in 0..big_n {
        for i in 0..j {
            v += (lam[j] - lam[i]).ln();
        }
    }
    let (s, ld) = bundle.det_psi(top, big_n);
    v += top.iter().map(|&x| bundle.lpsi(big_n - 1, x)).sum::<f64>() - positive(s, ld)?;
    for n in 1..big_n {
        for (&x, &z) in array.row(2 * n - 1).iter().zip(array.row(2 * n)) {
            v += bundle.lpsi(n, x) + bundle.lpsi(n - 1, x) + bundle.log_speed(x);
            v += -2.0 * bundle.lpsi(n, z) + bundle.log_dual_speed(z);
        }
    }
    Ok(v)
}

pub fn gibbs_density(bundle: &PsiBundle, array: &HalfArray, log_top: &dyn Fn(&[f64]) -> f64) -> Result<f64, GibbsError> {
    log_gibbs_density(bundle, array, log_top).map(f64::exp)
}

/// `Ψ̃^{(n)}(x)` for `n = x.len()`.
pub fn psi_tilde(bundle: &PsiBundle, x: &ChamberPoint) -> Result<f64, GibbsError> {
    bundle.log_psi_tilde(x.coords()).map(f64::exp)
}

/// Normalized density of the kernel from row `y` down to row `x`.
pub fn lambda_kernel_density(bundle: &PsiBundle, step: KernelStep, y: &[f64], x: &[f64]) -> Result<f64, GibbsError> {
    bundle.log_kernel_density(step, y, x).map(f64::exp)
}

#[cfg(test)]
mod tests;
