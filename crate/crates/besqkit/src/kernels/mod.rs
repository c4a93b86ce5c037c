//! Closed-form densities: the squared Bessel transition kernel, determinantal
//! kernels of the conditioned N-particle systems, non-collision probabilities and
//! the entrance law from the origin.
//!
//! Every determinant is computed from log-magnitudes with row and column scaling
//! (see [`crate::linalg::log_det_from_logs`]).

mod ensemble;

pub use ensemble::{sample_conditioned, sample_entrance, BiorthogonalEnsemble};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffspec::{BesselParams, DiffusionSpec};
use crate::linalg::{log_det_from_logs, log_vandermonde, LogDet};
use crate::quad::QuadError;
use crate::specfun::{ln_gamma_unchecked, log_besseli_unchecked, log_phi_unchecked};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("{0}")]
    Domain(String),
    #[error("coordinates must be strictly increasing and positive: {0:?}")]
    NotInChamber(Vec<f64>),
    #[error("drift parameters must be non-negative and strictly increasing: {0:?}")]
    BadSpectrum(Vec<f64>),
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("denominator determinant is numerically singular (scaled value {0:e})")]
    SingularDenominator(f64),
    #[error("non-collision probability {0} exceeds 1")]
    ProbabilityAboveOne(f64),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// A point of the open chamber `0 < x₁ < … < x_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ChamberPoint(Vec<f64>);

impl ChamberPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, KernelError> {
        let ok = !coords.is_empty()
            && coords.iter().all(|v| v.is_finite() && *v > 0.0)
            && coords.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(Self(coords))
        } else {
            Err(KernelError::NotInChamber(coords))
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ChamberPoint {
    type Error = KernelError;
    fn try_from(v: Vec<f64>) -> Result<Self, KernelError> {
        Self::new(v)
    }
}

impl From<ChamberPoint> for Vec<f64> {
    fn from(p: ChamberPoint) -> Vec<f64> {
        p.0
    }
}

/// Drift parameters `μ₁ < … < μ_N` (eigenvalues of `M*M`); `λ_i = μ_i / 2`.
/// The all-zero spectrum is a separate, flagged case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpectrum {
    mu: Vec<f64>,
    degenerate: bool,
}

impl DriftSpectrum {
    pub fn new(mu: Vec<f64>) -> Result<Self, KernelError> {
        let ok = !mu.is_empty()
            && mu.iter().all(|v| v.is_finite() && *v >= 0.0)
            && mu.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(Self { mu, degenerate: false })
        } else if mu.len() > 1 && mu.iter().all(|v| *v == 0.0) {
            Ok(Self::zero(mu.len()))
        } else {
            Err(KernelError::BadSpectrum(mu))
        }
    }

    /// The spectrum `μ = 0` with `n` coordinates.
    pub fn zero(n: usize) -> Self {
        Self { mu: vec![0.0; n], degenerate: true }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 0.5 * m).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

fn check_time(t: f64) -> Result<(), KernelError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Domain(format!("time must be positive, got {t}")))
    }
}

fn check_sizes(n: usize, others: &[(&str, usize)]) -> Result<(), KernelError> {
    for (name, m) in others {
        if *m != n {
            return Err(KernelError::Size(format!("{name} has {m} coordinates, expected {n}")));
        }
    }
    Ok(())
}

/// `log q_t^{(ν)}(x, y)` for a raw order `nu ≥ 0` (shifted orders are used by the
/// entrance law).
pub(crate) fn log_besq_density_nu(nu: f64, t: f64, x: f64, y: f64) -> f64 {
    let two_t = 2.0 * t;
    if x == 0.0 {
        return nu * y.ln() - y / two_t - (nu + 1.0) * two_t.ln() - ln_gamma_unchecked(nu + 1.0);
    }
    let z = (x * y).sqrt() / t;
    -two_t.ln() + 0.5 * nu * (y / x).ln() - (x + y) / two_t + log_besseli_unchecked(nu, z)
}

/// `log q_t^{(ν)}(x, y)`; see [`besq_density`].
pub fn log_besq_density(params: BesselParams, t: f64, x: f64, y: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    if !(y > 0.0) || !y.is_finite() || !(x >= 0.0) || !x.is_finite() {
        return Err(KernelError::Domain(format!("need x >= 0 and y > 0, got x={x}, y={y}")));
    }
    Ok(log_besq_density_nu(params.nu(), t, x, y))
}

/// Transition density of BESQ(δ):
/// `q_t(x,y) = (1/2t) (y/x)^{ν/2} e^{-(x+y)/2t} I_ν(√(xy)/t)`,
/// with the entrance limit `y^ν e^{-y/2t} / ((2t)^{ν+1} Γ(ν+1))` at `x = 0`.
pub fn besq_density(params: BesselParams, t: f64, x: f64, y: f64) -> Result<f64, KernelError> {
    log_besq_density(params, t, x, y).map(f64::exp)
}

fn log_det_matrix<F: Fn(usize, usize) -> f64>(n: usize, entry: F) -> LogDet {
    let mut la = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            la.push(entry(i, j));
        }
    }
    log_det_from_logs(&la, &vec![1.0; n * n], n)
}

fn log_det_phi(nu: f64, mu: &[f64], x: &[f64]) -> LogDet {
    log_det_matrix(mu.len(), |i, j| log_phi_unchecked(nu, 0.5 * mu[i], x[j]))
}

fn log_det_besq(nu: f64, t: f64, x: &[f64], y: &[f64]) -> LogDet {
    log_det_matrix(x.len(), |i, j| log_besq_density_nu(nu, t, x[i], y[j]))
}

fn signed_exp(sign: f64, log: f64) -> f64 {
    if sign == 0.0 {
        0.0
    } else {
        sign * log.exp()
    }
}

/// Transition density of N squared Bessel processes with drifts `μ` conditioned
/// never to collide:
/// `e^{-½Σμ_i t} det φ_{μ_i/2}(y_j) / det φ_{μ_i/2}(x_j) · det q_t(x_i, y_j)`.
/// The all-zero spectrum dispatches to [`laguerre_density`].
pub fn conditioned_density(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    x: &ChamberPoint,
    y: &ChamberPoint,
) -> Result<f64, KernelError> {
    let (s, l) = signed_log_conditioned(params, mu, t, x, y)?;
    Ok(signed_exp(s, l))
}

/// Log of [`conditioned_density`]; `-∞` where the computed value is not positive.
pub fn log_conditioned_density(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    x: &ChamberPoint,
    y: &ChamberPoint,
) -> Result<f64, KernelError> {
    let (s, l) = signed_log_conditioned(params, mu, t, x, y)?;
    Ok(if s > 0.0 { l } else { f64::NEG_INFINITY })
}

fn signed_log_conditioned(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    x: &ChamberPoint,
    y: &ChamberPoint,
) -> Result<(f64, f64), KernelError> {
    if mu.is_degenerate() {
        return signed_log_laguerre(params, t, x, y);
    }
    check_time(t)?;
    let n = mu.len();
    check_sizes(n, &[("x", x.len()), ("y", y.len())])?;
    let nu = params.nu();
    let den = log_det_phi(nu, mu.mu(), x.coords());
    if den.sign <= 0.0 || den.scaled < 1e-300 {
        return Err(KernelError::SingularDenominator(den.scaled * den.sign));
    }
    let num = log_det_phi(nu, mu.mu(), y.coords());
    let kmg = log_det_besq(nu, t, x.coords(), y.coords());
    let drift: f64 = mu.mu().iter().sum::<f64>() * 0.5 * t;
    Ok((num.sign * kmg.sign, -drift + num.log_abs - den.log_abs + kmg.log_abs))
}

/// Transition density without drift:
/// `Δ(y)/Δ(x) · det q_t(x_i, y_j)` with `Δ(z) = Π_{i<j}(z_j - z_i)`.
pub fn laguerre_density(
    params: BesselParams,
    t: f64,
    x: &ChamberPoint,
    y: &ChamberPoint,
) -> Result<f64, KernelError> {
    let (s, l) = signed_log_laguerre(params, t, x, y)?;
    Ok(signed_exp(s, l))
}

fn signed_log_laguerre(
    params: BesselParams,
    t: f64,
    x: &ChamberPoint,
    y: &ChamberPoint,
) -> Result<(f64, f64), KernelError> {
    check_time(t)?;
    check_sizes(x.len(), &[("y", y.len())])?;
    let kmg = log_det_besq(params.nu(), t, x.coords(), y.coords());
    Ok((kmg.sign, log_vandermonde(y.coords()) - log_vandermonde(x.coords()) + kmg.log_abs))
}

fn check_lambdas(lambdas: &[f64]) -> Result<(), KernelError> {
    let ok = !lambdas.is_empty()
        && lambdas.iter().all(|v| v.is_finite() && *v >= 0.0)
        && lambdas.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(KernelError::BadSpectrum(lambdas.to_vec()))
    }
}

/// Probability that independent Doob-transformed diffusions started at `x`, with
/// eigenvalue parameters `λ₁ < … < λ_N`, never collide:
/// `det ψ_{λ_i}(x_j) / Π_i ψ_{λ_i}(x_i)`.
///
/// The boundary and asymptotic-ordering conditions under which this holds cannot
/// be checked for user-supplied diffusions; they are the caller's responsibility.
pub fn noncollision_prob(
    spec: &DiffusionSpec,
    lambdas: &[f64],
    x: &ChamberPoint,
) -> Result<f64, KernelError> {
    check_lambdas(lambdas)?;
    let n = lambdas.len();
    check_sizes(n, &[("x", x.len())])?;
    let xs = x.coords();
    let d = log_det_matrix(n, |i, j| spec.log_psi(lambdas[i], xs[j]));
    let diag: f64 = (0..n).map(|i| spec.log_psi(lambdas[i], xs[i])).sum();
    let p = signed_exp(d.sign, d.log_abs - diag);
    if p > 1.0 + 1e-10 {
        return Err(KernelError::ProbabilityAboveOne(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Transition density of generic Doob-conditioned non-colliding diffusions:
/// `e^{-tΣλ_i} det ψ_{λ_i}(y_j) / det ψ_{λ_i}(x_j) · det p_t(x_i, y_j)`,
/// where `p_t` is the one-particle transition density of `spec`.
pub fn conditioned_density_generic(
    spec: &DiffusionSpec,
    p_t: &dyn Fn(f64, f64) -> f64,
    lambdas: &[f64],
    t: f64,
    x: &ChamberPoint,
    y: &ChamberPoint,
) -> Result<f64, KernelError> {
    check_lambdas(lambdas)?;
    check_time(t)?;
    let n = lambdas.len();
    check_sizes(n, &[("x", x.len()), ("y", y.len())])?;
    let (xs, ys) = (x.coords(), y.coords());
    let den = log_det_matrix(n, |i, j| spec.log_psi(lambdas[i], xs[j]));
    if den.sign <= 0.0 || den.scaled < 1e-300 {
        return Err(KernelError::SingularDenominator(den.scaled * den.sign));
    }
    let num = log_det_matrix(n, |i, j| spec.log_psi(lambdas[i], ys[j]));
    let mut la = Vec::with_capacity(n * n);
    let mut sg = Vec::with_capacity(n * n);
    for &xi in xs {
        for &yj in ys {
            let p = p_t(xi, yj);
            la.push(p.abs().ln());
            sg.push(if p < 0.0 { -1.0 } else { 1.0 });
        }
    }
    let kmg = log_det_from_logs(&la, &sg, n);
    let drift: f64 = lambdas.iter().sum::<f64>() * t;
    Ok(signed_exp(num.sign * kmg.sign, -drift + num.log_abs - den.log_abs + kmg.log_abs))
}

/// `log |C(k, m)|` as a float.
fn ln_binomial(k: usize, m: usize) -> f64 {
    ln_gamma_unchecked(k as f64 + 1.0)
        - ln_gamma_unchecked(m as f64 + 1.0)
        - ln_gamma_unchecked((k - m) as f64 + 1.0)
}

/// `∂_x^k q_t^{(ν)}(x, y)` at `x = 0` as `(sign, log|·|)`, from
/// `∂_x q^{(ν)} = (q^{(ν+1)} - q^{(ν)}) / 2t` expanded binomially.
pub(crate) fn entrance_derivative(nu: f64, t: f64, k: usize, y: f64) -> (f64, f64) {
    // Common factor y^ν e^{-y/2t} / (2t)^{ν+1} is pulled out of every term.
    let two_t = 2.0 * t;
    let u = y / two_t;
    let mut poly = 0.0;
    for m in 0..=k {
        let sign = if (k - m) % 2 == 0 { 1.0 } else { -1.0 };
        let lt = ln_binomial(k, m) + m as f64 * u.ln() - ln_gamma_unchecked(nu + m as f64 + 1.0);
        poly += sign * lt.exp();
    }
    let common = nu * y.ln() - y / two_t - (nu + 1.0) * two_t.ln() - k as f64 * two_t.ln();
    (poly.signum(), common + poly.abs().ln())
}

fn entrance_numerator(nu: f64, t: f64, y: &[f64]) -> LogDet {
    let n = y.len();
    let mut la = Vec::with_capacity(n * n);
    let mut sg = Vec::with_capacity(n * n);
    for k in 0..n {
        for &yj in y {
            let (s, l) = entrance_derivative(nu, t, k, yj);
            la.push(l);
            sg.push(s);
        }
    }
    log_det_from_logs(&la, &sg, n)
}

/// Density at time `t` of the conditioned system started from the origin:
/// `e^{-Σλ_i t} det(∂_x^{i-1} q_t(x, y_j)|₀) / det(∂_x^{i-1} ψ_{λ_j}(0)) · det ψ_{λ_i}(y_j)`.
/// For the all-zero spectrum the eigenfunction ratio is replaced by its limit
/// `Δ(y) / Π_{m<N} m!`.
pub fn entrance_density(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    y: &ChamberPoint,
) -> Result<f64, KernelError> {
    let (s, l) = signed_log_entrance(params, mu, t, y)?;
    Ok(signed_exp(s, l))
}

/// Log of [`entrance_density`]; `-∞` where the computed value is not positive.
pub fn log_entrance_density(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    y: &ChamberPoint,
) -> Result<f64, KernelError> {
    let (s, l) = signed_log_entrance(params, mu, t, y)?;
    Ok(if s > 0.0 { l } else { f64::NEG_INFINITY })
}

fn signed_log_entrance(
    params: BesselParams,
    mu: &DriftSpectrum,
    t: f64,
    y: &ChamberPoint,
) -> Result<(f64, f64), KernelError> {
    check_time(t)?;
    let n = mu.len();
    check_sizes(n, &[("y", y.len())])?;
    let nu = params.nu();
    let ys = y.coords();
    let num = entrance_numerator(nu, t, ys);
    if mu.is_degenerate() {
        let fact: f64 = (0..n).map(|m| ln_gamma_unchecked(m as f64 + 1.0)).sum();
        return Ok((num.sign, num.log_abs + log_vandermonde(ys) - fact));
    }
    let m = mu.mu();
    let mut la = Vec::with_capacity(n * n);
    for i in 0..n {
        for &mj in m {
            let k = i as f64;
            let pow = if i == 0 { 0.0 } else { k * mj.ln() };
            la.push(pow - ln_gamma_unchecked(k + 1.0 + nu) - (2.0 * k + nu) * std::f64::consts::LN_2);
        }
    }
    let den = log_det_from_logs(&la, &vec![1.0; n * n], n);
    if den.sign <= 0.0 || den.scaled < 1e-300 {
        return Err(KernelError::SingularDenominator(den.scaled * den.sign));
    }
    let psi = log_det_phi(nu, m, ys);
    let drift: f64 = m.iter().sum::<f64>() * 0.5 * t;
    Ok((num.sign * psi.sign, -drift + num.log_abs - den.log_abs + psi.log_abs))
}
