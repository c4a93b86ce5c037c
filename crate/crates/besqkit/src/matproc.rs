//! Complex matrix Brownian motion with drift, eigenvalue extraction, Haar unitaries,
//! and Monte Carlo checks of the rectangular HCIZ and Brezin–Gross–Witten integrals.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hermitian_eigen, log_det_from_logs, log_vandermonde, qr, CMatrix, LinalgError};
use crate::specfun::{ln_gamma_unchecked, log_besseli_unchecked};

pub const EIGEN_TOL: f64 = 1e-12;
pub const EIGEN_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("need K >= N, got K={k}, N={n}")]
    Shape { k: usize, n: usize },
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_shape(m: &CMatrix) -> Result<(), MatError> {
    if m.rows < m.cols || m.cols == 0 {
        return Err(MatError::Shape { k: m.rows, n: m.cols });
    }
    Ok(())
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `B_t` for a `K × N` complex Brownian matrix: entries `√t (ξ + iξ')` with
/// independent standard normals.
pub fn sample_matrix_bm<R: Rng + ?Sized>(k: usize, n: usize, t: f64, rng: &mut R) -> Result<CMatrix, MatError> {
    if !(t >= 0.0) || k < n || n == 0 {
        return Err(MatError::Domain(format!("bad matrix Brownian motion parameters K={k}, N={n}, t={t}")));
    }
    let s = t.sqrt();
    let mut m = CMatrix::zeros(k, n);
    for z in &mut m.data {
        *z = Complex64::new(s * gaussian(rng), s * gaussian(rng));
    }
    Ok(m)
}

/// Ascending eigenvalues of `A* A`.
pub fn gram_eigenvalues(a: &CMatrix) -> Result<Vec<f64>, MatError> {
    let h = a.adjoint().matmul(a);
    Ok(hermitian_eigen(&h, EIGEN_TOL, EIGEN_SWEEPS)?.0)
}

/// Eigenvalues of `(B_t + tM)*(B_t + tM)` for a fresh `B_t`, ascending.
pub fn eval_matrix_process<R: Rng + ?Sized>(m: &CMatrix, t: f64, rng: &mut R) -> Result<Vec<f64>, MatError> {
    check_shape(m)?;
    if !(t > 0.0) {
        return Err(MatError::Domain(format!("time must be positive, got {t}")));
    }
    let b = sample_matrix_bm(m.rows, m.cols, t, rng)?;
    gram_eigenvalues(&b.add(&m.scale(t)))
}

/// A `K × N` drift matrix with `eval(M* M) = mu` (diagonal in the leading block).
pub fn drift_matrix(k: usize, mu: &[f64]) -> Result<CMatrix, MatError> {
    if k < mu.len() || mu.iter().any(|m| !(*m >= 0.0)) {
        return Err(MatError::Domain(format!("cannot build a {k}x{} drift with spectrum {mu:?}", mu.len())));
    }
    let d: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    Ok(CMatrix::diag_real(k, mu.len(), &d))
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with `R`'s diagonal
/// made real positive.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut g = CMatrix::zeros(n, n);
    for z in &mut g.data {
        *z = Complex64::new(gaussian(rng), gaussian(rng));
    }
    qr(&g).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub mc_estimate: f64,
    pub closed_form: f64,
    pub std_err: f64,
}

impl McCheck {
    pub fn z_score(&self) -> f64 {
        (self.mc_estimate - self.closed_form) / self.std_err
    }
}

fn mc<F: FnMut() -> f64>(samples: usize, mut f: F) -> (f64, f64) {
    let mut s = 0.0;
    let mut s2 = 0.0;
    for _ in 0..samples {
        let v = f();
        s += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn ln_factorial(n: usize) -> f64 {
    ln_gamma_unchecked(n as f64 + 1.0)
}

fn distinct(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Closed form of `∫∫ exp Tr(A V*C*U* + U C V A*) dV dU` over Haar `U ∈ U(K)`, `V ∈ U(N)`:
/// `Π_{p<N} p! Π_{q=K−N}^{K−1} q! det I_{K−N}(2√(a_i c_j)) / (Δ(a) Δ(c) Π (a_i c_i)^{(K−N)/2})`
/// with `a = eval(A*A)`, `c = eval(C*C)`.
pub fn hciz_rect_closed(a: &CMatrix, c: &CMatrix) -> Result<f64, MatError> {
    check_shape(a)?;
    if (a.rows, a.cols) != (c.rows, c.cols) {
        return Err(MatError::Domain("A and C must have the same shape".into()));
    }
    let (k, n) = (a.rows, a.cols);
    let ea = gram_eigenvalues(a)?;
    let ec = gram_eigenvalues(c)?;
    if !distinct(&ea) || !distinct(&ec) || ea[0] <= 0.0 || ec[0] <= 0.0 {
        return Err(MatError::Domain("eigenvalues of A*A and C*C must be positive and distinct".into()));
    }
    let order = (k - n) as f64;
    let mut la = Vec::with_capacity(n * n);
    for &ai in &ea {
        for &cj in &ec {
            la.push(log_besseli_unchecked(order, 2.0 * (ai * cj).sqrt()));
        }
    }
    let d = log_det_from_logs(&la, &vec![1.0; n * n], n);
    let consts: f64 = (0..n).map(ln_factorial).sum::<f64>() + (k - n..k).map(ln_factorial).sum::<f64>();
    let powers: f64 = ea.iter().zip(&ec).map(|(x, y)| 0.5 * order * (x * y).ln()).sum();
    let log = consts + d.log_abs - log_vandermonde(&ea) - log_vandermonde(&ec) - powers;
    Ok(d.sign * log.exp())
}

/// Monte Carlo estimate of the rectangular HCIZ integral against its closed form.
pub fn hciz_rect_check<R: Rng + ?Sized>(
    a: &CMatrix,
    c: &CMatrix,
    samples: usize,
    rng: &mut R,
) -> Result<McCheck, MatError> {
    let closed_form = hciz_rect_closed(a, c)?;
    let a_adj = a.adjoint();
    let (mc_estimate, std_err) = mc(samples, || {
        let u = haar_unitary(a.rows, rng);
        let v = haar_unitary(a.cols, rng);
        let x = u.matmul(c).matmul(&v).matmul(&a_adj);
        (2.0 * x.trace().re).exp()
    });
    Ok(McCheck { mc_estimate, closed_form, std_err })
}

/// Coefficient of `x^k` in `x^{(j-1)/2} I_{j-1}(√x)` (`j` one-based).
fn bessel_poly_coeff(j: usize, k: usize) -> f64 {
    if k + 1 < j {
        return 0.0;
    }
    let m = k + 1 - j;
    (-(ln_factorial(m) + ln_factorial(k) + (2 * k + 1 - j) as f64 * std::f64::consts::LN_2)).exp()
}

/// `det(e_i^{(j−1)/2} I_{j−1}(√e_i)) / Δ(e)` for `e ≥ 0`, computed through divided
/// differences of the power series so zero or repeated arguments are fine.
pub fn bessel_vandermonde_ratio(e: &[f64]) -> f64 {
    let kk = e.len();
    let emax = e.iter().cloned().fold(0.0, f64::max);
    // Series terms decay like (e/4)^k / (k!)^2.
    let deg = (40.0 + 4.0 * emax.sqrt()) as usize + 2 * kk;
    // h[l][d]: complete homogeneous polynomial of degree d in e_1..e_{l+1}.
    let mut h = vec![vec![0.0; deg + 1]; kk];
    for d in 0..=deg {
        h[0][d] = if d == 0 { 1.0 } else { h[0][d - 1] * e[0] };
    }
    for l in 1..kk {
        for d in 0..=deg {
            h[l][d] = h[l - 1][d] + if d > 0 { e[l] * h[l][d - 1] } else { 0.0 };
        }
    }
    // Row l holds the divided difference f_j[e_1..e_{l+1}] = Σ_k g_{jk} h_{k−l}(e_1..e_{l+1}).
    let mut m = vec![0.0; kk * kk];
    for l in 0..kk {
        for j in 1..=kk {
            let mut s = 0.0;
            for k in l..=deg {
                s += bessel_poly_coeff(j, k) * h[l][k - l];
            }
            m[l * kk + (j - 1)] = s;
        }
    }
    crate::linalg::det(&m, kk)
}

/// Closed form of the Brezin–Gross–Witten integral `∫ exp(½Tr(C*U* + UC)) dU`:
/// `2^{K(K−1)/2} Π_{j<K} j! det(c_i^{(j−1)/2} I_{j−1}(√c_i)) / Δ(c)`, `c = eval(C*C)`.
pub fn bgw_closed(c: &CMatrix) -> Result<f64, MatError> {
    if c.rows != c.cols {
        return Err(MatError::Domain("BGW needs a square matrix".into()));
    }
    let k = c.rows;
    let e = gram_eigenvalues(c)?;
    let consts: f64 = (k * (k - 1) / 2) as f64 * std::f64::consts::LN_2 + (1..k).map(ln_factorial).sum::<f64>();
    Ok(consts.exp() * bessel_vandermonde_ratio(&e.iter().map(|v| v.max(0.0)).collect::<Vec<_>>()))
}

/// Monte Carlo estimate of the BGW integral against its closed form.
pub fn bgw_check<R: Rng + ?Sized>(c: &CMatrix, samples: usize, rng: &mut R) -> Result<McCheck, MatError> {
    let closed_form = bgw_closed(c)?;
    let (mc_estimate, std_err) = mc(samples, || {
        let u = haar_unitary(c.rows, rng);
        u.matmul(c).trace().re.exp()
    });
    Ok(McCheck { mc_estimate, closed_form, std_err })
}

/// `H_M(X) = det(e_i^{(j−1)/2} I_{j−1}(√e_i)) / Δ_K(e)` with `e = eval(M X M*)`,
/// for `M` of shape `K × N` and Hermitian `X` of size `N`.
pub fn h_m(m: &CMatrix, x: &CMatrix) -> Result<f64, MatError> {
    check_shape(m)?;
    if x.rows != m.cols || x.cols != m.cols {
        return Err(MatError::Domain("X must be N x N".into()));
    }
    let mxm = m.matmul(x).matmul(&m.adjoint());
    let (e, _) = hermitian_eigen(&mxm, EIGEN_TOL, EIGEN_SWEEPS)?;
    Ok(bessel_vandermonde_ratio(&e.iter().map(|v| v.max(0.0)).collect::<Vec<_>>()))
}
