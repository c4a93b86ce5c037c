//! Small dense linear algebra: log-scaled determinants, LU solves, and complex
//! matrices with a cyclic Jacobi Hermitian eigensolver.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
}

/// Determinant as `sign * exp(log_abs)`. `scaled` is the determinant left after the
/// row and column scalings were pulled out; a tiny value there means the matrix is
/// numerically singular rather than just badly scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub sign: f64,
    pub log_abs: f64,
    pub scaled: f64,
}

impl LogDet {
    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }
}

/// Row-major LU factorization with partial pivoting, in place.
/// Returns the permutation parity, or `None` when a pivot is exactly zero.
fn lu_in_place(a: &mut [f64], n: usize, perm: &mut [usize]) -> Option<f64> {
    let mut parity = 1.0;
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k * n + k].abs();
        for i in (k + 1)..n {
            let v = a[i * n + k].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            perm.swap(k, piv);
            parity = -parity;
        }
        let d = a[k * n + k];
        for i in (k + 1)..n {
            let f = a[i * n + k] / d;
            a[i * n + k] = f;
            if f != 0.0 {
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
    }
    Some(parity)
}

/// Determinant of the matrix with entries `sign[i] * exp(log_abs[i])` (row-major).
/// Each row and then each column is rescaled by its largest entry before the LU, so
/// entries spanning hundreds of orders of magnitude are fine.
pub fn log_det_from_logs(log_abs: &[f64], sign: &[f64], n: usize) -> LogDet {
    assert_eq!(log_abs.len(), n * n);
    assert_eq!(sign.len(), n * n);
    if n == 0 {
        return LogDet { sign: 1.0, log_abs: 0.0, scaled: 1.0 };
    }
    let mut offset = 0.0;
    let mut l = log_abs.to_vec();
    for i in 0..n {
        let m = l[i * n..(i + 1) * n]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return LogDet { sign: 0.0, log_abs: f64::NEG_INFINITY, scaled: 0.0 };
        }
        for v in &mut l[i * n..(i + 1) * n] {
            *v -= m;
        }
        offset += m;
    }
    for j in 0..n {
        let m = (0..n).map(|i| l[i * n + j]).fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return LogDet { sign: 0.0, log_abs: f64::NEG_INFINITY, scaled: 0.0 };
        }
        for i in 0..n {
            l[i * n + j] -= m;
        }
        offset += m;
    }
    let mut a: Vec<f64> = l.iter().zip(sign).map(|(&v, &s)| s * v.exp()).collect();
    let mut perm = vec![0; n];
    let Some(parity) = lu_in_place(&mut a, n, &mut perm) else {
        return LogDet { sign: 0.0, log_abs: f64::NEG_INFINITY, scaled: 0.0 };
    };
    let mut s = parity;
    let mut la = 0.0;
    for k in 0..n {
        let d = a[k * n + k];
        if d < 0.0 {
            s = -s;
        }
        la += d.abs().ln();
    }
    LogDet { sign: s, log_abs: la + offset, scaled: la.exp() }
}

/// Determinant of a plain row-major matrix via the log-scaled path.
pub fn log_det(a: &[f64], n: usize) -> LogDet {
    let la: Vec<f64> = a.iter().map(|v| v.abs().ln()).collect();
    let sg: Vec<f64> = a.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
    log_det_from_logs(&la, &sg, n)
}

pub fn det(a: &[f64], n: usize) -> f64 {
    log_det(a, n).value()
}

/// LU factorization kept for repeated solves.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &[f64], n: usize) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::Dimension(format!("{} entries for n = {n}", a.len())));
        }
        let mut a = a.to_vec();
        let mut perm = vec![0; n];
        lu_in_place(&mut a, n, &mut perm).ok_or(LinalgError::Singular)?;
        Ok(Self { n, a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.a[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.a[i * n + k] * x[k];
            }
            x[i] /= self.a[i * n + i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.a[k * n + i] * y[k];
            }
            y[i] /= self.a[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.a[k * n + i] * y[k];
            }
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

/// `Π_{i<j} (x_j - x_i)`.
pub fn vandermonde(x: &[f64]) -> f64 {
    let mut p = 1.0;
    for j in 0..x.len() {
        for i in 0..j {
            p *= x[j] - x[i];
        }
    }
    p
}

/// `log |Π_{i<j} (x_j - x_i)|`.
pub fn log_vandermonde(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..x.len() {
        for i in 0..j {
            s += (x[j] - x[i]).abs().ln();
        }
    }
    s
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, v: &[f64]) -> Self {
        Self { rows, cols, data: v.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    pub fn diag_real(rows: usize, cols: usize, d: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &v) in d.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn matmul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "matmul dimension mismatch");
        let mut m = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..o.cols {
                    m.data[i * o.cols + j] += a * o.data[k * o.cols + j];
                }
            }
        }
        m
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
/// Returns ascending eigenvalues and the unitary whose columns are eigenvectors.
/// Converges when the off-diagonal Frobenius norm drops below `tol * ‖H‖`.
pub fn hermitian_eigen(
    h: &CMatrix,
    tol: f64,
    max_sweeps: usize,
) -> Result<(Vec<f64>, CMatrix), LinalgError> {
    if h.rows != h.cols {
        return Err(LinalgError::Dimension(format!("{}x{} is not square", h.rows, h.cols)));
    }
    let n = h.rows;
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }
    let mut v = CMatrix::identity(n);
    let norm = a.frobenius();
    let off = |a: &CMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let mut converged = norm == 0.0 || off(&a) <= tol * norm;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(LinalgError::NoConvergence(max_sweeps));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let ph = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // J = [[c, s], [-s conj(ph), c conj(ph)]] on the (p, q) plane.
                let jqp = -ph.conj() * s;
                let jqq = ph.conj() * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c + akq * jqp;
                    a[(k, q)] = akp * s + akq * jqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c + aqk * jqp.conj();
                    a[(q, k)] = apk * s + aqk * jqq.conj();
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * jqp;
                    v[(k, q)] = vkp * s + vkq * jqq;
                }
            }
        }
        converged = off(&a) <= tol * norm;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let vals = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vs = CMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vs[(k, new)] = v[(k, old)];
        }
    }
    Ok((vals, vs))
}

/// Thin QR by modified Gram-Schmidt with one re-orthogonalization pass.
/// `R` has a positive real diagonal.
pub fn qr(a: &CMatrix) -> (CMatrix, CMatrix) {
    let (m, n) = (a.rows, a.cols);
    let mut q = a.clone();
    let mut r = CMatrix::zeros(n, n);
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let mut dot = Complex64::new(0.0, 0.0);
                for k in 0..m {
                    dot += q[(k, i)].conj() * q[(k, j)];
                }
                for k in 0..m {
                    let qi = q[(k, i)];
                    q[(k, j)] -= dot * qi;
                }
                r[(i, j)] += dot;
            }
        }
        let norm = (0..m).map(|k| q[(k, j)].norm_sqr()).sum::<f64>().sqrt();
        r[(j, j)] = Complex64::new(norm, 0.0);
        for k in 0..m {
            q[(k, j)] /= norm;
        }
    }
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_matches_cofactor_expansion() {
        let a = [2.0, -1.0, 0.5, 1.0, 3.0, -2.0, 0.25, 4.0, 1.0];
        let want = 2.0 * (3.0 * 1.0 - (-2.0) * 4.0) - (-1.0) * (1.0 * 1.0 - (-2.0) * 0.25)
            + 0.5 * (1.0 * 4.0 - 3.0 * 0.25);
        assert!((det(&a, 3) - want).abs() < 1e-13);
    }

    #[test]
    fn log_det_handles_huge_scales() {
        // diag(e^700, e^-700) with a small coupling stays representable in log space.
        let la = [700.0, 0.0, -5.0, -700.0];
        let sg = [1.0, 1.0, 1.0, 1.0];
        let d = log_det_from_logs(&la, &sg, 2);
        // det = e^0 - e^{-5}
        assert!((d.log_abs - (1.0 - (-5f64).exp()).ln()).abs() < 1e-13);
        assert_eq!(d.sign, 1.0);
    }

    #[test]
    fn lu_solves() {
        let a = [4.0, 1.0, 2.0, 3.0, 5.0, 1.0, 1.0, 1.0, 3.0];
        let lu = Lu::new(&a, 3).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-13);
        }
        let y = lu.solve_transpose(&b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[j * 3 + i] * y[j]).sum();
            assert!((r - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobi_reconstructs() {
        let mut h = CMatrix::zeros(4, 4);
        let vals = [
            (0, 0, 2.0, 0.0),
            (0, 1, 0.5, -1.0),
            (0, 2, 0.1, 0.3),
            (1, 1, -1.0, 0.0),
            (1, 3, 0.7, 0.2),
            (2, 2, 3.0, 0.0),
            (2, 3, -0.4, 0.9),
            (3, 3, 0.5, 0.0),
        ];
        for (i, j, re, im) in vals {
            h[(i, j)] = Complex64::new(re, im);
            h[(j, i)] = Complex64::new(re, -im);
        }
        let (ev, v) = hermitian_eigen(&h, 1e-12, 100).unwrap();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        let d = CMatrix::diag_real(4, 4, &ev);
        let back = v.matmul(&d).matmul(&v.adjoint());
        let err = back.add(&h.scale(-1.0)).frobenius() / h.frobenius();
        assert!(err < 1e-10, "err = {err}");
        let trace: f64 = ev.iter().sum();
        assert!((trace - h.trace().re).abs() < 1e-12);
    }

    #[test]
    fn qr_is_orthonormal() {
        let mut a = CMatrix::zeros(3, 3);
        for (k, z) in a.data.iter_mut().enumerate() {
            *z = Complex64::new((k as f64 * 1.3).sin(), (k as f64 * 0.7).cos());
        }
        let (q, r) = qr(&a);
        let i = q.adjoint().matmul(&q);
        assert!(i.add(&CMatrix::identity(3).scale(-1.0)).frobenius() < 1e-13);
        let back = q.matmul(&r);
        assert!(back.add(&a.scale(-1.0)).frobenius() < 1e-13);
    }
}
