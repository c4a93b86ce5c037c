//! Adaptive Gauss–Kronrod quadrature (7/15 points) on finite and semi-infinite
//! intervals, plus nested integration over ordered pairs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: value {value}, error estimate {error}")]
    NoConvergence { value: f64, error: f64 },
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        Self { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 2000 }
    }
}

impl QuadOpts {
    pub fn tol(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel with the QUADPACK error heuristic.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = fc.abs() * WGK[7];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (x1, x2) = (c - dx, c + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite(x2));
        }
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * h;
    let resasc = resasc * h.abs();
    let resabs = resabs * h.abs();
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((value, err))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Adaptive integration of `f` over `[a, b]`, bisecting the worst panel.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOpts,
) -> Result<Integral, QuadError> {
    integrate_panels(&mut f, a, b, opts).map(|(i, _)| i)
}

/// Like [`integrate`] but also returns the final panels `(a, b, value)` sorted by `a`.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    opts: QuadOpts,
) -> Result<(Integral, Vec<(f64, f64, f64)>), QuadError> {
    if a == b {
        return Ok((Integral { value: 0.0, error: 0.0, evals: 0 }, vec![]));
    }
    let (v, e) = gk15(f, a, b)?;
    let mut evals = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if heap.len() >= opts.max_intervals {
            return Err(QuadError::NoConvergence { value: total, error: err });
        }
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // Interval can no longer be split in floating point.
            heap.push(p);
            return Err(QuadError::NoConvergence { value: total, error: err });
        }
        let (v1, e1) = gk15(f, p.a, m)?;
        let (v2, e2) = gk15(f, m, p.b)?;
        evals += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, error: e2 });
    }
    // Re-sum to shed the drift of the running updates.
    let mut panels: Vec<(f64, f64, f64)> = heap.iter().map(|p| (p.a, p.b, p.value)).collect();
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    let value = panels.iter().map(|p| p.2).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok((Integral { value, error, evals }, panels))
}

/// Integral over `[a, ∞)`: panels of doubling width starting at `scale`, stopped once
/// a panel contributes less than `1e-12` of the running total (and less than
/// `abs_tol`) twice in a row.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    scale: f64,
    opts: QuadOpts,
) -> Result<Integral, QuadError> {
    let mut total = 0.0;
    let mut error = 0.0;
    let mut evals = 0;
    let mut lo = a;
    let mut width = scale;
    let mut quiet = 0;
    for _ in 0..200 {
        let hi = lo + width;
        let r = integrate(&mut f, lo, hi, opts)?;
        total += r.value;
        error += r.error;
        evals += r.evals;
        if r.value.abs() <= 1e-12 * total.abs() || r.value.abs() <= opts.abs_tol * 1e-3 {
            quiet += 1;
            if quiet >= 2 {
                return Ok(Integral { value: total, error, evals });
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
    }
    Err(QuadError::NoConvergence { value: total, error })
}

/// `∫_0^∞ dy₁ ∫_{y₁}^∞ dy₂ f(y₁, y₂)`, the integral over the ordered pairs.
pub fn integrate_ordered_pairs<F: Fn(f64, f64) -> f64>(
    f: F,
    scale: f64,
    opts: QuadOpts,
) -> Result<Integral, QuadError> {
    let inner_opts = QuadOpts { abs_tol: opts.abs_tol * 1e-2, rel_tol: opts.rel_tol * 1e-2, ..opts };
    let mut failure = None;
    let outer = integrate_to_infinity(
        |y1| match integrate_to_infinity(|y2| f(y1, y2), y1, scale, inner_opts) {
            Ok(r) => r.value,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        scale,
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    outer
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x - 2.0 * x + 1.0, 0.0, 2.0, QuadOpts::default()).unwrap();
        assert!((r.value - 6.0).abs() < 1e-14);
    }

    #[test]
    fn square_root_endpoint() {
        let r = integrate(|x: f64| x.sqrt(), 0.0, 1.0, QuadOpts::tol(1e-14, 1e-13)).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_tail() {
        // ∫_0^∞ x^{2.5} e^{-x} dx = Γ(3.5)
        let r = integrate_to_infinity(|x: f64| x.powf(2.5) * (-x).exp(), 0.0, 1.0, QuadOpts::default())
            .unwrap();
        let want = 3.323_350_970_447_842_6;
        assert!((r.value - want).abs() < 1e-11);
    }

    #[test]
    fn ordered_pairs_of_exponentials() {
        // ∫∫_{y1<y2} e^{-y1-y2} = 1/2
        let r = integrate_ordered_pairs(|a, b| (-a - b).exp(), 1.0, QuadOpts::tol(1e-12, 1e-10)).unwrap();
        assert!((r.value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn panels_cover_interval() {
        let (_, panels) =
            integrate_panels(&mut |x: f64| (10.0 * x).sin(), 0.0, 3.0, QuadOpts::default()).unwrap();
        assert_eq!(panels.first().unwrap().0, 0.0);
        assert_eq!(panels.last().unwrap().1, 3.0);
        for w in panels.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }
}
