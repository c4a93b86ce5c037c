use super::*;
use crate::quad::{integrate, QuadOpts};
use crate::stats::{cdf_from_density, ks_one_sample, CdfOpts};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bp(nu: f64) -> BesselParams {
    BesselParams::from_nu(nu).unwrap()
}

fn bundle(nu: f64, mu: &[f64], c: f64) -> PsiBundle {
    PsiBundle::besq(bp(nu), &DriftSpectrum::new(mu.to_vec()).unwrap(), c).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_chamber(rng: &mut ChaCha8Rng, n: usize, width: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| 0.05 + width * rng.random::<f64>()).collect();
    v.sort_by(f64::total_cmp);
    v
}

const Q: QuadOpts = QuadOpts { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 4000 };

fn q(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    integrate(f, a, b, Q).unwrap().value
}

#[test]
fn psi_functions_positive() {
    let b = bundle(0.5, &[0.5, 1.0, 3.0, 4.5], 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        for n in 1..=3 {
            let x = random_chamber(&mut rng, n, 8.0);
            assert!(b.log_psi_n(&x).unwrap().is_finite());
            assert!(b.log_psi_tilde(&x).unwrap().is_finite());
            assert!(b.log_psi_bar(&x).unwrap().is_finite());
        }
    }
}

#[test]
fn constant_matches_formula() {
    let b = bundle(1.0, &[0.5, 1.0, 3.0], 2.0);
    // a(c) = 2c = 4, λ = (0.25, 0.5, 1.5)
    let expect = 1.0 / ((1.5 - 0.25) * 4.0 * (1.5 - 0.5) * 4.0);
    assert!(rel(b.log_c(2).unwrap().exp(), expect) < 1e-14);
}

#[test]
fn dual_derivative_matches_finite_differences() {
    let b = bundle(0.5, &[0.5, 2.0], 1.5);
    let s = b.spec().clone();
    let (l1, l2) = (0.25, 1.0);
    let c = 1.5;
    let r = |x: f64| (s.log_psi(l1, x) - s.log_psi(l2, x)).exp();
    for &x in &[0.1, 0.7, 2.0, 5.0, 12.0] {
        let h = 1e-5 * x;
        let dr = (r(x + h) - r(x - h)) / (2.0 * h);
        // dual speed of the ψ_{λ2} transform: ψ(c)² ψ(x)^{-2} s'(x)/a(c)
        let m_hat = (2.0 * (s.log_psi(l2, c) - s.log_psi(l2, x))).exp() * s.scale(x) / s.a(c);
        let v = b.psi_tilde_entry(0, 1, x).unwrap();
        assert!(rel(v, dr / m_hat) < 1e-6, "x={x}: {v} vs {}", dr / m_hat);
    }
}

#[test]
fn eigen_relation_by_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..20 {
        let c = if k % 2 == 0 { 1.0 } else { 2.5 };
        let nu = [0.0, 0.5, 1.0, 2.0][k % 4];
        let b = bundle(nu, &[0.4, 1.7], c);
        let s = b.spec().clone();
        let (l1, l2) = (0.2, 0.85);
        let y = 0.2 + 10.0 * rng.random::<f64>();
        let lc = s.log_psi(l2, c);
        let lhs = q(|x| (s.log_psi(l1, x) + s.log_psi(l2, x) - 2.0 * lc).exp() * s.speed(x), 0.0, y);
        let rhs = b.psi_tilde_entry(0, 1, y).unwrap() / ((l1 - l2) * s.a(c));
        assert!(rel(lhs, rhs) < 1e-8, "y={y}: {lhs} vs {rhs}");
    }
}

fn kernel_mass(b: &PsiBundle, step: KernelStep, y: &[f64]) -> f64 {
    let cells = step.cells(y);
    match cells.len() {
        1 => q(|x| b.log_kernel_density(step, y, &[x]).unwrap().exp(), cells[0].0, cells[0].1),
        2 => q(
            |x1| {
                q(
                    |x2| if x2 > x1 { b.log_kernel_density(step, y, &[x1, x2]).unwrap().exp() } else { 0.0 },
                    cells[1].0,
                    cells[1].1,
                )
            },
            cells[0].0,
            cells[0].1,
        ),
        _ => unreachable!(),
    }
}

#[test]
fn kernels_normalize() {
    // Integrating the kernels is the integral relations Λ Ψ = c Ψ̃ and Λ Ψ̃ = Ψ̄.
    for (nu, c) in [(0.0, 1.0), (0.5, 2.0), (1.5, 0.7)] {
        let b = bundle(nu, &[0.5, 1.0, 3.0], c);
        for (step, y) in [
            (KernelStep::EvenToOdd, vec![2.0]),
            (KernelStep::EvenToOdd, vec![0.8, 3.5]),
            (KernelStep::OddToEven, vec![0.5, 2.5]),
            (KernelStep::OddToEven, vec![0.4, 1.9, 4.2]),
        ] {
            let m = kernel_mass(&b, step, &y);
            assert!((m - 1.0).abs() < 1e-6, "{step:?} {y:?} nu={nu}: {m}");
        }
    }
}

#[test]
fn column_antiderivatives_match_quadrature() {
    let cases = [(bundle(0.5, &[0.5, 1.0, 3.0], 1.0), 2usize), (bundle(1.0, &[0.0, 2.0], 1.0), 1), (bundle(0.0, &[0.0], 1.0), 1)];
    for (b, n) in &cases {
        let n = *n;
        for step in [KernelStep::EvenToOdd, KernelStep::OddToEven] {
            if b.degenerate.is_none() && n + 1 > b.lambdas.len() {
                continue;
            }
            let cols = b.columns(step, n, 0.3, 6.0);
            let at = |x: f64| {
                let (mut f, mut big) = (vec![0.0; n], vec![0.0; n]);
                cols(x, &mut f, &mut big);
                (f, big)
            };
            for (lo, hi) in [(0.3, 1.1), (1.1, 4.0), (2.0, 6.0)] {
                let (bl, bh) = (at(lo).1, at(hi).1);
                for i in 0..n {
                    let want = q(|x| at(x).0[i], lo, hi);
                    assert!(rel(bh[i] - bl[i], want) < 1e-8, "{step:?} i={i} [{lo},{hi}]: {} vs {want}", bh[i] - bl[i]);
                }
            }
        }
    }
}

#[test]
fn integral_relations_directly() {
    // [Λ_{2n,2n−1} Ψ^{(n)}](y) = c_n Ψ̃^{(n)}(y) and [Λ_{2n+1,2n} Ψ̃^{(n)}](y) = Ψ̄^{(n+1)}(y), n = 1.
    let b = bundle(0.5, &[0.6, 2.0], 1.3);
    let s = b.spec().clone();
    let (c, l2) = (1.3, 1.0);
    let lc = s.log_psi(l2, c);
    let y = 2.2;
    let lhs = q(|x| (2.0 * (s.log_psi(l2, x) - lc)).exp() * s.speed(x) * b.log_psi_n(&[x]).unwrap().exp(), 0.0, y);
    let rhs = (b.log_c(1).unwrap() + b.log_psi_tilde(&[y]).unwrap()).exp();
    assert!(rel(lhs, rhs) < 1e-6, "{lhs} vs {rhs}");
    let y2 = [0.9, 3.1];
    let lhs2 = q(
        |x| (2.0 * (lc - s.log_psi(l2, x))).exp() * s.scale(x) / s.a(c) * b.log_psi_tilde(&[x]).unwrap().exp(),
        y2[0],
        y2[1],
    );
    let rhs2 = b.log_psi_bar(&y2).unwrap().exp();
    assert!(rel(lhs2, rhs2) < 1e-6, "{lhs2} vs {rhs2}");
}

#[test]
fn kernel_single_entry_instance() {
    // n = 1 even-to-odd kernel ∝ ψ_{λ2}² m · ψ_{λ1}/ψ_{λ2} on [0, y].
    let b = bundle(1.0, &[1.0, 2.5], 1.0);
    let s = b.spec().clone();
    let y = 3.0;
    let w = |x: f64| (s.log_psi(0.5, x) + s.log_psi(1.25, x)).exp() * s.speed(x);
    let z = q(w, 0.0, y);
    for &x in &[0.3, 1.1, 2.9] {
        let d = lambda_kernel_density(&b, KernelStep::EvenToOdd, &[y], &[x]).unwrap();
        assert!(rel(d, w(x) / z) < 1e-9);
    }
    assert_eq!(lambda_kernel_density(&b, KernelStep::EvenToOdd, &[y], &[3.5]).unwrap(), 0.0);
}

#[test]
fn kernels_do_not_depend_on_reference_point() {
    let b1 = bundle(0.5, &[0.5, 1.0, 3.0], 1.0);
    let b2 = bundle(0.5, &[0.5, 1.0, 3.0], 2.0);
    for (step, y, x) in [
        (KernelStep::EvenToOdd, vec![2.0], vec![1.3]),
        (KernelStep::EvenToOdd, vec![0.8, 3.5], vec![0.5, 2.0]),
        (KernelStep::OddToEven, vec![0.4, 1.9, 4.2], vec![1.0, 3.0]),
    ] {
        let a = b1.log_kernel_density(step, &y, &x).unwrap();
        let c = b2.log_kernel_density(step, &y, &x).unwrap();
        assert!((a - c).abs() < 1e-10, "{step:?}: {a} vs {c}");
    }
}

fn random_arrays(b: &PsiBundle, count: usize, seed: u64) -> Vec<HalfArray> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let top = ChamberPoint::new(random_chamber(&mut rng, b.n(), 10.0)).unwrap();
            sample_gibbs(b, &top, &mut rng).unwrap()
        })
        .collect()
}

#[test]
fn explicit_density_equals_kernel_product() {
    let b = bundle(0.5, &[0.5, 1.0, 3.0], 1.0);
    let log_top = |x: &[f64]| -x.iter().sum::<f64>();
    for a in random_arrays(&b, 100, 3) {
        let e = log_gibbs_density(&b, &a, &log_top).unwrap();
        let p = log_gibbs_density_product(&b, &a, &log_top).unwrap();
        assert!((e - p).abs() < 1e-10 * e.abs().max(1.0), "{e} vs {p}");
    }
}

#[test]
fn gibbs_density_reference_point_invariance() {
    let b1 = bundle(1.0, &[0.5, 1.0, 3.0], 1.0);
    let b2 = bundle(1.0, &[0.5, 1.0, 3.0], 2.0);
    let log_top = |_: &[f64]| 0.0;
    for a in random_arrays(&b1, 100, 4) {
        let x = gibbs_density(&b1, &a, &log_top).unwrap();
        let y = gibbs_density(&b2, &a, &log_top).unwrap();
        assert!(rel(x, y) < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn single_row_reduces_to_top_density() {
    let b = bundle(0.5, &[0.7], 1.0);
    let a = HalfArray::new(vec![vec![1.7]]).unwrap();
    let v = log_gibbs_density(&b, &a, &|x| -x[0]).unwrap();
    assert!((v + 1.7).abs() < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = sample_gibbs(&b, &ChamberPoint::new(vec![1.7]).unwrap(), &mut rng).unwrap();
    assert_eq!(s, a);
}

#[test]
fn samples_interlace_with_finite_density() {
    let b = bundle(0.0, &[0.5, 1.0, 3.0, 5.0], 1.0);
    for a in random_arrays(&b, 200, 5) {
        assert!(a.is_strictly_interlaced());
        assert!(log_gibbs_density(&b, &a, &|_| 0.0).unwrap().is_finite());
    }
}

fn ks_vs_density(sample: &[f64], dens: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let cdf = cdf_from_density(dens, lo, hi, CdfOpts { resolution: 400, ..CdfOpts::default() }).unwrap();
    assert!((cdf.total() - 1.0).abs() < 1e-6, "mass {}", cdf.total());
    ks_one_sample(sample, |x| cdf.cdf(x)).unwrap().p_value
}

#[test]
fn sampled_rows_match_kernel_densities() {
    let b = bundle(0.5, &[1.0, 4.0], 1.0);
    let top = ChamberPoint::new(vec![1.0, 4.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let arrays: Vec<HalfArray> = (0..10_000).map(|_| sample_gibbs(&b, &top, &mut rng).unwrap()).collect();
    let row2: Vec<f64> = arrays.iter().map(|a| a.row(2)[0]).collect();
    let p = ks_vs_density(&row2, |x| lambda_kernel_density(&b, KernelStep::OddToEven, &[1.0, 4.0], &[x]).unwrap(), 1.0, 4.0);
    assert!(p > 0.01, "row 2: p = {p}");
    let y = [2.5];
    let xs: Vec<f64> = (0..10_000).map(|_| b.sample_kernel(KernelStep::EvenToOdd, &y, &mut rng).unwrap()[0]).collect();
    let p = ks_vs_density(&xs, |x| lambda_kernel_density(&b, KernelStep::EvenToOdd, &y, &[x]).unwrap(), 0.0, 2.5);
    assert!(p > 0.01, "row 1 given row 2: p = {p}");
}

#[test]
fn two_coordinate_kernel_marginals() {
    let b = bundle(0.5, &[0.5, 1.0, 3.0], 1.0);
    let y = [0.6, 2.0, 3.5];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<Vec<f64>> = (0..4000).map(|_| b.sample_kernel(KernelStep::OddToEven, &y, &mut rng).unwrap()).collect();
    let d = |x1: f64, x2: f64| b.log_kernel_density(KernelStep::OddToEven, &y, &[x1, x2]).unwrap().exp();
    let m1: Vec<f64> = xs.iter().map(|v| v[0]).collect();
    let p = ks_vs_density(&m1, |x1| q(|x2| d(x1, x2), 2.0, 3.5), 0.6, 2.0);
    assert!(p > 0.001, "first: {p}");
    let m2: Vec<f64> = xs.iter().map(|v| v[1]).collect();
    let p = ks_vs_density(&m2, |x2| q(|x1| d(x1, x2), 0.6, 2.0), 2.0, 3.5);
    assert!(p > 0.001, "second: {p}");
}

#[test]
fn degenerate_constants() {
    let k = degenerate_kernels(bp(0.5), 1.7).unwrap();
    assert_eq!(k.log_h(&[2.3]), 0.0);
    // ĥ^{(n)} = Λ_{2n,2n−1} h^{(n)} and h^{(n+1)} = Λ_{2n+1,2n} ĥ^{(n)} by quadrature.
    let (nu, c): (f64, f64) = (0.5, 1.7);
    let m = |x: f64| x.powf(nu) / (2.0 * c.powf(nu + 1.0));
    let m_hat = |x: f64| c.powf(nu) * x.powf(-(nu + 1.0)) / 2.0;
    let y = 2.3;
    let lhs = q(m, 0.0, y);
    assert!(rel(lhs, k.log_h_hat(&[y]).exp()) < 1e-10);
    let y2 = [0.7, 2.9];
    let lhs = q(|x| m_hat(x) * k.log_h_hat(&[x]).exp(), y2[0], y2[1]);
    assert!(rel(lhs, k.log_h(&y2).exp()) < 1e-10);
    let lhs = q(|a| q(|b| m(a) * m(b) * k.log_h(&[a, b]).exp(), y2[0], y2[1]), 0.0, y2[0]);
    assert!(rel(lhs, k.log_h_hat(&y2).exp()) < 1e-9);
}

#[test]
fn degenerate_kernels_normalize() {
    let b = PsiBundle::besq(bp(1.0), &DriftSpectrum::zero(3), 1.0).unwrap();
    for (step, y) in [
        (KernelStep::EvenToOdd, vec![2.0]),
        (KernelStep::EvenToOdd, vec![0.8, 3.5]),
        (KernelStep::OddToEven, vec![0.5, 2.5]),
        (KernelStep::OddToEven, vec![0.4, 1.9, 4.2]),
    ] {
        let m = kernel_mass(&b, step, &y);
        assert!((m - 1.0).abs() < 1e-6, "{step:?}: {m}");
    }
    for a in random_arrays(&b, 50, 8) {
        assert!(a.is_strictly_interlaced());
        assert!(log_gibbs_density(&b, &a, &|_| 0.0).unwrap().is_finite());
    }
}

#[test]
fn small_drift_kernels_approach_degenerate() {
    let eps = 1e-4;
    let b = bundle(0.5, &[eps, 2.0 * eps], 1.0);
    let d = PsiBundle::besq(bp(0.5), &DriftSpectrum::zero(2), 1.0).unwrap();
    for (step, y, x) in [
        (KernelStep::EvenToOdd, vec![2.0], vec![1.3]),
        (KernelStep::EvenToOdd, vec![5.0], vec![0.2]),
        (KernelStep::OddToEven, vec![0.4, 1.9], vec![1.0]),
    ] {
        let a = lambda_kernel_density(&b, step, &y, &x).unwrap();
        let z = lambda_kernel_density(&d, step, &y, &x).unwrap();
        assert!(rel(a, z) < 1e-3, "{step:?}: {a} vs {z}");
    }
}

#[test]
fn errors_reported() {
    let b = bundle(0.5, &[0.5, 1.0], 1.0);
    assert!(b.log_kernel_density(KernelStep::EvenToOdd, &[2.0, 1.0], &[0.5, 1.5]).is_err());
    assert!(b.log_kernel_density(KernelStep::OddToEven, &[1.0, 2.0], &[0.5, 1.5]).is_err());
    assert!(b.log_psi_tilde(&[1.0, 2.0]).is_err());
    let d = PsiBundle::besq(bp(0.5), &DriftSpectrum::zero(2), 1.0).unwrap();
    assert!(matches!(d.log_psi_n(&[1.0]), Err(GibbsError::DegenerateSpectrum)));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sample_gibbs(&b, &ChamberPoint::new(vec![1.0]).unwrap(), &mut rng).is_err());
}
