use super::*;
use crate::kernels::{besq_density, noncollision_prob, sample_conditioned, ChamberPoint, DriftSpectrum};
use crate::diffspec::besq_spec;
use crate::stats::{cdf_from_density, ks_one_sample, ks_two_sample, mean_se, CdfOpts};
use crate::kernels::log_besq_density_nu;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bp(nu: f64) -> BesselParams {
    BesselParams::from_nu(nu).unwrap()
}

fn endpoints(f: impl Fn(StreamId) -> PathGrid, seed: u64, n: usize) -> Vec<f64> {
    (0..n as u64).map(|t| f(StreamId::new(seed, t)).final_state()[0]).collect()
}

#[test]
fn zero_drift_mean_is_linear() {
    let p = BesselParams::new(2.0).unwrap();
    let cfg = SimConfig::new(1e-2, 1.0);
    let xs = endpoints(|s| simulate_besq_lambda(p, 0.0, 1.0, &cfg, s).unwrap(), 1, 100_000);
    let (m, se) = mean_se(&xs);
    assert!((m - 3.0).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn marginal_matches_transition_density() {
    let p = BesselParams::new(3.0).unwrap();
    let cfg = SimConfig::new(1e-3, 1.0);
    let xs = endpoints(|s| simulate_besq_lambda(p, 0.0, 1.0, &cfg, s).unwrap(), 2, 10_000);
    let cdf = cdf_from_density(
        |y| if y > 0.0 { besq_density(p, 1.0, 1.0, y).unwrap() } else { 0.0 },
        0.0,
        f64::INFINITY,
        CdfOpts { scale: 2.0, resolution: 400, ..CdfOpts::default() },
    )
    .unwrap();
    let r = ks_one_sample(&xs, |y| cdf.cdf(y)).unwrap();
    assert!(r.p_value > 0.001, "{r:?}");
}

#[test]
fn drifted_mean_growth() {
    // E x_t = x0 + δt + 2λt² for the drifted process.
    let p = BesselParams::new(2.0).unwrap();
    let cfg = SimConfig::new(1e-2, 200.0);
    let xs = endpoints(|s| simulate_besq_lambda(p, 0.5, 1.0, &cfg, s).unwrap(), 3, 100);
    let (m, _) = mean_se(&xs);
    let expect = 1.0 + 2.0 * 200.0 + 200.0f64.powi(2);
    assert!((m / expect - 1.0).abs() < 0.05, "{m} vs {expect}");
}

#[test]
fn dual_zero_drift_survivors_match_killed_density() {
    // λ = 0: the dual is BESQ of dimension 2 − δ killed at 0, of index −(ν+1); its
    // sub-density is the index ν+1 density with arguments swapped, and the
    // survival mass is P(Gamma(ν+1) < x0/2t).
    let p = BesselParams::new(3.0).unwrap();
    let x0 = 1.0;
    let cfg = SimConfig::new(1e-3, 1.0);
    let paths: Vec<PathGrid> = (0..6000).map(|t| simulate_dual(p, 0.0, x0, &cfg, StreamId::new(4, t)).unwrap()).collect();
    let surv: Vec<f64> = paths.iter().filter(|g| g.absorbed_at.is_none()).map(|g| g.final_state()[0]).collect();
    let killed = |y: f64| if y > 0.0 { log_besq_density_nu(1.5, 1.0, y, x0).exp() } else { 0.0 };
    let cdf = cdf_from_density(killed, 0.0, f64::INFINITY, CdfOpts { scale: 2.0, resolution: 400, ..CdfOpts::default() }).unwrap();
    let gamma = statrs::distribution::Gamma::new(1.5, 1.0).unwrap();
    let mass = statrs::distribution::ContinuousCDF::cdf(&gamma, 0.5);
    assert!((cdf.total() - mass).abs() < 1e-8, "{} vs {mass}", cdf.total());
    let frac = surv.len() as f64 / paths.len() as f64;
    let se = (frac * (1.0 - frac) / paths.len() as f64).sqrt();
    assert!((frac - cdf.total()).abs() < 4.0 * se + 0.01, "{frac} vs {}", cdf.total());
    let r = ks_one_sample(&surv, |y| cdf.cdf(y)).unwrap();
    assert!(r.p_value > 0.001, "{r:?}");
}

#[test]
fn dual_absorption_is_monotone_in_time() {
    let p = BesselParams::new(2.5).unwrap();
    let cfg = SimConfig::new(1e-3, 4.0);
    let ts: Vec<f64> = (0..2000).filter_map(|t| simulate_dual(p, 0.3, 0.5, &cfg, StreamId::new(5, t)).unwrap().absorbed_at).collect();
    let frac = |h: f64| ts.iter().filter(|&&t| t <= h).count();
    let f: Vec<usize> = [0.5, 1.0, 2.0, 4.0].iter().map(|&h| frac(h)).collect();
    assert!(f.windows(2).all(|w| w[0] <= w[1]), "{f:?}");
    assert!(f[0] > 0 && f[3] < 2000);
}

#[test]
fn simulation_is_deterministic() {
    let p = bp(0.5);
    let mut cfg = SimConfig::new(1e-2, 1.0);
    cfg.record_every = 10;
    let a = simulate_besq_lambda(p, 0.7, 1.0, &cfg, StreamId::new(9, 3)).unwrap();
    let b = simulate_besq_lambda(p, 0.7, 1.0, &cfg, StreamId::new(9, 3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.times.len(), 11);
    let c = simulate_besq_lambda(p, 0.7, 1.0, &cfg, StreamId::new(9, 4)).unwrap();
    assert_ne!(a.final_state(), c.final_state());
}

#[test]
fn bad_configs_rejected() {
    let p = bp(0.5);
    let s = StreamId::new(0, 0);
    assert!(simulate_besq_lambda(p, 0.5, 1.0, &SimConfig::new(0.0, 1.0), s).is_err());
    assert!(simulate_besq_lambda(p, 0.5, 1.0, &SimConfig::new(2.0, 1.0), s).is_err());
    assert!(simulate_besq_lambda(p, -0.5, 1.0, &SimConfig::new(0.1, 1.0), s).is_err());
    assert!(simulate_dual(p, 0.5, 0.0, &SimConfig::new(0.1, 1.0), s).is_err());
}

#[test]
fn weak_error_shrinks_linearly() {
    // Coupled runs: coarse increments are sums of fine ones.
    let p = bp(0.5);
    let drift = LevelDrift::besq(p, 1.0).unwrap();
    let fine = 64usize;
    let levels = [8usize, 16, 32, 64];
    let mut sums = [0.0; 4];
    let paths = 40_000;
    for t in 0..paths {
        let mut rng = StreamId::new(6, t).rng(0);
        let dws: Vec<f64> = (0..fine).map(|_| normal(&mut rng) * (1.0 / fine as f64).sqrt()).collect();
        for (li, &m) in levels.iter().enumerate() {
            let h = 1.0 / m as f64;
            let r = fine / m;
            let mut x = 0.2;
            for c in dws.chunks(r) {
                x = euler(&drift, x, h, c.iter().sum()).max(0.0);
            }
            sums[li] += x;
        }
    }
    let m: Vec<f64> = sums.iter().map(|s| s / paths as f64).collect();
    let d: Vec<f64> = m.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    // Halving the step should roughly halve the change.
    for w in d.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.2 && ratio < 4.0, "{m:?} {d:?}");
    }
}

fn array3() -> HalfArray {
    HalfArray::new(vec![vec![1.0], vec![1.5], vec![0.5, 2.0], vec![1.0, 3.0], vec![0.8, 2.0, 4.0]]).unwrap()
}

#[test]
fn half_array_validation() {
    assert!(HalfArray::new(vec![vec![1.0], vec![0.5]]).is_err());
    assert!(HalfArray::new(vec![vec![1.0], vec![0.5], vec![0.2, 2.0]]).is_err());
    assert!(HalfArray::new(vec![vec![1.0], vec![1.5], vec![2.0, 1.0]]).is_err());
    assert!(HalfArray::new(vec![vec![1.0], vec![1.5, 2.0], vec![0.2, 2.0]]).is_err());
    let a = array3();
    assert_eq!(a.n(), 3);
    assert_eq!(a.edge(), vec![1.0, 1.5, 2.0, 3.0, 4.0]);
    assert_eq!(HalfArray::from_flat(5, &a.flatten()).unwrap(), a);
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(serde_json::from_str::<HalfArray>(&json).unwrap(), a);
}

#[test]
fn half_array_stays_interlaced() {
    let p = bp(0.5);
    let mu = DriftSpectrum::new(vec![0.5, 1.0, 2.0]).unwrap();
    let mut cfg = SimConfig::new(1e-3, 1.0);
    cfg.record_every = 1;
    cfg.boundary_guard = 1e-12;
    for reflection in [Reflection::Mirror, Reflection::Projection] {
        cfg.reflection = reflection;
        for trial in 0..20 {
            let g = simulate_half_array(p, &mu, &array3(), &cfg, StreamId::new(7, trial)).unwrap();
            for s in &g.states {
                let a = HalfArray::from_flat(5, s).unwrap();
                assert!(a.is_interlaced());
            }
            let last = g.pushes.last().unwrap();
            assert!(last.iter().all(|v| *v >= 0.0 && v.is_finite()));
            assert!(last.iter().sum::<f64>() > 0.0);
        }
    }
}

#[test]
fn fold_stays_inside() {
    use super::halfarray::fold;
    assert_eq!(fold(0.5, 0.0, 1.0), 0.5);
    assert_eq!(fold(-0.25, 0.0, 1.0), 0.25);
    assert_eq!(fold(1.25, 0.0, 1.0), 0.75);
    assert_eq!(fold(2.5, 0.0, 1.0), 0.5);
    assert_eq!(fold(-3.0, 1.0, f64::INFINITY), 5.0);
    assert_eq!(fold(7.0, 2.0, 2.0), 2.0);
}

#[test]
fn reflection_schemes_agree_as_dt_shrinks() {
    // Mean of the upper top-row coordinate of a two-level edge system; both
    // schemes converge to the same limit, mirror from closer.
    let p = bp(1.0);
    let mu = DriftSpectrum::new(vec![1.0, 4.0]).unwrap();
    let mean = |reflection: Reflection, dt: f64| {
        let mut cfg = SimConfig::new(dt, 0.5);
        cfg.reflection = reflection;
        let v: Vec<f64> = (0..4000)
            .map(|t| simulate_edge(p, &mu, &[1.0, 1.0, 1.0], &cfg, StreamId::new(31, t)).unwrap().final_state()[2])
            .collect();
        mean_se(&v)
    };
    let (fine, se) = mean(Reflection::Mirror, 2.5e-4);
    let (coarse_m, _) = mean(Reflection::Mirror, 1e-2);
    let (coarse_p, _) = mean(Reflection::Projection, 1e-2);
    // The two coarse runs share their noise, so the comparison is much sharper than `se`.
    assert!((coarse_m - fine).abs() < (coarse_p - fine).abs(), "{coarse_m} {coarse_p} {fine} (se {se})");
    assert!(coarse_p < fine);
}

#[test]
fn single_level_array_is_free_besq() {
    let p = bp(1.0);
    let mu = DriftSpectrum::new(vec![1.4]).unwrap();
    let mut cfg = SimConfig::new(1e-2, 2.0);
    cfg.record_every = 1;
    let init = HalfArray::new(vec![vec![0.7]]).unwrap();
    let s = StreamId::new(8, 2);
    let a = simulate_half_array(p, &mu, &init, &cfg, s).unwrap();
    let b = simulate_besq_lambda(p, 0.7, 0.7, &cfg, s).unwrap();
    assert_eq!(a.states, b.states);
}

#[test]
fn edge_bottom_is_free_besq_and_ordered() {
    let p = bp(0.5);
    let mu = DriftSpectrum::new(vec![1.0, 3.0]).unwrap();
    let mut cfg = SimConfig::new(1e-2, 2.0);
    cfg.record_every = 1;
    let s = StreamId::new(10, 1);
    let g = simulate_edge(p, &mu, &[0.5, 1.0, 1.5], &cfg, s).unwrap();
    let b = simulate_besq_lambda(p, 0.5, 0.5, &cfg, s).unwrap();
    for (x, y) in g.states.iter().zip(&b.states) {
        assert_eq!(x[0], y[0]);
        assert!(x.windows(2).all(|w| w[0] <= w[1]));
    }
    assert!(simulate_edge(p, &mu, &[1.0, 0.5, 1.5], &cfg, s).is_err());
    assert!(simulate_edge(p, &mu, &[1.0, 1.5], &cfg, s).is_err());
}

#[test]
fn pushes_off_gives_independent_diffusions() {
    let p = bp(0.5);
    let mu = DriftSpectrum::new(vec![1.0, 3.0]).unwrap();
    let mut cfg = SimConfig::new(1e-2, 1.0);
    cfg.pushes = false;
    cfg.record_every = 1;
    let init = HalfArray::new(vec![vec![1.0], vec![1.5], vec![0.5, 2.0]]).unwrap();
    let s = StreamId::new(11, 0);
    let g = simulate_half_array(p, &mu, &init, &cfg, s).unwrap();
    let drifts = [
        LevelDrift::besq(p, 0.5).unwrap(),
        LevelDrift::dual(p, 1.5).unwrap(),
        LevelDrift::besq(p, 1.5).unwrap(),
        LevelDrift::besq(p, 1.5).unwrap(),
    ];
    let level_of = [0, 1, 2, 3];
    for j in 0..4 {
        let mut rng = s.rng(j as u64);
        let mut x = init.flatten()[j];
        let d = &drifts[level_of[j]];
        let mut dead = false;
        for (k, st) in g.states.iter().enumerate().skip(1) {
            let dw = 0.1 * normal(&mut rng);
            let _ = k;
            if !dead {
                x = euler(d, x, 0.01, dw);
                if d.is_dual() && x <= 0.0 {
                    dead = true;
                }
                x = x.max(0.0);
            }
            assert_eq!(st[j], x, "coordinate {j}");
        }
    }
}

#[test]
fn conditioned_single_particle_matches_besq() {
    let p = bp(0.5);
    let mu = DriftSpectrum::new(vec![1.2]).unwrap();
    let mut cfg = SimConfig::new(1e-2, 1.0);
    cfg.max_halvings = 0;
    let s = StreamId::new(12, 0);
    let a = simulate_conditioned(p, &mu, &ChamberPoint::new(vec![0.8]).unwrap(), &cfg, s).unwrap();
    let b = simulate_besq_lambda(p, 0.6, 0.8, &cfg, s).unwrap();
    let (x, y) = (a.final_state()[0], b.final_state()[0]);
    assert!((x - y).abs() < 1e-6 * y.max(1.0), "{x} vs {y}");
}

#[test]
fn conditioned_matches_exact_sampler() {
    let p = bp(0.5);
    let mu = DriftSpectrum::new(vec![1.0, 4.0]).unwrap();
    let x0 = ChamberPoint::new(vec![1.0, 4.0]).unwrap();
    let cfg = SimConfig::new(1e-3, 0.5);
    let sims: Vec<Vec<f64>> = (0..800)
        .map(|t| simulate_conditioned(p, &mu, &x0, &cfg, StreamId::new(13, t)).unwrap().final_state().to_vec())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let exact: Vec<Vec<f64>> = (0..3000).map(|_| sample_conditioned(p, &mu, 0.5, &x0, &mut rng).unwrap().coords().to_vec()).collect();
    for k in 0..2 {
        let a: Vec<f64> = sims.iter().map(|s| s[k]).collect();
        let b: Vec<f64> = exact.iter().map(|s| s[k]).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!(r.p_value > 0.001, "coordinate {k}: {r:?}");
    }
    assert!(sims.iter().all(|s| s[0] < s[1]));
}

#[test]
fn conditioned_degenerate_runs() {
    let p = bp(0.0);
    let mu = DriftSpectrum::zero(3);
    let x0 = ChamberPoint::new(vec![0.5, 1.0, 2.0]).unwrap();
    let cfg = SimConfig::new(1e-3, 0.5);
    for t in 0..50 {
        let g = simulate_conditioned(p, &mu, &x0, &cfg, StreamId::new(14, t)).unwrap();
        assert!(g.final_state().windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn noncollision_estimate_matches_closed_form() {
    let p = bp(0.5);
    let lambdas = [0.5, 2.0];
    let x0 = ChamberPoint::new(vec![1.0, 2.0]).unwrap();
    let mut cfg = SimConfig::new(1e-2, 50.0);
    cfg.trials = 4000;
    cfg.seed = 15;
    let est = estimate_noncollision(p, &lambdas, &x0, &cfg).unwrap();
    let exact = noncollision_prob(&besq_spec(p, 1.0).unwrap(), &lambdas, &x0).unwrap();
    assert!(est.allowance <= 0.005, "{est:?}");
    assert!(
        (est.probability - exact).abs() <= 3.0 * est.std_err + est.allowance + 0.01,
        "{est:?} vs {exact}"
    );
}

#[test]
fn noncollision_monotone_in_gap() {
    let p = bp(0.5);
    let lambdas = [0.5, 2.0];
    let mut cfg = SimConfig::new(1e-2, 30.0);
    cfg.trials = 1000;
    cfg.seed = 16;
    let ps: Vec<f64> = [1.2, 1.6, 2.4]
        .iter()
        .map(|&b| estimate_noncollision(p, &lambdas, &ChamberPoint::new(vec![1.0, b]).unwrap(), &cfg).unwrap().probability)
        .collect();
    assert!(ps.windows(2).all(|w| w[0] <= w[1]), "{ps:?}");
}
