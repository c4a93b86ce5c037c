//! Browser demo. Each exported function takes a JSON request and returns a JSON
//! reply; errors come back as `{"error": "..."}`.

use besqkit::diffspec::{besq_spec, BesselParams};
use besqkit::gibbs::{sample_gibbs, PsiBundle};
use besqkit::kernels::{conditioned_density, noncollision_prob, ChamberPoint, DriftSpectrum};
use besqkit::rng::{StreamId, LANES};
use besqkit::sde::{estimate_noncollision, simulate_half_array, SimConfig};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Density of two non-colliding BESQ particles on a square grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceRequest {
    pub nu: f64,
    pub mu: [f64; 2],
    pub t: f64,
    pub x: [f64; 2],
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Surface {
    pub axis: Vec<f64>,
    /// `values[i][j]` is the density at `(axis[i], axis[j])`, zero when `i >= j`.
    pub values: Vec<Vec<f64>>,
    pub max: f64,
    /// Riemann sum over the grid.
    pub mass: f64,
}

pub fn kernel_surface(req: &SurfaceRequest) -> Result<Surface, String> {
    if !(req.hi > 0.0) || req.n < 2 || req.n > 200 {
        return Err("need hi > 0 and 2 <= n <= 200".into());
    }
    let params = BesselParams::from_nu(req.nu).map_err(|e| e.to_string())?;
    let mu = DriftSpectrum::new(req.mu.to_vec()).map_err(|e| e.to_string())?;
    let x = ChamberPoint::new(req.x.to_vec()).map_err(|e| e.to_string())?;
    let h = req.hi / req.n as f64;
    let axis: Vec<f64> = (0..req.n).map(|i| (i as f64 + 0.5) * h).collect();
    let mut values = vec![vec![0.0; req.n]; req.n];
    let (mut max, mut mass) = (0.0f64, 0.0);
    for i in 0..req.n {
        for j in i + 1..req.n {
            let y = ChamberPoint::new(vec![axis[i], axis[j]]).map_err(|e| e.to_string())?;
            let v = conditioned_density(params, &mu, req.t, &x, &y).map_err(|e| e.to_string())?;
            values[i][j] = v;
            max = max.max(v);
            mass += v * h * h;
        }
    }
    Ok(Surface { axis, values, max, mass })
}

/// Half-array paths started from the Gibbs law over `top`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayRequest {
    pub nu: f64,
    pub mu: Vec<f64>,
    pub top: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArrayPaths {
    pub times: Vec<f64>,
    /// Level of each flattened coordinate, starting at 1.
    pub levels: Vec<usize>,
    /// `paths[c]` is the trajectory of coordinate `c`.
    pub paths: Vec<Vec<f64>>,
}

pub fn half_array_paths(req: &ArrayRequest) -> Result<ArrayPaths, String> {
    if !(req.horizon > 0.0 && req.horizon / req.dt <= 20_000.0) {
        return Err("need horizon > 0 and at most 20000 steps".into());
    }
    let params = BesselParams::from_nu(req.nu).map_err(|e| e.to_string())?;
    let mu = DriftSpectrum::new(req.mu.clone()).map_err(|e| e.to_string())?;
    let top = ChamberPoint::new(req.top.clone()).map_err(|e| e.to_string())?;
    let bundle = PsiBundle::besq(params, &mu, 1.0).map_err(|e| e.to_string())?;
    let stream = StreamId::new(req.seed, 0);
    let init = sample_gibbs(&bundle, &top, &mut stream.rng(LANES - 1)).map_err(|e| e.to_string())?;
    let levels: Vec<usize> = (1..=init.levels()).flat_map(|k| std::iter::repeat_n(k, k.div_ceil(2))).collect();
    let mut cfg = SimConfig::new(req.dt, req.horizon);
    cfg.record_every = ((0.01 / req.dt).round() as usize).max(1);
    let g = simulate_half_array(params, &mu, &init, &cfg, stream).map_err(|e| e.to_string())?;
    let paths = (0..levels.len()).map(|c| g.states.iter().map(|s| s[c]).collect()).collect();
    Ok(ArrayPaths { times: g.times, levels, paths })
}

/// Non-collision probability of two BESQ_λ particles as the upper start moves.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub nu: f64,
    pub lambdas: [f64; 2],
    pub x1: f64,
    pub gaps: Vec<f64>,
    /// Monte Carlo paths per gap; 0 skips simulation.
    #[serde(default)]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub gap: f64,
    pub exact: f64,
    pub simulated: Option<f64>,
    pub std_err: Option<f64>,
}

pub fn noncollision_curve(req: &CurveRequest) -> Result<Vec<CurvePoint>, String> {
    if req.trials > 20_000 {
        return Err("at most 20000 trials".into());
    }
    let params = BesselParams::from_nu(req.nu).map_err(|e| e.to_string())?;
    let spec = besq_spec(params, 1.0).map_err(|e| e.to_string())?;
    req.gaps
        .iter()
        .enumerate()
        .map(|(i, &gap)| {
            let x = ChamberPoint::new(vec![req.x1, req.x1 + gap]).map_err(|e| e.to_string())?;
            let exact = noncollision_prob(&spec, &req.lambdas, &x).map_err(|e| e.to_string())?;
            let (mut simulated, mut std_err) = (None, None);
            if req.trials > 0 {
                let mut cfg = SimConfig::new(1e-2, 100.0);
                cfg.trials = req.trials;
                cfg.seed = req.seed.wrapping_add(i as u64);
                let est = estimate_noncollision(params, &req.lambdas, &x, &cfg).map_err(|e| e.to_string())?;
                simulated = Some(est.probability);
                std_err = Some(est.std_err);
            }
            Ok(CurvePoint { gap, exact, simulated, std_err })
        })
        .collect()
}

fn call<Q: for<'a> Deserialize<'a>, A: Serialize>(json: &str, f: impl FnOnce(&Q) -> Result<A, String>) -> String {
    let out = serde_json::from_str::<Q>(json).map_err(|e| e.to_string()).and_then(|q| f(&q));
    match out {
        Ok(a) => serde_json::to_string(&a).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen(js_name = kernelSurface)]
pub fn kernel_surface_js(request: &str) -> String {
    call(request, kernel_surface)
}

#[wasm_bindgen(js_name = halfArrayPaths)]
pub fn half_array_paths_js(request: &str) -> String {
    call(request, half_array_paths)
}

#[wasm_bindgen(js_name = noncollisionCurve)]
pub fn noncollision_curve_js(request: &str) -> String {
    call(request, noncollision_curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_mass_near_one() {
        let r = kernel_surface(&SurfaceRequest { nu: 1.0, mu: [1.0, 4.0], t: 1.0, x: [1.0, 4.0], hi: 40.0, n: 200 })
            .unwrap();
        assert!((r.mass - 1.0).abs() < 0.02, "{}", r.mass);
        assert!(r.values[5][5] == 0.0 && r.max > 0.0);
    }

    #[test]
    fn paths_interlace() {
        let req = ArrayRequest { nu: 1.0, mu: vec![1.0, 4.0], top: vec![1.0, 4.0], horizon: 0.5, dt: 1e-3, seed: 3 };
        let p = half_array_paths(&req).unwrap();
        assert_eq!(p.levels, [1, 2, 3, 3]);
        assert_eq!(p.times.len(), 51);
        for s in 0..p.times.len() {
            let (x1, x2, x31, x32) = (p.paths[0][s], p.paths[1][s], p.paths[2][s], p.paths[3][s]);
            assert!(x2 >= x1 && x31 <= x2 && x2 <= x32, "{s}");
        }
    }

    #[test]
    fn curve_matches_exact() {
        let req = CurveRequest { nu: 0.0, lambdas: [0.25, 1.0], x1: 1.0, gaps: vec![0.5, 4.0], trials: 2000, seed: 1 };
        let c = noncollision_curve(&req).unwrap();
        assert!(c[0].exact < c[1].exact);
        for p in &c {
            let (s, se) = (p.simulated.unwrap(), p.std_err.unwrap());
            assert!((s - p.exact).abs() < 4.0 * se + 0.01, "{p:?}");
        }
    }

    #[test]
    fn bad_requests_become_error_json() {
        let v: serde_json::Value = serde_json::from_str(&kernel_surface_js("{}")).unwrap();
        assert!(v["error"].is_string());
        let v: serde_json::Value =
            serde_json::from_str(&noncollision_curve_js(r#"{"nu":0,"lambdas":[1,0.5],"x1":1,"gaps":[1]}"#)).unwrap();
        assert!(v["error"].is_string());
    }
}
