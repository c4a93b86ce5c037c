//! One-dimensional diffusions `a(x) d²/dx² + b(x) d/dx` described by their
//! coefficients, increasing eigenfunctions, and scale/speed densities, with the
//! squared Bessel instance, Doob transforms and duals.
//!
//! Eigenfunctions are stored in log form (`log_psi`) because the Bessel
//! eigenfunctions grow like `exp(√(2λx))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{log_phi_unchecked, phi_log_deriv_unchecked};

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecDomainError {
    #[error("dimension must satisfy delta >= 2, got {0}")]
    Dimension(f64),
    #[error("reference point must be positive, got {0}")]
    RefPoint(f64),
    #[error("eigenvalue parameter must be non-negative, got {0}")]
    Lambda(f64),
}

/// Dimension `δ ≥ 2` of a squared Bessel process and its index `ν = δ/2 - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BesselParamsRepr", into = "BesselParamsRepr")]
pub struct BesselParams {
    delta: f64,
    nu: f64,
}

#[derive(Serialize, Deserialize)]
struct BesselParamsRepr {
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    nu: Option<f64>,
}

impl TryFrom<BesselParamsRepr> for BesselParams {
    type Error = String;
    fn try_from(r: BesselParamsRepr) -> Result<Self, String> {
        match (r.delta, r.nu) {
            (Some(d), None) => BesselParams::new(d).map_err(|e| e.to_string()),
            (None, Some(n)) => BesselParams::from_nu(n).map_err(|e| e.to_string()),
            (Some(d), Some(n)) if (d / 2.0 - 1.0 - n).abs() < 1e-12 => {
                BesselParams::new(d).map_err(|e| e.to_string())
            }
            _ => Err("give exactly one of delta or nu (or consistent values)".into()),
        }
    }
}

impl From<BesselParams> for BesselParamsRepr {
    fn from(p: BesselParams) -> Self {
        Self { delta: Some(p.delta), nu: Some(p.nu) }
    }
}

impl BesselParams {
    pub fn new(delta: f64) -> Result<Self, SpecDomainError> {
        if !(delta >= 2.0) || !delta.is_finite() {
            return Err(SpecDomainError::Dimension(delta));
        }
        Ok(Self { delta, nu: delta / 2.0 - 1.0 })
    }

    pub fn from_nu(nu: f64) -> Result<Self, SpecDomainError> {
        Self::new(2.0 * (nu + 1.0))
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// A diffusion on `(0, ∞)` with generator `a f'' + b f'`.
///
/// `log_psi(λ, x)` is the log of a positive increasing eigenfunction with
/// `L ψ_λ = λ ψ_λ`; `psi_log_deriv` is `ψ'_λ/ψ_λ`. The scale and speed densities are
/// normalized at `ref_point` so that `a · speed · scale = 1`.
#[derive(Clone)]
pub struct DiffusionSpec {
    pub a: Fn1,
    pub a_prime: Fn1,
    pub b: Fn1,
    pub log_psi: Fn2,
    pub psi_log_deriv: Fn2,
    pub speed_density: Fn1,
    pub scale_density: Fn1,
    pub ref_point: f64,
    /// Set only on the squared Bessel instance built by [`besq_spec`].
    pub besq: Option<BesselParams>,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("ref_point", &self.ref_point)
            .field("besq", &self.besq)
            .finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    pub fn a(&self, x: f64) -> f64 {
        (self.a)(x)
    }
    pub fn a_prime(&self, x: f64) -> f64 {
        (self.a_prime)(x)
    }
    pub fn b(&self, x: f64) -> f64 {
        (self.b)(x)
    }
    pub fn psi(&self, lambda: f64, x: f64) -> f64 {
        (self.log_psi)(lambda, x).exp()
    }
    pub fn log_psi(&self, lambda: f64, x: f64) -> f64 {
        (self.log_psi)(lambda, x)
    }
    pub fn psi_log_deriv(&self, lambda: f64, x: f64) -> f64 {
        (self.psi_log_deriv)(lambda, x)
    }
    pub fn speed(&self, x: f64) -> f64 {
        (self.speed_density)(x)
    }
    pub fn scale(&self, x: f64) -> f64 {
        (self.scale_density)(x)
    }
    /// Drift of the Doob transform by `ψ_λ`.
    pub fn doob_drift(&self, lambda: f64, x: f64) -> f64 {
        self.b(x) + 2.0 * self.a(x) * self.psi_log_deriv(lambda, x)
    }

    /// Build a diffusion from user-supplied pieces. No eigenfunction solver is
    /// provided; `log_psi` must already satisfy `L ψ_λ = λ ψ_λ`. The speed and
    /// scale densities are obtained from `b/a` by integrating from `ref_point`
    /// numerically.
    pub fn custom(
        a: Fn1,
        a_prime: Fn1,
        b: Fn1,
        log_psi: Fn2,
        psi_log_deriv: Fn2,
        ref_point: f64,
    ) -> Result<Self, SpecDomainError> {
        if !(ref_point > 0.0) {
            return Err(SpecDomainError::RefPoint(ref_point));
        }
        let ratio = {
            let a = a.clone();
            let b = b.clone();
            move |x: f64| b(x) / a(x)
        };
        let log_scale: Fn1 = Arc::new(move |x: f64| {
            let opts = crate::quad::QuadOpts::tol(1e-14, 1e-12);
            let (lo, hi, s) = if x >= ref_point { (ref_point, x, 1.0) } else { (x, ref_point, -1.0) };
            -s * crate::quad::integrate(&ratio, lo, hi, opts).map(|r| r.value).unwrap_or(f64::NAN)
        });
        let ls = log_scale.clone();
        let scale_density: Fn1 = Arc::new(move |x| ls(x).exp());
        let a2 = a.clone();
        let speed_density: Fn1 = Arc::new(move |x| (-log_scale(x)).exp() / a2(x));
        Ok(Self {
            a,
            a_prime,
            b,
            log_psi,
            psi_log_deriv,
            speed_density,
            scale_density,
            ref_point,
            besq: None,
        })
    }
}

/// The squared Bessel process `2x f'' + δ f'` with `ψ_λ = φ_λ^{(ν)}`.
pub fn besq_spec(params: BesselParams, ref_point: f64) -> Result<DiffusionSpec, SpecDomainError> {
    if !(ref_point > 0.0) || !ref_point.is_finite() {
        return Err(SpecDomainError::RefPoint(ref_point));
    }
    let delta = params.delta();
    let nu = params.nu();
    let c = ref_point;
    let half = delta / 2.0;
    Ok(DiffusionSpec {
        a: Arc::new(|x| 2.0 * x),
        a_prime: Arc::new(|_| 2.0),
        b: Arc::new(move |_| delta),
        log_psi: Arc::new(move |l, x| log_phi_unchecked(nu, l, x)),
        psi_log_deriv: Arc::new(move |l, x| phi_log_deriv_unchecked(nu, l, x)),
        speed_density: Arc::new(move |x: f64| x.powf(half - 1.0) / (2.0 * c.powf(half))),
        scale_density: Arc::new(move |x: f64| (c / x).powf(half)),
        ref_point: c,
        besq: Some(params),
    })
}

/// Doob transform by `ψ_λ`: drift `b + 2aψ'_λ/ψ_λ`, speed `ψ_λ² m / ψ_λ(c)²`.
/// Its eigenfunctions are `ψ_{λ+μ}/ψ_λ` with eigenvalue `μ`. `λ = 0` returns the
/// spec unchanged.
pub fn doob_of(spec: &DiffusionSpec, lambda: f64) -> Result<DiffusionSpec, SpecDomainError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SpecDomainError::Lambda(lambda));
    }
    if lambda == 0.0 {
        return Ok(spec.clone());
    }
    let c = spec.ref_point;
    let s = spec.clone();
    let b: Fn1 = {
        let s = s.clone();
        Arc::new(move |x| s.doob_drift(lambda, x))
    };
    let log_psi: Fn2 = {
        let s = s.clone();
        Arc::new(move |mu, x| s.log_psi(lambda + mu, x) - s.log_psi(lambda, x))
    };
    let psi_log_deriv: Fn2 = {
        let s = s.clone();
        Arc::new(move |mu, x| s.psi_log_deriv(lambda + mu, x) - s.psi_log_deriv(lambda, x))
    };
    let log_psi_c = s.log_psi(lambda, c);
    let speed_density: Fn1 = {
        let s = s.clone();
        Arc::new(move |x| (2.0 * (s.log_psi(lambda, x) - log_psi_c)).exp() * s.speed(x))
    };
    let scale_density: Fn1 = {
        let s = s.clone();
        Arc::new(move |x| (2.0 * (log_psi_c - s.log_psi(lambda, x))).exp() * s.scale(x))
    };
    Ok(DiffusionSpec {
        a: s.a.clone(),
        a_prime: s.a_prime.clone(),
        b,
        log_psi,
        psi_log_deriv,
        speed_density,
        scale_density,
        ref_point: c,
        besq: None,
    })
}

/// Dual diffusion `a f'' + (a' - b) f'` with scale `a(c) m` and speed `s'/a(c)`.
/// Its eigenfunctions are `ψ'_λ / s'` (defined for `λ > 0`), with log-derivative
/// `λ / (a ψ'_λ/ψ_λ)`.
pub fn dual_of(spec: &DiffusionSpec) -> DiffusionSpec {
    let s = spec.clone();
    let c = s.ref_point;
    let ac = s.a(c);
    let b: Fn1 = {
        let s = s.clone();
        Arc::new(move |x| s.a_prime(x) - s.b(x))
    };
    let log_psi: Fn2 = {
        let s = s.clone();
        Arc::new(move |l, x| s.log_psi(l, x) + s.psi_log_deriv(l, x).ln() - s.scale(x).ln())
    };
    let psi_log_deriv: Fn2 = {
        let s = s.clone();
        Arc::new(move |l, x| l / (s.a(x) * s.psi_log_deriv(l, x)))
    };
    let scale_density: Fn1 = {
        let s = s.clone();
        Arc::new(move |x| ac * s.speed(x))
    };
    let speed_density: Fn1 = {
        let s = s.clone();
        Arc::new(move |x| s.scale(x) / ac)
    };
    DiffusionSpec {
        a: s.a.clone(),
        a_prime: s.a_prime.clone(),
        b,
        log_psi,
        psi_log_deriv,
        speed_density,
        scale_density,
        ref_point: c,
        besq: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_ratio, phi};
    use proptest::prelude::*;

    fn besq(delta: f64, c: f64) -> DiffusionSpec {
        besq_spec(BesselParams::new(delta).unwrap(), c).unwrap()
    }

    fn eigen_residual(s: &DiffusionSpec, lambda: f64, x: f64) -> f64 {
        let h = 1e-3 * x;
        let p = |y: f64| s.psi(lambda, y);
        let d1 = (p(x + h) - p(x - h)) / (2.0 * h);
        let d2 = (p(x + h) - 2.0 * p(x) + p(x - h)) / (h * h);
        (s.a(x) * d2 + s.b(x) * d1 - lambda * p(x)).abs() / (lambda * p(x)).abs()
    }

    #[test]
    fn delta_two_densities() {
        let s = besq(2.0, 1.0);
        for &x in &[0.3, 1.0, 7.0] {
            assert!((s.scale(x) - 1.0 / x).abs() < 1e-15);
            assert!((s.speed(x) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_zero_is_constant() {
        let s = besq(5.0, 1.0);
        let want = phi(1.5, 0.0, 0.0).unwrap();
        for &x in &[0.0, 1.0, 50.0] {
            assert!((s.psi(0.0, x) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn eigen_residuals() {
        for &delta in &[2.0, 3.0, 6.0] {
            let s = besq(delta, 1.0);
            for &x in &[0.1, 1.0, 10.0] {
                assert!(eigen_residual(&s, 1.0, x) < 1e-5, "delta={delta} x={x}");
            }
        }
    }

    #[test]
    fn doob_drift_matches_bessel_form() {
        let params = BesselParams::new(4.0).unwrap();
        let s = besq_spec(params, 1.0).unwrap();
        let lambda = 0.8;
        let d = doob_of(&s, lambda).unwrap();
        for &x in &[0.01, 0.5, 3.0, 40.0] {
            let z = (2.0 * lambda * x).sqrt();
            let want = 2.0 * (params.nu() + 1.0) + 2.0 * z * bessel_ratio(params.nu(), z).unwrap();
            assert!(((d.b(x) - want) / want).abs() < 1e-12);
            assert!(d.b(x) >= s.b(x));
            let m = s.psi(lambda, x).powi(2) * s.speed(x) / s.psi(lambda, 1.0).powi(2);
            assert!(((d.speed(x) - m) / m).abs() < 1e-10);
        }
    }

    #[test]
    fn doob_zero_is_identity() {
        let s = besq(3.0, 1.0);
        let d = doob_of(&s, 0.0).unwrap();
        assert_eq!(d.b(2.0), s.b(2.0));
        assert_eq!(d.log_psi(0.3, 2.0), s.log_psi(0.3, 2.0));
    }

    #[test]
    fn doob_eigenfunctions() {
        let s = besq(3.0, 1.0);
        let d = doob_of(&s, 0.5).unwrap();
        for &x in &[0.2, 2.0, 8.0] {
            assert!(eigen_residual(&d, 0.7, x) < 1e-5);
        }
    }

    #[test]
    fn dual_is_besq_of_complementary_dimension() {
        for &delta in &[2.0, 3.0, 5.0] {
            let s = besq(delta, 1.0);
            let d = dual_of(&s);
            assert!((d.b(1.7) - (2.0 - delta)).abs() < 1e-15);
            let dd = dual_of(&d);
            assert!((dd.b(1.7) - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn dual_eigenfunctions() {
        let s = besq(3.0, 1.0);
        let d = dual_of(&s);
        for &x in &[0.2, 2.0, 8.0] {
            assert!(eigen_residual(&d, 0.9, x) < 1e-5);
        }
    }

    #[test]
    fn generator_factorization() {
        // L f = (1/m) d/dx [ f' / s' ]
        let s = besq(3.0, 1.5);
        let f1 = |x: f64| x.cos();
        let f2 = |x: f64| -x.sin();
        for &x in &[0.4, 1.0, 3.0] {
            let g = |y: f64| f1(y) / s.scale(y);
            let h = 1e-5;
            let lhs = (g(x + h) - g(x - h)) / (2.0 * h) / s.speed(x);
            let rhs = s.a(x) * f2(x) + s.b(x) * f1(x);
            assert!((lhs - rhs).abs() < 1e-5);
        }
    }

    #[test]
    fn custom_spec_matches_besq_densities() {
        let delta = 3.0;
        let b = besq(delta, 1.0);
        let c = DiffusionSpec::custom(
            b.a.clone(),
            b.a_prime.clone(),
            b.b.clone(),
            b.log_psi.clone(),
            b.psi_log_deriv.clone(),
            1.0,
        )
        .unwrap();
        for &x in &[0.3, 1.0, 4.0] {
            assert!(((c.scale(x) - b.scale(x)) / b.scale(x)).abs() < 1e-10);
            assert!(((c.speed(x) - b.speed(x)) / b.speed(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn params_json_round_trip() {
        let p: BesselParams = serde_json::from_str(r#"{"nu": 1.0}"#).unwrap();
        assert_eq!(p.delta(), 4.0);
        let q: BesselParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, q);
        assert!(serde_json::from_str::<BesselParams>(r#"{"delta": 1.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn speed_scale_identity(delta in 2.0f64..8.0, c in 0.1f64..5.0, x in 0.01f64..50.0, l in 0.0f64..3.0) {
            let s = besq(delta, c);
            for spec in [s.clone(), doob_of(&s, l).unwrap(), dual_of(&s), dual_of(&doob_of(&s, l).unwrap())] {
                let v = spec.a(x) * spec.speed(x) * spec.scale(x);
                prop_assert!((v - 1.0).abs() < 1e-10, "value {}", v);
            }
        }

        #[test]
        fn doob_drift_dominates(delta in 2.0f64..8.0, x in 0.0f64..100.0, l in 0.0f64..5.0) {
            let s = besq(delta, 1.0);
            prop_assert!(s.doob_drift(l, x) >= s.b(x));
        }
    }
}
