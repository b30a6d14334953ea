//! Convolution kernels of power-law and Gamma type, their exact interval
//! integrals and the Beta function.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::beta::ln_beta;

use crate::error::{ensure, Result};
use crate::quadrature::{integrate_smooth, Endpoint, SingularIntegrator};

/// Absolute tolerance for Gamma-kernel interval integrals.
const GAMMA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    PowerLaw,
    Gamma { hurst: f64 },
}

/// k(u) = u^e e^{-βu} for u > 0, zero for u < 0.
///
/// The power-law kernel is the β = 0 case with exponent α; the Gamma kernel
/// uses e = H - 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    shape: Shape,
    exponent: f64,
    decay: f64,
}

impl KernelSpec {
    pub fn power_law(alpha: f64) -> Result<Self> {
        ensure(alpha > -0.5 && alpha < 0.5, || {
            format!("power-law exponent must lie in (-1/2, 1/2), got {alpha}")
        })?;
        Ok(Self {
            shape: Shape::PowerLaw,
            exponent: alpha,
            decay: 0.0,
        })
    }

    /// Power law with any square-integrable exponent e > -1/2, as needed for
    /// the smoother kernels u^{α+H₊} that drive diffusion-type premia.
    pub fn power(exponent: f64) -> Result<Self> {
        ensure(exponent > -0.5 && exponent.is_finite(), || {
            format!("power exponent must exceed -1/2, got {exponent}")
        })?;
        Ok(Self {
            shape: Shape::PowerLaw,
            exponent,
            decay: 0.0,
        })
    }

    pub fn gamma(hurst: f64, beta: f64) -> Result<Self> {
        ensure(hurst > 0.0 && hurst < 1.0, || {
            format!("Gamma-kernel Hurst index must lie in (0, 1), got {hurst}")
        })?;
        ensure(beta >= 0.0 && beta.is_finite(), || {
            format!("Gamma-kernel decay must be finite and nonnegative, got {beta}")
        })?;
        Ok(Self {
            shape: Shape::Gamma { hurst },
            exponent: hurst - 0.5,
            decay: beta,
        })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn hurst(&self) -> Option<f64> {
        match self.shape {
            Shape::Gamma { hurst } => Some(hurst),
            Shape::PowerLaw => None,
        }
    }

    /// Pointwise value. At lag 0 with a negative exponent this is +∞; callers
    /// integrate through the antiderivative instead of evaluating there.
    pub fn eval(&self, lag: f64) -> f64 {
        if lag < 0.0 {
            return 0.0;
        }
        if lag == 0.0 {
            return match self.exponent {
                e if e < 0.0 => f64::INFINITY,
                e if e == 0.0 => 1.0,
                _ => 0.0,
            };
        }
        let base = lag.powf(self.exponent);
        if self.decay == 0.0 {
            base
        } else {
            base * (-self.decay * lag).exp()
        }
    }

    /// ∫_a^b k(t - u) du for 0 ≤ a ≤ b ≤ t.
    pub fn interval_integral(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        ensure(0.0 <= a && a <= b && b <= t, || {
            format!("interval integral needs 0 <= a <= b <= t, got a={a}, b={b}, t={t}")
        })?;
        if a == b {
            return Ok(0.0);
        }
        self.lag_integral(t - b, t - a)
    }

    /// ∫_p^q k(x) dx for 0 ≤ p ≤ q.
    pub fn lag_integral(&self, p: f64, q: f64) -> Result<f64> {
        ensure(0.0 <= p && p <= q, || format!("lag integral needs 0 <= p <= q, got p={p}, q={q}"))?;
        let e1 = self.exponent + 1.0;
        if self.decay == 0.0 {
            return Ok((q.powf(e1) - p.powf(e1)) / e1);
        }
        if p == q {
            return Ok(0.0);
        }
        let beta = self.decay;
        let e = self.exponent;
        if p >= q - p {
            // far enough from the singularity for plain Gauss–Legendre
            return integrate_smooth(|x| x.powf(e) * (-beta * x).exp(), p, q, GAMMA_TOL);
        }
        let rule = singular_left(e)?;
        let upper = rule.integrate(|x| (-beta * x).exp(), 0.0, q, GAMMA_TOL)?;
        let lower = if p > 0.0 {
            rule.integrate(|x| (-beta * x).exp(), 0.0, p, GAMMA_TOL)?
        } else {
            0.0
        };
        Ok(upper - lower)
    }

    /// ∫_p^q k(x)^2 dx for 0 ≤ p ≤ q; requires 2e > -1.
    pub fn squared_lag_integral(&self, p: f64, q: f64) -> Result<f64> {
        let sq = Self {
            shape: Shape::PowerLaw,
            exponent: 2.0 * self.exponent,
            decay: 2.0 * self.decay,
        };
        ensure(sq.exponent > -1.0, || "squared kernel is not integrable".into())?;
        if sq.decay == 0.0 {
            let e1 = sq.exponent + 1.0;
            ensure(0.0 <= p && p <= q, || format!("lag integral needs 0 <= p <= q, got p={p}, q={q}"))?;
            return Ok((q.powf(e1) - p.powf(e1)) / e1);
        }
        sq.lag_integral(p, q)
    }
}

fn singular_left(exponent: f64) -> Result<Arc<SingularIntegrator>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<SingularIntegrator>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(rule) = map.get(&exponent.to_bits()) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(SingularIntegrator::new(exponent, Endpoint::Left)?);
    map.insert(exponent.to_bits(), rule.clone());
    Ok(rule)
}

/// Hurst index H ∈ (0, 1/2) with H₋ = H - 1/2 and H₊ = H + 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderIndices {
    hurst: f64,
}

impl HolderIndices {
    pub fn new(hurst: f64) -> Result<Self> {
        ensure(hurst > 0.0 && hurst < 0.5, || {
            format!("Hurst index must lie in (0, 1/2), got {hurst}")
        })?;
        Ok(Self { hurst })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn minus(&self) -> f64 {
        self.hurst - 0.5
    }

    pub fn plus(&self) -> f64 {
        self.hurst + 0.5
    }

    /// The power-law kernel u^{H₋}.
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::power_law(self.minus()).expect("H₋ always lies in (-1/2, 0)")
    }
}

/// 𝔅(x, y) = Γ(x)Γ(y)/Γ(x+y).
pub fn beta_fn(x: f64, y: f64) -> Result<f64> {
    ensure(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite(), || {
        format!("Beta function needs positive arguments, got ({x}, {y})")
    })?;
    Ok(ln_beta(x, y).exp())
}

/// ∫_u^t (t-s)^{H₋} (s-u)^α ds = 𝔅(α+1, H₊)(t-u)^{α+H₊}.
pub fn kernel_cross_moment(h: HolderIndices, alpha: f64, t: f64, u: f64) -> Result<f64> {
    ensure(alpha > -0.5 && alpha <= 0.0, || {
        format!("cross-moment exponent must lie in (-1/2, 0], got {alpha}")
    })?;
    ensure(0.0 <= u && u <= t, || format!("cross moment needs 0 <= u <= t, got u={u}, t={t}"))?;
    if u == t {
        return Ok(0.0);
    }
    Ok(beta_fn(alpha + 1.0, h.plus())? * (t - u).powf(alpha + h.plus()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::function::gamma::{gamma, gamma_lr};

    #[test]
    fn eval_examples() {
        assert_eq!(KernelSpec::power_law(0.0).unwrap().eval(5.0), 1.0);
        assert_eq!(KernelSpec::power_law(-0.4).unwrap().eval(-1.0), 0.0);
        assert_eq!(KernelSpec::gamma(0.5, 0.0).unwrap().eval(2.0), 1.0);
        assert_eq!(KernelSpec::power_law(-0.4).unwrap().eval(0.0), f64::INFINITY);
        assert_eq!(KernelSpec::power_law(0.3).unwrap().eval(0.0), 0.0);
    }

    #[test]
    fn construction_validates() {
        assert!(KernelSpec::power_law(0.5).is_err());
        assert!(KernelSpec::power_law(-0.5).is_err());
        assert!(KernelSpec::gamma(1.0, 0.0).is_err());
        assert!(KernelSpec::gamma(0.3, -1.0).is_err());
        assert!(HolderIndices::new(0.5).is_err());
    }

    #[test]
    fn interval_integral_examples() {
        let h = HolderIndices::new(0.25).unwrap();
        assert_relative_eq!(h.kernel().interval_integral(1.0, 0.0, 1.0).unwrap(), 4.0 / 3.0, max_relative = 1e-15);
        assert_eq!(h.kernel().interval_integral(1.0, 0.3, 0.3).unwrap(), 0.0);
        assert!(h.kernel().interval_integral(1.0, 0.6, 0.3).is_err());
        assert!(h.kernel().interval_integral(1.0, 0.3, 1.3).is_err());
    }

    #[test]
    fn interval_integral_matches_quadrature() {
        let k = HolderIndices::new(0.1).unwrap().kernel();
        let got = k.interval_integral(2.0, 0.5, 1.5).unwrap();
        let oracle = integrate_smooth(|u| (2.0 - u).powf(-0.4), 0.5, 1.5, 1e-13).unwrap();
        assert_relative_eq!(got, oracle, max_relative = 1e-10);
        assert_relative_eq!(got, (1.5f64.powf(0.6) - 0.5f64.powf(0.6)) / 0.6, max_relative = 1e-14);
    }

    #[test]
    fn gamma_kernel_integral_matches_incomplete_gamma() {
        for &(h, beta, t, a, b) in &[
            (0.1, 2.0, 1.0, 0.0, 1.0),
            (0.3, 0.7, 2.0, 0.5, 1.9),
            (0.7, 5.0, 1.0, 0.2, 0.21),
            (0.05, 1.0, 3.0, 0.0, 2.999),
        ] {
            let k = KernelSpec::gamma(h, beta).unwrap();
            let got = k.interval_integral(t, a, b).unwrap();
            let s = h + 0.5;
            let lower = |x: f64| if x == 0.0 { 0.0 } else { gamma_lr(s, beta * x) * gamma(s) / beta.powf(s) };
            let expected = lower(t - a) - lower(t - b);
            assert!((got - expected).abs() < 1e-10, "{h} {beta}: {got} vs {expected}");
        }
    }

    #[test]
    fn beta_examples() {
        assert_relative_eq!(beta_fn(1.0, 1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(beta_fn(2.0, 1.0).unwrap(), 0.5, max_relative = 1e-14);
        assert!(beta_fn(0.0, 1.0).is_err());
        // defining integral with the singular endpoints absorbed
        let left = SingularIntegrator::new(-0.4, Endpoint::Left).unwrap();
        let right = SingularIntegrator::new(-0.3, Endpoint::Right).unwrap();
        let oracle = left.integrate(|s| (1.0 - s).powf(-0.3), 0.0, 0.5, 1e-14).unwrap()
            + right.integrate(|s| s.powf(-0.4), 0.5, 1.0, 1e-14).unwrap();
        assert_relative_eq!(beta_fn(0.6, 0.7).unwrap(), oracle, max_relative = 1e-12);
    }

    #[test]
    fn cross_moment_examples() {
        let h = HolderIndices::new(0.2).unwrap();
        assert_eq!(kernel_cross_moment(h, -0.3, 1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            kernel_cross_moment(h, -0.3, 1.0, 0.0).unwrap(),
            beta_fn(0.7, 0.7).unwrap(),
            max_relative = 1e-14
        );
        let h = HolderIndices::new(0.3).unwrap();
        assert_relative_eq!(
            kernel_cross_moment(h, -0.2, 2.0, 0.5).unwrap(),
            beta_fn(0.8, 0.8).unwrap() * 1.5f64.powf(0.6),
            max_relative = 1e-14
        );
        assert!(kernel_cross_moment(h, -0.2, 0.5, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn additivity(alpha in -0.49f64..0.49, t in 0.1f64..5.0, x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
            let mut v = [x * t, y * t, z * t];
            v.sort_by(f64::total_cmp);
            let k = KernelSpec::power_law(alpha).unwrap();
            let whole = k.interval_integral(t, v[0], v[2]).unwrap();
            let parts = k.interval_integral(t, v[0], v[1]).unwrap() + k.interval_integral(t, v[1], v[2]).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-14 * whole.abs().max(1.0));
            prop_assert!(whole >= 0.0);
        }

        #[test]
        fn beta_symmetric(x in 0.01f64..10.0, y in 0.01f64..10.0) {
            let a = beta_fn(x, y).unwrap();
            let b = beta_fn(y, x).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * a);
        }

        #[test]
        fn negative_lag_is_zero(alpha in -0.49f64..0.49, lag in -10.0f64..-1e-12) {
            prop_assert_eq!(KernelSpec::power_law(alpha).unwrap().eval(lag), 0.0);
        }
    }
}
