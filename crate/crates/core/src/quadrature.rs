//! Gauss–Jacobi rules (Golub–Welsch) and adaptive integration of integrands
//! carrying an algebraic endpoint singularity.
//!
//! The singular factor is always absorbed into the Jacobi weight, so no
//! quadrature node ever sits on the singular endpoint.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Error, Result};

const MAX_DEPTH: usize = 48;

/// Nodes and weights on [-1, 1] for the weight (1 - x)^a (1 + x)^b.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn jacobi(n: usize, a: f64, b: f64) -> Result<Self> {
        ensure(n >= 1, || "rule needs at least one node".into())?;
        ensure(a > -1.0 && b > -1.0 && a.is_finite() && b.is_finite(), || {
            format!("jacobi exponents must exceed -1, got ({a}, {b})")
        })?;

        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            jac[(i, i)] = if i == 0 {
                (b - a) / (a + b + 2.0)
            } else {
                let s = 2.0 * i as f64 + a + b;
                (b * b - a * a) / (s * (s + 2.0))
            };
        }
        for i in 1..n {
            let k = i as f64;
            let off = if i == 1 {
                (4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))).sqrt()
            } else {
                let s = 2.0 * k + a + b;
                (4.0 * k * (k + a) * (k + b) * (k + a + b) / (s * s * (s + 1.0) * (s - 1.0))).sqrt()
            };
            jac[(i, i - 1)] = off;
            jac[(i - 1, i)] = off;
        }

        let ln_mu0 = (a + b + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
            - ln_gamma(a + b + 2.0);
        let mu0 = ln_mu0.exp();

        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Ok(Self { nodes, weights })
    }

    pub fn legendre(n: usize) -> Self {
        Self::jacobi(n, 0.0, 0.0).expect("legendre parameters are always valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Σ wᵢ f(xᵢ) on the reference interval.
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_pair() -> &'static (GaussRule, GaussRule) {
    static RULES: OnceLock<(GaussRule, GaussRule)> = OnceLock::new();
    RULES.get_or_init(|| (GaussRule::legendre(10), GaussRule::legendre(20)))
}

fn legendre_on<F: FnMut(f64) -> f64>(rule: &GaussRule, lo: f64, hi: f64, mut f: F) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    half * rule.apply(|x| f(mid + half * x))
}

/// Intervals this narrow relative to their position cannot be refined
/// further without the node coordinates themselves rounding.
fn at_noise_floor(lo: f64, hi: f64) -> bool {
    hi - lo <= 1e3 * f64::EPSILON * lo.abs().max(hi.abs())
}

/// Adaptive Gauss–Legendre integration of a smooth integrand on [lo, hi].
pub fn integrate_smooth<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if hi == lo {
        return Ok(0.0);
    }
    ensure(hi > lo, || format!("empty or reversed interval [{lo}, {hi}]"))?;
    let floor = 1e-15 * legendre_on(&legendre_pair().1, lo, hi, &mut f).abs();
    smooth_rec(&mut f, lo, hi, tol.max(floor), 0)
}

fn smooth_rec<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64, tol: f64, depth: usize) -> Result<f64> {
    let (coarse, fine) = legendre_pair();
    let a = legendre_on(coarse, lo, hi, &mut *f);
    let b = legendre_on(fine, lo, hi, &mut *f);
    if (a - b).abs() <= tol || at_noise_floor(lo, hi) {
        return Ok(b);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Degenerate(format!(
            "adaptive quadrature did not converge on [{lo}, {hi}]"
        )));
    }
    let mid = 0.5 * (lo + hi);
    Ok(smooth_rec(f, lo, mid, 0.5 * tol, depth + 1)? + smooth_rec(f, mid, hi, 0.5 * tol, depth + 1)?)
}

/// Where the algebraic singularity sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Left,
    Right,
}

/// Adaptive integrator for ∫ |x - c|^e f(x) dx with c an endpoint of the
/// interval and f smooth. Rules for the exponent are built once.
#[derive(Debug, Clone)]
pub struct SingularIntegrator {
    exponent: f64,
    side: Endpoint,
    coarse: GaussRule,
    fine: GaussRule,
}

impl SingularIntegrator {
    pub fn new(exponent: f64, side: Endpoint) -> Result<Self> {
        let (a, b) = match side {
            Endpoint::Left => (0.0, exponent),
            Endpoint::Right => (exponent, 0.0),
        };
        Ok(Self {
            exponent,
            side,
            coarse: GaussRule::jacobi(16, a, b)?,
            fine: GaussRule::jacobi(32, a, b)?,
        })
    }

    fn rule_on<F: FnMut(f64) -> f64>(&self, rule: &GaussRule, lo: f64, hi: f64, f: &mut F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        half.powf(self.exponent + 1.0) * rule.apply(|x| f(mid + half * x))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        if hi == lo {
            return Ok(0.0);
        }
        ensure(hi > lo, || format!("empty or reversed interval [{lo}, {hi}]"))?;
        let floor = 1e-15 * self.rule_on(&self.fine, lo, hi, &mut f).abs();
        self.rec(&mut f, lo, hi, tol.max(floor), 0)
    }

    fn rec<F: FnMut(f64) -> f64>(&self, f: &mut F, lo: f64, hi: f64, tol: f64, depth: usize) -> Result<f64> {
        let a = self.rule_on(&self.coarse, lo, hi, f);
        let b = self.rule_on(&self.fine, lo, hi, f);
        if (a - b).abs() <= tol || at_noise_floor(lo, hi) {
            return Ok(b);
        }
        if depth >= MAX_DEPTH {
            return Err(Error::Degenerate(format!(
                "singular quadrature did not converge on [{lo}, {hi}]"
            )));
        }
        let e = self.exponent;
        let mid = 0.5 * (lo + hi);
        match self.side {
            Endpoint::Left => {
                let near = self.rec(f, lo, mid, 0.5 * tol, depth + 1)?;
                let far = integrate_smooth(|x| (x - lo).powf(e) * f(x), mid, hi, 0.5 * tol)?;
                Ok(near + far)
            }
            Endpoint::Right => {
                let far = integrate_smooth(|x| (hi - x).powf(e) * f(x), lo, mid, 0.5 * tol)?;
                let near = self.rec(f, mid, hi, 0.5 * tol, depth + 1)?;
                Ok(near + far)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::legendre(5);
        // degree 9 is the limit for 5 nodes
        let got = rule.apply(|x| x.powi(8) + 3.0 * x.powi(2));
        assert_relative_eq!(got, 2.0 / 9.0 + 2.0, max_relative = 1e-14);
    }

    #[test]
    fn jacobi_weights_sum_to_mu0() {
        let (a, b) = (-0.4, 0.3);
        let rule = GaussRule::jacobi(12, a, b).unwrap();
        let mu0 = (2f64.powf(a + b + 1.0)
            * (ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0)).exp())
        .abs();
        let total: f64 = rule.weights().iter().sum();
        assert_relative_eq!(total, mu0, max_relative = 1e-13);
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn jacobi_rejects_bad_exponent() {
        assert!(GaussRule::jacobi(4, -1.0, 0.0).is_err());
        assert!(GaussRule::jacobi(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn singular_left_power() {
        // ∫_0^2 x^-0.7 e^-x dx via the lower incomplete gamma
        let integ = SingularIntegrator::new(-0.7, Endpoint::Left).unwrap();
        let got = integ.integrate(|x| (-x).exp(), 0.0, 2.0, 1e-13).unwrap();
        let expected = statrs::function::gamma::gamma_lr(0.3, 2.0) * statrs::function::gamma::gamma(0.3);
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn singular_right_with_nearby_pole() {
        // ∫_0^1 (1-x)^-0.5 / (x + 1.01 - 1) ... keep f smooth but steep near the right end
        let integ = SingularIntegrator::new(-0.5, Endpoint::Right).unwrap();
        let got = integ.integrate(|x| 1.0 / (1.05 - x), 0.0, 1.0, 1e-12).unwrap();
        // substitution u = sqrt(1-x): 2 ∫_0^1 du / (u² + 0.05) = 2/sqrt(.05) atan(1/sqrt(.05))
        let r = 0.05f64.sqrt();
        assert_relative_eq!(got, 2.0 / r * (1.0 / r).atan(), max_relative = 1e-11);
    }
}
