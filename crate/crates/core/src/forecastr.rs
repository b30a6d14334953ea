//! Linear prediction of the Volterra driver from its own past and the
//! induced historical forecast of instantaneous variance.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Result};
use crate::gfo::SampledPath;
use crate::kernels::HolderIndices;
use crate::models::{ModelParams, Normalization};
use crate::quadrature::GaussRule;

const LEGENDRE_NODES: usize = 8;
const JACOBI_NODES: usize = 16;

/// C_H = Γ(3/2-H) / (Γ(H+1/2) Γ(2-2H)).
pub fn c_h(h: f64) -> Result<f64> {
    ensure(h > 0.0 && h < 1.0, || format!("Hurst index must lie in (0, 1), got {h}"))?;
    Ok((ln_gamma(1.5 - h) - ln_gamma(h + 0.5) - ln_gamma(2.0 - 2.0 * h)).exp())
}

/// Treatment of the missing past before the first observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailMode {
    /// Integrate over the available history only.
    #[default]
    Truncate,
    /// Rescale the weights to sum to one, as they do over an infinite past,
    /// so constant histories are forecast exactly.
    Renormalize,
}

/// Which conditional variance accompanies the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForecastVariance {
    /// C_H Δ^{2H}/(2H): the fractional Brownian form.
    #[default]
    Fractional,
    /// Δ^{2H}/(2H): the exact conditional variance of ∫(t-s)^{H₋}dZ_s.
    Volterra,
}

impl ForecastVariance {
    pub fn value(self, h: f64, delta: f64) -> Result<f64> {
        let base = delta.powf(2.0 * h) / (2.0 * h);
        Ok(match self {
            Self::Fractional => c_h(h)? * base,
            Self::Volterra => base,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForecastOptions {
    pub tail: TailMode,
    pub variance: ForecastVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverForecast {
    pub horizon: f64,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastResult {
    pub horizon: f64,
    pub mean: f64,
    pub var: f64,
    pub v_forecast: f64,
}

/// Weights c_k with mean = Σ c_k Z(s_k) for a history on a uniform grid,
/// exact for the piecewise-linear interpolant of the history.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWeights {
    hurst: f64,
    horizon: f64,
    dt: f64,
    weights: Vec<f64>,
    /// Σ c_k before any rescaling.
    mass: f64,
}

impl ForecastWeights {
    pub fn new(h: HolderIndices, dt: f64, n_steps: usize, horizon: f64, tail: TailMode) -> Result<Self> {
        ensure(horizon > 0.0 && horizon.is_finite(), || format!("horizon must be positive, got {horizon}"))?;
        ensure(dt > 0.0 && n_steps >= 1, || "history needs at least one step".into())?;
        let hp = h.plus();
        let t = n_steps as f64 * dt;
        let pre = (h.hurst() * PI).cos() / PI * horizon.powf(hp);
        let mut c = vec![0.0; n_steps + 1];
        let gl = GaussRule::legendre(LEGENDRE_NODES);
        for j in 0..n_steps - 1 {
            let lo = j as f64 * dt;
            let (mut a, mut b) = (0.0, 0.0);
            for (x, w) in gl.nodes().iter().zip(gl.weights()) {
                let theta = 0.5 * (1.0 + x);
                let lag = t - (lo + theta * dt);
                let k = w * 0.5 * dt / ((lag + horizon) * lag.powf(hp));
                a += (1.0 - theta) * k;
                b += theta * k;
            }
            c[j] += a;
            c[j + 1] += b;
        }
        // last cell: the weight (t-s)^{-H₊} goes into the rule
        let gj = GaussRule::jacobi(JACOBI_NODES, -hp, 0.0)?;
        let scale = (0.5 * dt).powf(1.0 - hp);
        let (mut a, mut b) = (0.0, 0.0);
        for (x, w) in gj.nodes().iter().zip(gj.weights()) {
            let theta = 0.5 * (1.0 + x);
            let lag = (1.0 - theta) * dt;
            let k = w * scale / (lag + horizon);
            a += (1.0 - theta) * k;
            b += theta * k;
        }
        c[n_steps - 1] += a;
        c[n_steps] += b;
        c.iter_mut().for_each(|x| *x *= pre);
        let mass: f64 = c.iter().sum();
        if tail == TailMode::Renormalize {
            c.iter_mut().for_each(|x| *x /= mass);
        }
        Ok(Self {
            hurst: h.hurst(),
            horizon,
            dt,
            weights: c,
            mass,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total weight over the available history; tends to one as it grows.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mean(&self, history: &[f64]) -> Result<f64> {
        ensure(history.len() == self.weights.len(), || {
            format!("history has {} points, weights expect {}", history.len(), self.weights.len())
        })?;
        Ok(self.weights.iter().zip(history).map(|(c, z)| c * z).sum())
    }

    pub fn forecast(&self, history: &SampledPath, variance: ForecastVariance) -> Result<DriverForecast> {
        ensure((history.dt() - self.dt).abs() <= 1e-12 * self.dt, || "history grid does not match weights".into())?;
        Ok(DriverForecast {
            horizon: self.horizon,
            mean: self.mean(history.values())?,
            var: variance.value(self.hurst, self.horizon)?,
        })
    }
}

/// Conditional law of Z^H_{t+Δ} given its path on [0, t].
pub fn forecast_driver(history: &SampledPath, horizon: f64, h: HolderIndices, opts: ForecastOptions) -> Result<DriverForecast> {
    let n = history.values().len() - 1;
    ensure(n >= 1, || "history needs at least two points".into())?;
    ForecastWeights::new(h, history.dt(), n, horizon, opts.tail)?.forecast(history, opts.variance)
}

/// ξ₀(t+Δ) times the normalisation factor of the model at t+Δ.
pub fn variance_prefactor(params: &ModelParams, at: f64) -> f64 {
    let comp = match params.normalization {
        Normalization::Raw => 0.0,
        Normalization::Compensated => {
            let h = params.hurst.hurst();
            0.5 * params.nu * params.nu * at.powf(2.0 * h) / (2.0 * h)
        }
    };
    params.xi0.value_at(at) * (-comp).exp()
}

/// Log-normal conditional mean from a driver forecast.
pub fn lognormal_forecast(f: DriverForecast, nu: f64, prefactor: f64) -> ForecastResult {
    ForecastResult {
        horizon: f.horizon,
        mean: f.mean,
        var: f.var,
        v_forecast: prefactor * (nu * f.mean + 0.5 * nu * nu * f.var).exp(),
    }
}

/// E^P[v_{t+Δ} | F_t] with t the end of the history.
pub fn forecast_variance(
    history: &SampledPath,
    horizon: f64,
    params: &ModelParams,
    opts: ForecastOptions,
) -> Result<ForecastResult> {
    let f = forecast_driver(history, horizon, params.hurst, opts)?;
    let t = (history.values().len() - 1) as f64 * history.dt();
    Ok(lognormal_forecast(f, params.nu, variance_prefactor(params, t + horizon)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta_reg;
    use proptest::prelude::*;

    fn hi(h: f64) -> HolderIndices {
        HolderIndices::new(h).unwrap()
    }

    #[test]
    fn c_h_is_one_for_brownian_motion() {
        assert!((c_h(0.5).unwrap() - 1.0).abs() < 1e-14);
        assert!(c_h(0.0).is_err());
    }

    #[test]
    fn zero_history_has_zero_mean() {
        let p = SampledPath::new(0.01, vec![0.0; 101]).unwrap();
        let f = forecast_driver(&p, 0.1, hi(0.2), ForecastOptions::default()).unwrap();
        assert_eq!(f.mean, 0.0);
        assert!(f.var > 0.0);
    }

    #[test]
    fn nonpositive_horizon_is_rejected() {
        let p = SampledPath::new(0.01, vec![0.0; 11]).unwrap();
        assert!(forecast_driver(&p, 0.0, hi(0.2), ForecastOptions::default()).is_err());
        assert!(forecast_driver(&p, -1.0, hi(0.2), ForecastOptions::default()).is_err());
    }

    #[test]
    fn constant_history_mass_is_an_incomplete_beta() {
        // ∫₀ᵗ du/((u+Δ)u^{H₊}) scaled by (cos Hπ/π)Δ^{H₊} is I_{t/(t+Δ)}(1/2-H, H₊)
        for &(h, t, d) in &[(0.1, 1.0, 1.0 / 252.0), (0.3, 2.0, 0.25), (0.45, 0.5, 1.0)] {
            let hh = hi(h);
            let w = ForecastWeights::new(hh, t / 400.0, 400, d, TailMode::Truncate).unwrap();
            let oracle = beta_reg(0.5 - h, hh.plus(), t / (t + d));
            assert!((w.mass() - oracle).abs() < 1e-9, "{h}: {} vs {oracle}", w.mass());
            assert!(w.mass() < 1.0);
        }
    }

    #[test]
    fn renormalized_weights_reproduce_constants() {
        let w = ForecastWeights::new(hi(0.1), 0.01, 100, 0.05, TailMode::Renormalize).unwrap();
        assert!((w.mean(&[2.5; 101]).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_history_variance_forecast() {
        let params = ModelParams::flat(0.3, 1.0, 0.0, 0.04, 0.0, 0.0, 1.0).unwrap();
        let p = SampledPath::new(0.01, vec![0.0; 11]).unwrap();
        let r = forecast_variance(&p, 1.0, &params, ForecastOptions::default()).unwrap();
        let expect = 0.04 * (c_h(0.3).unwrap() / 0.6 / 2.0).exp();
        assert!((r.v_forecast - expect).abs() < 1e-15);
        let flat = ModelParams::flat(0.3, 0.0, 0.0, 0.04, 0.0, 0.0, 1.0).unwrap();
        let hist = SampledPath::new(0.01, (0..11).map(|i| i as f64).collect()).unwrap();
        assert_eq!(forecast_variance(&hist, 1.0, &flat, ForecastOptions::default()).unwrap().v_forecast, 0.04);
    }

    #[test]
    fn volterra_variance_drops_the_constant() {
        let f = ForecastVariance::Fractional.value(0.2, 0.5).unwrap();
        let v = ForecastVariance::Volterra.value(0.2, 0.5).unwrap();
        assert!((f / v - c_h(0.2).unwrap()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn forecast_is_linear(
            a in prop::collection::vec(-2.0f64..2.0, 33),
            b in prop::collection::vec(-2.0f64..2.0, 33),
            c in -3.0f64..3.0,
            h in 0.05f64..0.45,
        ) {
            let w = ForecastWeights::new(hi(h), 1.0 / 32.0, 32, 0.1, TailMode::Truncate).unwrap();
            let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| c * x + y).collect();
            let lhs = w.mean(&combo).unwrap();
            let rhs = c * w.mean(&a).unwrap() + w.mean(&b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
