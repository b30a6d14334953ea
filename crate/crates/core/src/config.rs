//! Flat TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cir::{CirParams, RiccatiForm};
use crate::curve::PiecewiseCurve;
use crate::error::{ensure, Error, Result};
use crate::forecastr::{ForecastOptions, ForecastVariance, TailMode};
use crate::gauss::DriverConfig;
use crate::gfo::VolterraScheme;
use crate::inference::{EstimatorConfig, RhoProxy};
use crate::measure::GirsanovSpec;
use crate::models::{CirPremium, ImpliedPremium, ItoPremium, ModelParams, Normalization, PremiumScale, RiskPremiumSpec};
use crate::premium::PremiumNormalization;

/// Every key is optional; each subcommand checks the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // model
    pub hurst: Option<f64>,
    pub nu: Option<f64>,
    pub rho: Option<f64>,
    pub xi0: Option<f64>,
    pub rate: Option<f64>,
    pub drift: Option<f64>,
    pub s0: Option<f64>,
    /// "raw" or "compensated".
    pub normalization: Option<String>,
    pub variance_floor: Option<f64>,

    // simulation
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub horizon: Option<f64>,
    /// "left" or "hybrid".
    pub scheme: Option<String>,

    // premium under the pricing measure
    /// "zero", "deterministic", "ou", "cir" or "implied".
    pub premium: Option<String>,
    pub premium_knots: Option<Vec<f64>>,
    pub premium_values: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    /// "beta" or "unit".
    pub premium_scale: Option<String>,
    pub kappa: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub y0: Option<f64>,
    pub rho_x: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_bound: Option<f64>,

    // riccati
    pub maturity: Option<f64>,
    /// "feynman-kac", "reversed-speed" or "level-rate".
    pub riccati_form: Option<String>,

    // inputs
    pub vol_series: Option<PathBuf>,
    pub closes: Option<PathBuf>,
    pub quotes: Option<PathBuf>,

    // estimation and forecasting
    pub window: Option<usize>,
    pub window_step: Option<usize>,
    pub max_lag: Option<usize>,
    pub q_set: Option<Vec<f64>>,
    /// "stationary" or "origin".
    pub rho_proxy: Option<String>,
    /// "truncate" or "renormalize".
    pub tail: Option<String>,
    /// "fractional" or "volterra".
    pub forecast_variance: Option<String>,
    /// "lambda", "gamma" or "estimation".
    pub premium_normalization: Option<String>,

    // synthetic inputs for run-pipeline
    pub synthetic_days: Option<usize>,
    pub synthetic_quote_every: Option<usize>,
    pub synthetic_quote_dates: Option<usize>,
    pub synthetic_tenor_days: Option<Vec<u32>>,
    pub synthetic_lambda: Option<Vec<f64>>,

    pub out: Option<PathBuf>,
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing key '{key}'"))
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("unknown value '{value}' for '{key}'"))
}

impl RunConfig {
    /// Parses a TOML document; relative input paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut cfg.vol_series, &mut cfg.closes, &mut cfg.quotes, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for (key, p) in [("vol_series", &cfg.vol_series), ("closes", &cfg.closes), ("quotes", &cfg.quotes)] {
            if let Some(p) = p {
                ensure(p.is_file(), || format!("{key}: {} does not exist", p.display()))
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T> {
        value.ok_or_else(|| missing(key))
    }

    pub fn hurst(&self) -> Result<f64> {
        Self::require(self.hurst, "hurst")
    }

    pub fn nu(&self) -> Result<f64> {
        Self::require(self.nu, "nu")
    }

    pub fn model(&self) -> Result<ModelParams> {
        let normalization = match self.normalization.as_deref().unwrap_or("raw") {
            "raw" => Normalization::Raw,
            "compensated" => Normalization::Compensated,
            other => return Err(bad("normalization", other)),
        };
        let p = ModelParams::flat(
            self.hurst()?,
            self.nu()?,
            self.rho.unwrap_or(0.0),
            self.xi0.unwrap_or(0.04),
            self.rate.unwrap_or(0.0),
            self.drift.unwrap_or(0.0),
            self.s0.unwrap_or(100.0),
        )?
        .with_normalization(normalization)
        .with_variance_floor(self.variance_floor.unwrap_or(0.0));
        p.validate()?;
        Ok(p)
    }

    pub fn scheme(&self) -> Result<VolterraScheme> {
        match self.scheme.as_deref().unwrap_or("hybrid") {
            "hybrid" => Ok(VolterraScheme::Hybrid),
            "left" => Ok(VolterraScheme::LeftPoint),
            other => Err(bad("scheme", other)),
        }
    }

    pub fn driver(&self, params: &ModelParams) -> Result<DriverConfig> {
        let cfg = DriverConfig::new(
            Self::require(self.steps, "steps")?,
            self.horizon.unwrap_or(1.0),
            Self::require(self.paths, "paths")?,
            params.rho,
            params.hurst.hurst(),
            Self::require(self.seed, "seed")?,
        )?
        .with_scheme(self.scheme()?);
        Ok(cfg)
    }

    pub fn cir_params(&self) -> Result<CirParams> {
        CirParams::new(
            Self::require(self.kappa, "kappa")?,
            Self::require(self.theta, "theta")?,
            Self::require(self.sigma, "sigma")?,
            Self::require(self.y0, "y0")?,
        )
    }

    pub fn premium(&self) -> Result<RiskPremiumSpec> {
        let spec = match self.premium.as_deref().unwrap_or("zero") {
            "zero" => RiskPremiumSpec::zero(),
            "deterministic" => {
                let values = self.premium_values.clone().ok_or_else(|| missing("premium_values"))?;
                let knots = match &self.premium_knots {
                    Some(k) => k.clone(),
                    // curves extend flat beyond their last knot
                    None if values.len() == 1 => vec![0.0, 1.0],
                    None => return Err(missing("premium_knots")),
                };
                RiskPremiumSpec::Deterministic(PiecewiseCurve::new(knots, values)?)
            }
            "ou" => {
                let scale = match self.premium_scale.as_deref().unwrap_or("beta") {
                    "beta" => PremiumScale::Beta,
                    "unit" => PremiumScale::Unit,
                    other => return Err(bad("premium_scale", other)),
                };
                RiskPremiumSpec::ItoDiffusion(ItoPremium {
                    alpha: self.alpha.unwrap_or(0.0),
                    scale,
                    kappa: self.kappa.unwrap_or(0.0),
                    theta: self.theta.unwrap_or(0.0),
                    sigma: self.sigma.unwrap_or(1.0),
                    y0: self.y0.unwrap_or(0.0),
                    rho_x: self.rho_x.unwrap_or(0.0),
                })
            }
            "cir" => RiskPremiumSpec::Cir(CirPremium {
                cir: self.cir_params()?,
                rho_x: self.rho_x.unwrap_or(0.0),
            }),
            "implied" => {
                let g = Self::require(self.gamma, "gamma")?;
                RiskPremiumSpec::Implied(ImpliedPremium {
                    gamma: PiecewiseCurve::constant(g),
                    bound: self.gamma_bound.unwrap_or(g.abs()),
                })
            }
            other => return Err(bad("premium", other)),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn girsanov(&self) -> Result<GirsanovSpec> {
        let g = self.gamma.unwrap_or(0.0);
        GirsanovSpec::bounded(PiecewiseCurve::constant(g), self.gamma_bound.unwrap_or(g.abs()))
    }

    pub fn riccati_form(&self) -> Result<RiccatiForm> {
        match self.riccati_form.as_deref().unwrap_or("feynman-kac") {
            "feynman-kac" => Ok(RiccatiForm::FeynmanKac),
            "reversed-speed" => Ok(RiccatiForm::ReversedSpeed),
            "level-rate" => Ok(RiccatiForm::LevelRate),
            other => Err(bad("riccati_form", other)),
        }
    }

    pub fn estimator(&self) -> EstimatorConfig {
        let d = EstimatorConfig::default();
        EstimatorConfig {
            window: self.window.unwrap_or(d.window),
            step: self.window_step.unwrap_or(d.step),
            q_set: self.q_set.clone().unwrap_or(d.q_set),
            max_lag: self.max_lag.unwrap_or(d.max_lag),
        }
    }

    pub fn rho_proxy(&self) -> Result<RhoProxy> {
        match self.rho_proxy.as_deref().unwrap_or("stationary") {
            "stationary" => Ok(RhoProxy::Stationary),
            "origin" => Ok(RhoProxy::Origin),
            other => Err(bad("rho_proxy", other)),
        }
    }

    pub fn forecast_options(&self) -> Result<ForecastOptions> {
        let tail = match self.tail.as_deref().unwrap_or("truncate") {
            "truncate" => TailMode::Truncate,
            "renormalize" => TailMode::Renormalize,
            other => return Err(bad("tail", other)),
        };
        let variance = match self.forecast_variance.as_deref().unwrap_or("fractional") {
            "fractional" => ForecastVariance::Fractional,
            "volterra" => ForecastVariance::Volterra,
            other => return Err(bad("forecast_variance", other)),
        };
        Ok(ForecastOptions { tail, variance })
    }

    pub fn premium_normalization(&self) -> Result<PremiumNormalization> {
        self.premium_normalization.as_deref().unwrap_or("lambda").parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_flat_document() {
        let cfg = RunConfig::from_toml(
            "hurst = 0.1\nnu = 1.5\nrho = -0.7\nsteps = 64\npaths = 10\nseed = 3\npremium = \"deterministic\"\npremium_values = [0.2]\n",
            Path::new("."),
        )
        .unwrap();
        let m = cfg.model().unwrap();
        assert_eq!(m.nu, 1.5);
        assert_eq!(cfg.driver(&m).unwrap().n_steps, 64);
        match cfg.premium().unwrap() {
            RiskPremiumSpec::Deterministic(c) => assert_eq!(c.value_at(5.0), 0.2),
            p => panic!("unexpected {p:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(RunConfig::from_toml("hurts = 0.1\n", Path::new(".")).is_err());
        let cfg = RunConfig::from_toml("hurst = 0.1\nnu = 1.0\nscheme = \"midpoint\"\n", Path::new(".")).unwrap();
        assert!(cfg.scheme().is_err());
    }

    #[test]
    fn missing_files_fail_at_load() {
        let err = RunConfig::from_toml("quotes = \"/nonexistent/q.csv\"\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_nu_is_reported() {
        let cfg = RunConfig::from_toml("hurst = 0.1\n", Path::new(".")).unwrap();
        assert!(cfg.model().unwrap_err().to_string().contains("nu"));
    }
}
