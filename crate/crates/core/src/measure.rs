//! Change-of-measure diagnostics: the discrete density process, martingale
//! tests, stopping-level frequencies and the sign condition on ρ∫𝚔χ.

use crate::curve::PiecewiseCurve;
use crate::error::{ensure, Error, Result};
use crate::gauss::DriverConfig;
use crate::gfo::SampledPath;
use crate::mc::MeanEstimate;
use crate::models::{ImpliedPremium, MarketPath, Measure, ModelParams, RiskPremiumSpec, Simulator};

/// Pass threshold in standard errors.
pub const PASS_SE: f64 = 3.0;

/// How the orthogonal market price of risk γ is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaRule {
    /// Deterministic γ with |γ| ≤ bound.
    Bounded { curve: PiecewiseCurve, bound: f64 },
    /// γ_t = scale·log(v_t/ξ₀(t)): state dependent and unbounded.
    Stress { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GirsanovSpec {
    pub gamma: GammaRule,
}

impl GirsanovSpec {
    pub fn bounded(curve: PiecewiseCurve, bound: f64) -> Result<Self> {
        let s = Self {
            gamma: GammaRule::Bounded { curve, bound },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(gamma: f64) -> Self {
        Self {
            gamma: GammaRule::Bounded {
                curve: PiecewiseCurve::constant(gamma),
                bound: gamma.abs(),
            },
        }
    }

    pub fn stress(scale: f64) -> Self {
        Self {
            gamma: GammaRule::Stress { scale },
        }
    }

    pub fn is_stress(&self) -> bool {
        matches!(self.gamma, GammaRule::Stress { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.gamma {
            GammaRule::Bounded { curve, bound } => ensure(curve.max_abs() <= *bound, || {
                format!("gamma reaches {} above its bound {bound}", curve.max_abs())
            }),
            GammaRule::Stress { scale } => ensure(scale.is_finite(), || "stress scale must be finite".into()),
        }
    }

    /// The pricing-measure premium λ = ρχ + ρ̄γ induced by this density.
    pub fn implied_premium(&self) -> Result<RiskPremiumSpec> {
        match &self.gamma {
            GammaRule::Bounded { curve, bound } => Ok(RiskPremiumSpec::Implied(ImpliedPremium {
                gamma: curve.clone(),
                bound: *bound,
            })),
            GammaRule::Stress { .. } => Err(Error::Unsupported(
                "stress gamma has no simulated pricing-measure counterpart".into(),
            )),
        }
    }

    fn gamma_at(&self, sim: &Simulator, i: usize, v: f64) -> Result<f64> {
        match &self.gamma {
            GammaRule::Bounded { curve, bound } => {
                let g = curve.value_at(i as f64 * sim.dt());
                ensure(g.abs() <= *bound, || format!("gamma sample {g} exceeds bound {bound}"))?;
                Ok(g)
            }
            GammaRule::Stress { scale } => Ok(scale * (v / sim.xi_at(i)).ln()),
        }
    }
}

/// Sharpe ratio (r - μ)/√v at each left grid point.
pub fn sharpe_ratio(sim: &Simulator, path: &MarketPath) -> Result<Vec<f64>> {
    let n = sim.config().n_steps;
    (0..n)
        .map(|j| {
            let v = path.v[j];
            ensure(v > 0.0, || format!("variance must be positive for the Sharpe ratio, got {v}"))?;
            Ok((sim.rate_at(j) - sim.drift_at(j)) / v.sqrt())
        })
        .collect()
}

/// Discrete density exp(Σ(χΔW + γΔW⊥) - ½Σ(χ² + γ²)Δ) along a
/// historical-measure path, with left-point integrands.
pub fn radon_nikodym_path(spec: &GirsanovSpec, sim: &Simulator, path: &MarketPath) -> Result<SampledPath> {
    ensure(sim.measure() == Measure::P, || "density is built on historical-measure paths".into())?;
    let dt = sim.dt();
    let chi = sharpe_ratio(sim, path)?;
    let mut out = Vec::with_capacity(chi.len() + 1);
    let mut log_d = 0.0;
    out.push(1.0);
    for (j, c) in chi.iter().enumerate() {
        let g = spec.gamma_at(sim, j, path.v[j])?;
        log_d += c * path.drivers.dw[j] + g * path.drivers.dw_perp[j] - 0.5 * (c * c + g * g) * dt;
        out.push(log_d.exp());
    }
    SampledPath::new(dt, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleReport {
    pub target: f64,
    pub plain: MeanEstimate,
    /// Estimate from antithetic pair averages, when supplied.
    pub antithetic: Option<MeanEstimate>,
    pub z: f64,
    pub pass: bool,
}

/// Mean test against `target` at [`PASS_SE`]; `mirrored` holds the
/// antithetic partners of `samples` in the same order.
pub fn martingale_test(samples: &[f64], mirrored: Option<&[f64]>, target: f64) -> Result<MartingaleReport> {
    ensure(!samples.is_empty(), || "martingale test needs samples".into())?;
    let plain = MeanEstimate::from_samples(samples);
    let antithetic = match mirrored {
        Some(m) => {
            ensure(m.len() == samples.len(), || "antithetic samples must pair up".into())?;
            let pairs: Vec<f64> = samples.iter().zip(m).map(|(a, b)| 0.5 * (a + b)).collect();
            Some(MeanEstimate::from_samples(&pairs))
        }
        None => None,
    };
    let z = plain.z_score(target);
    Ok(MartingaleReport {
        target,
        plain,
        antithetic,
        z,
        pass: z.abs() <= PASS_SE,
    })
}

/// Terminal densities for every path of a historical-measure simulator.
pub fn terminal_densities(spec: &GirsanovSpec, sim: &Simulator, antithetic: bool) -> Result<Vec<f64>> {
    sim.map(antithetic, |_, path| radon_nikodym_path(spec, sim, path).map(|d| d.last()))
        .into_iter()
        .collect()
}

/// Discounted terminal spots S_T e^{-∫r} for every path.
pub fn discounted_terminal_spots(sim: &Simulator, antithetic: bool) -> Vec<f64> {
    let n = sim.config().n_steps;
    let disc = (-sim.discount_exponent(n)).exp();
    sim.map(antithetic, |_, path| path.s[n] * disc)
}

/// The three unit-mean checks: E^P[D_T], E^Q[S̃_T]/S₀ with the implied
/// premium, and E^P[D_T S̃_T]/S₀ on the same historical paths.
pub fn martingale_suite(
    spec: &GirsanovSpec,
    params: &ModelParams,
    cfg: &DriverConfig,
) -> Result<Vec<(&'static str, MartingaleReport)>> {
    let p = Simulator::p_measure(params, cfg)?;
    let d = terminal_densities(spec, &p, false)?;
    let d_anti = terminal_densities(spec, &p, true)?;
    let s0 = params.s0;
    let sp: Vec<f64> = discounted_terminal_spots(&p, false).iter().map(|s| s / s0).collect();
    let weighted: Vec<f64> = d.iter().zip(&sp).map(|(a, b)| a * b).collect();
    let q = Simulator::q_measure(params, &spec.implied_premium()?, cfg)?;
    let sq: Vec<f64> = discounted_terminal_spots(&q, false).iter().map(|s| s / s0).collect();
    let sq_anti: Vec<f64> = discounted_terminal_spots(&q, true).iter().map(|s| s / s0).collect();
    Ok(vec![
        ("density", martingale_test(&d, Some(&d_anti), 1.0)?),
        ("discounted_spot_q", martingale_test(&sq, Some(&sq_anti), 1.0)?),
        ("weighted_spot_p", martingale_test(&weighted, None, 1.0)?),
    ])
}

/// Frequency of sup_t Y_t ≥ n for each level, with Y the simulated Volterra
/// path of the simulator's own driver.
pub fn stopped_process_diagnostics(sim: &Simulator, levels: &[f64]) -> Result<Vec<(f64, f64)>> {
    ensure(levels.windows(2).all(|w| w[0] < w[1]), || "levels must be strictly increasing".into())?;
    let zw = sim.z_weights();
    let sups = sim.map(false, |_, path| {
        zw.convolve(&path.drivers.dz, &path.drivers.eps)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let n = sups.len() as f64;
    Ok(levels
        .iter()
        .map(|&l| (l, sups.iter().filter(|&&s| s >= l).count() as f64 / n))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignConditionReport {
    /// Largest sup_t ρ∫₀ᵗ𝚔(t-u)χ_u du over paths.
    pub worst: f64,
    /// Fraction of paths where the supremum is positive.
    pub violation_rate: f64,
}

/// Evaluates sup_t ρ∫₀ᵗ𝚔(t-u)χ_u du pathwise; reports, never decides.
pub fn sign_condition(sim: &Simulator) -> Result<SignConditionReport> {
    let zw = sim.z_weights();
    let rho = sim.params().rho;
    let dt = sim.dt();
    let n = sim.config().n_steps;
    let sups = sim
        .map(false, |_, path| {
            let chi = sharpe_ratio(sim, path)?;
            Ok((1..=n)
                .map(|i| rho * (0..i).map(|j| zw.drift_weight(i - j) * chi[j]).sum::<f64>() * dt)
                .fold(0.0, f64::max))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let tol = 1e-12;
    Ok(SignConditionReport {
        worst: sups.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        violation_rate: sups.iter().filter(|&&s| s > tol).count() as f64 / sups.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(rate: f64, drift: f64, paths: usize) -> Simulator {
        let params = ModelParams::flat(0.1, 1.5, -0.7, 0.04, rate, drift, 100.0)
            .unwrap()
            .with_variance_floor(1e-3);
        let cfg = DriverConfig::new(32, 1.0, paths, -0.7, 0.1, 17).unwrap();
        Simulator::p_measure(&params, &cfg).unwrap()
    }

    #[test]
    fn no_premium_gives_unit_density() {
        let sim = setup(0.02, 0.02, 4);
        let spec = GirsanovSpec::constant(0.0);
        let path = sim.path(0, false);
        let d = radon_nikodym_path(&spec, &sim, &path).unwrap();
        assert!(d.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn equal_drifts_leave_only_the_orthogonal_part() {
        let sim = setup(0.02, 0.02, 2);
        let spec = GirsanovSpec::constant(0.4);
        let path = sim.path(1, false);
        let d = radon_nikodym_path(&spec, &sim, &path).unwrap();
        let dt = sim.dt();
        let expected: f64 = path.drivers.dw_perp.iter().map(|w| 0.4 * w - 0.08 * dt).sum::<f64>().exp();
        assert!((d.last() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn constant_gamma_density_has_unit_mean() {
        let sim = setup(0.02, 0.02, 20_000);
        let spec = GirsanovSpec::constant(0.5);
        let d = terminal_densities(&spec, &sim, false).unwrap();
        let report = martingale_test(&d, None, 1.0).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn one_step_conditional_mean_is_one() {
        // freeze the path before t_i and redraw the increments of step i
        let sim = setup(0.05, 0.01, 1);
        let spec = GirsanovSpec::constant(0.3);
        let mut path = sim.path(0, false);
        let i = 10;
        let sd = sim.dt().sqrt();
        let mut rng = crate::gauss::rng_stream(99, 0);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| {
                path.drivers.dw[i] = sd * crate::gauss::standard_normal(&mut rng);
                path.drivers.dw_perp[i] = sd * crate::gauss::standard_normal(&mut rng);
                let d = radon_nikodym_path(&spec, &sim, &path).unwrap();
                d.values()[i + 1] / d.values()[i]
            })
            .collect();
        assert!(martingale_test(&draws, None, 1.0).unwrap().pass);
    }

    #[test]
    fn out_of_bound_gamma_is_rejected() {
        assert!(GirsanovSpec::bounded(PiecewiseCurve::constant(0.5), 0.3).is_err());
    }

    #[test]
    fn martingale_report_on_constants() {
        let r = martingale_test(&[1.0; 1000], Some(&[1.0; 1000]), 1.0).unwrap();
        assert_eq!(r.z, 0.0);
        assert!(r.pass);
        assert_eq!(r.antithetic.unwrap().mean, 1.0);
    }

    #[test]
    fn stopping_frequencies() {
        let sim = setup(0.0, 0.0, 500);
        let f = stopped_process_diagnostics(&sim, &[0.0, 1.0, 2.0, 1e6]).unwrap();
        assert_eq!(f[0].1, 1.0);
        assert_eq!(f[3].1, 0.0);
        assert!(f.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(stopped_process_diagnostics(&sim, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sign_condition_holds_when_drift_is_below_rate() {
        let sim = setup(0.05, 0.01, 50);
        let r = sign_condition(&sim).unwrap();
        assert_eq!(r.violation_rate, 0.0);
        let sim = setup(0.01, 0.05, 50);
        assert_eq!(sign_condition(&sim).unwrap().violation_rate, 1.0);
    }
}
