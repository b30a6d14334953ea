//! Rough Bergomi dynamics under the historical and pricing measures, in
//! forward-variance form, with several risk-premium specifications.

use crate::cir::CirParams;
use crate::curve::PiecewiseCurve;
use crate::error::{ensure, Error, Result};
use crate::gauss::{normals, rng_substream, Component, DriverConfig, DriverPath};
use crate::gfo::{SampledPath, VolterraWeights};
use crate::kernels::{beta_fn, HolderIndices, KernelSpec};
use crate::mc::{map_paths, MeanEstimate};

/// How ψ(t, x) = ξ₀(t)e^{νx} is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// v = ξ₀ exp(ν·x), with E[v_t] = ξ₀(t)e^{ν²Var/2}.
    #[default]
    Raw,
    /// v = ξ₀ exp(ν·x - ν²Var[Z^H_t]/2) with the scheme's own variance, so
    /// that E[v_t] = ξ₀(t) exactly when the premium vanishes.
    Compensated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hurst: HolderIndices,
    pub nu: f64,
    pub rho: f64,
    pub xi0: PiecewiseCurve,
    pub rate: PiecewiseCurve,
    pub drift: PiecewiseCurve,
    pub s0: f64,
    pub normalization: Normalization,
    /// Lower bound applied to v (0 disables it). Keeps ψ bounded away from
    /// the origin and the Sharpe ratio (r-μ)/√v bounded.
    pub variance_floor: f64,
}

impl ModelParams {
    /// Flat curves for ξ₀, r and μ.
    pub fn flat(hurst: f64, nu: f64, rho: f64, xi0: f64, rate: f64, drift: f64, s0: f64) -> Result<Self> {
        let p = Self {
            hurst: HolderIndices::new(hurst)?,
            nu,
            rho,
            xi0: PiecewiseCurve::constant(xi0),
            rate: PiecewiseCurve::constant(rate),
            drift: PiecewiseCurve::constant(drift),
            s0,
            normalization: Normalization::Raw,
            variance_floor: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_variance_floor(mut self, floor: f64) -> Self {
        self.variance_floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.nu >= 0.0 && self.nu.is_finite(), || format!("nu must be nonnegative, got {}", self.nu))?;
        ensure((-1.0..=0.0).contains(&self.rho), || format!("rho must lie in [-1, 0], got {}", self.rho))?;
        ensure(self.xi0.min_value() > 0.0, || "forward variance must be positive".into())?;
        ensure(self.s0 > 0.0, || format!("spot must be positive, got {}", self.s0))?;
        ensure(self.variance_floor >= 0.0, || "variance floor must be nonnegative".into())
    }

    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }
}

/// Multiplier on ∫k_{α+H₊}(t-u)dY_u implied by λ = scale·𝒢^α Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PremiumScale {
    /// λ = 𝔟𝒢^α Y with 𝔟 = 𝔅(H₊, α+1)^{-1}: unit coefficient.
    #[default]
    Beta,
    /// λ = 𝒢^α Y: coefficient 𝔅(α+1, H₊).
    Unit,
}

/// λ = scale·𝒢^α Y with dY = κ(θ - Y)dt + σdX and d⟨X, Z⟩ = ρ_X dt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItoPremium {
    pub alpha: f64,
    pub scale: PremiumScale,
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub y0: f64,
    pub rho_x: f64,
}

impl ItoPremium {
    /// Y = X, a Brownian motion.
    pub fn brownian(alpha: f64, scale: PremiumScale, rho_x: f64) -> Self {
        Self {
            alpha,
            scale,
            kappa: 0.0,
            theta: 0.0,
            sigma: 1.0,
            y0: 0.0,
            rho_x,
        }
    }

    pub fn is_brownian(&self) -> bool {
        self.kappa == 0.0 && self.sigma == 1.0 && self.y0 == 0.0
    }

    pub fn coefficient(&self, h: HolderIndices) -> Result<f64> {
        Ok(match self.scale {
            PremiumScale::Beta => 1.0,
            PremiumScale::Unit => beta_fn(self.alpha + 1.0, h.plus())?,
        })
    }
}

/// λ = Y with Y a CIR process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirPremium {
    pub cir: CirParams,
    pub rho_x: f64,
}

/// λ = ρχ + ρ̄γ with χ = (r - μ)/√v evaluated along the path.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpliedPremium {
    pub gamma: PiecewiseCurve,
    /// |γ| ≤ bound is enforced.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RiskPremiumSpec {
    Deterministic(PiecewiseCurve),
    ItoDiffusion(ItoPremium),
    Cir(CirPremium),
    Implied(ImpliedPremium),
}

impl RiskPremiumSpec {
    pub fn zero() -> Self {
        Self::Deterministic(PiecewiseCurve::constant(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Deterministic(c) => ensure(c.values().iter().all(|v| v.is_finite()), || {
                "deterministic premium must be finite".into()
            }),
            Self::ItoDiffusion(p) => {
                ensure(p.alpha > -0.5 && p.alpha <= 0.0, || {
                    format!("premium exponent must lie in (-1/2, 0], got {}", p.alpha)
                })?;
                ensure(p.sigma >= 0.0 && p.kappa >= 0.0, || "premium diffusion needs kappa, sigma >= 0".into())?;
                ensure((-1.0..=1.0).contains(&p.rho_x), || "premium correlation must lie in [-1, 1]".into())
            }
            Self::Cir(p) => {
                p.cir.validate()?;
                ensure((-1.0..=1.0).contains(&p.rho_x), || "premium correlation must lie in [-1, 1]".into())
            }
            Self::Implied(p) => {
                ensure(p.bound >= 0.0, || "gamma bound must be nonnegative".into())?;
                ensure(p.gamma.max_abs() <= p.bound, || {
                    format!("gamma exceeds its declared bound {}", p.bound)
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    P,
    Q,
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub drivers: DriverPath,
    /// Variance on the grid.
    pub v: Vec<f64>,
    /// Spot on the grid.
    pub s: Vec<f64>,
    /// Premium state Y (diffusion or CIR premia).
    pub y: Option<Vec<f64>>,
    /// Increments of the premium driver X.
    pub dx: Option<Vec<f64>>,
    /// λ on the grid (left points) when path-dependent.
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMarket {
    pub dt: f64,
    pub measure: Measure,
    pub paths: Vec<MarketPath>,
}

impl SimulatedMarket {
    pub fn v_path(&self, p: usize) -> SampledPath {
        SampledPath::new(self.dt, self.paths[p].v.clone()).expect("dt validated")
    }

    pub fn s_path(&self, p: usize) -> SampledPath {
        SampledPath::new(self.dt, self.paths[p].s.clone()).expect("dt validated")
    }
}

enum PremiumState {
    None,
    /// Deterministic drift at each grid index.
    Fixed(Vec<f64>),
    Ito {
        spec: ItoPremium,
        coefficient: f64,
        weights: VolterraWeights,
    },
    Cir {
        spec: CirPremium,
        /// Weights on Y_j and Y_{j+1} at lag m for the exact moments of a
        /// linearly interpolated Y.
        left: Vec<f64>,
        right: Vec<f64>,
    },
    Implied(ImpliedPremium),
}

/// Per-path simulation engine with precomputed weights.
pub struct Simulator {
    params: ModelParams,
    cfg: DriverConfig,
    measure: Measure,
    z_weights: VolterraWeights,
    premium: PremiumState,
    xi: Vec<f64>,
    rate: Vec<f64>,
    mu: Vec<f64>,
    compensation: Vec<f64>,
}

impl Simulator {
    /// Historical measure: zero premium, spot drift μ.
    pub fn p_measure(params: &ModelParams, cfg: &DriverConfig) -> Result<Self> {
        Self::build(params, None, cfg)
    }

    /// Pricing measure with the given premium, spot drift r.
    pub fn q_measure(params: &ModelParams, premium: &RiskPremiumSpec, cfg: &DriverConfig) -> Result<Self> {
        Self::build(params, Some(premium), cfg)
    }

    fn build(params: &ModelParams, premium: Option<&RiskPremiumSpec>, cfg: &DriverConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        if params.hurst != cfg.hurst || params.rho != cfg.rho {
            return Err(Error::Config(format!(
                "model (H={}, rho={}) and driver config (H={}, rho={}) disagree",
                params.hurst.hurst(),
                params.rho,
                cfg.hurst.hurst(),
                cfg.rho
            )));
        }
        let n = cfg.n_steps;
        let dt = cfg.dt();
        let h = params.hurst;
        let z_weights = cfg.volterra_weights()?;
        let grid = |c: &PiecewiseCurve| (0..=n).map(|i| c.value_at(i as f64 * dt)).collect::<Vec<_>>();
        let compensation = match params.normalization {
            Normalization::Raw => vec![0.0; n + 1],
            Normalization::Compensated => (0..=n)
                .map(|i| 0.5 * params.nu * params.nu * z_weights.discrete_variance(i))
                .collect(),
        };
        let (measure, state) = match premium {
            None => (Measure::P, PremiumState::None),
            Some(spec) => {
                spec.validate()?;
                let state = match spec {
                    RiskPremiumSpec::Deterministic(c) if c.is_zero() => PremiumState::None,
                    RiskPremiumSpec::Deterministic(c) => {
                        let k = h.kernel();
                        let d = (0..=n)
                            .map(|i| c.kernel_convolution(&k, i as f64 * dt))
                            .collect::<Result<Vec<_>>>()?;
                        PremiumState::Fixed(d)
                    }
                    RiskPremiumSpec::ItoDiffusion(p) => {
                        let kernel = KernelSpec::power(p.alpha + h.plus())?;
                        PremiumState::Ito {
                            spec: *p,
                            coefficient: p.coefficient(h)?,
                            weights: VolterraWeights::new(&kernel, dt, n, cfg.scheme)?,
                        }
                    }
                    RiskPremiumSpec::Cir(p) => {
                        let (left, right) = linear_moment_weights(h.minus(), dt, n);
                        PremiumState::Cir { spec: *p, left, right }
                    }
                    RiskPremiumSpec::Implied(p) => PremiumState::Implied(p.clone()),
                };
                (Measure::Q, state)
            }
        };
        Ok(Self {
            xi: grid(&params.xi0),
            rate: grid(&params.rate),
            mu: grid(&params.drift),
            params: params.clone(),
            cfg: cfg.clone(),
            measure,
            z_weights,
            premium: state,
            compensation,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &DriverConfig {
        &self.cfg
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn z_weights(&self) -> &VolterraWeights {
        &self.z_weights
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt()
    }

    /// r at grid index i.
    pub fn rate_at(&self, i: usize) -> f64 {
        self.rate[i]
    }

    /// μ at grid index i.
    pub fn drift_at(&self, i: usize) -> f64 {
        self.mu[i]
    }

    /// ξ₀ at grid index i.
    pub fn xi_at(&self, i: usize) -> f64 {
        self.xi[i]
    }

    /// ν²Var/2 subtracted from the exponent at grid index i.
    pub fn compensation(&self, i: usize) -> f64 {
        self.compensation[i]
    }

    /// Part of the CIR drift at t driven by Y before grid index s.
    pub(crate) fn cir_truncated(&self, path: &MarketPath, s: usize, t: usize) -> Result<(CirPremium, f64)> {
        let PremiumState::Cir { spec, left, right } = &self.premium else {
            return Err(Error::Unsupported("simulator does not carry a CIR premium".into()));
        };
        let y = path.y.as_ref().expect("CIR premia record their state");
        let v = (0..s).map(|j| left[t - j] * y[j] + right[t - j] * y[j + 1]).sum();
        Ok((*spec, v))
    }

    /// Σ_{j<i} r_j dt, the discount exponent used by the spot scheme.
    pub fn discount_exponent(&self, i: usize) -> f64 {
        self.rate[..i].iter().sum::<f64>() * self.dt()
    }

    fn variance(&self, i: usize, x: f64) -> f64 {
        let v = self.xi[i] * (self.params.nu * x - self.compensation[i]).exp();
        v.max(self.params.variance_floor)
    }

    fn premium_driver(&self, p: u64, antithetic: bool, dz: &[f64], rho_x: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.cfg.n_steps;
        let dt = self.dt();
        let perp = normals(&mut rng_substream(self.cfg.seed, p, Component::Premium), n, dt.sqrt(), antithetic);
        let rb = (1.0 - rho_x * rho_x).max(0.0).sqrt();
        let dx = dz.iter().zip(&perp).map(|(z, q)| rho_x * z + rb * q).collect();
        let eps = if self.z_weights.needs_extra_normals() {
            normals(&mut rng_substream(self.cfg.seed, p, Component::PremiumHybrid), n, 1.0, antithetic)
        } else {
            Vec::new()
        };
        (dx, eps)
    }

    fn spot_path(&self, v: &[f64], dw: &[f64]) -> Vec<f64> {
        let dt = self.dt();
        let growth = match self.measure {
            Measure::P => &self.mu,
            Measure::Q => &self.rate,
        };
        let mut s = Vec::with_capacity(v.len());
        let mut log_s = self.params.s0.ln();
        s.push(self.params.s0);
        for j in 0..dw.len() {
            log_s += (growth[j] - 0.5 * v[j]) * dt + v[j].sqrt() * dw[j];
            s.push(log_s.exp());
        }
        s
    }

    /// Full path: drivers, premium state, variance and spot.
    pub fn path(&self, p: u64, antithetic: bool) -> MarketPath {
        let drivers = DriverPath::draw(&self.cfg, p, antithetic);
        let n = self.cfg.n_steps;
        let dt = self.dt();
        let zw = &self.z_weights;
        let mut y = None;
        let mut dx_out = None;
        let mut lambda = None;
        let v: Vec<f64> = match &self.premium {
            PremiumState::None => (0..=n)
                .map(|i| self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps)))
                .collect(),
            PremiumState::Fixed(d) => (0..=n)
                .map(|i| self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps) + d[i]))
                .collect(),
            PremiumState::Ito { spec, coefficient, weights } => {
                let (dx, eps_y) = self.premium_driver(p, antithetic, &drivers.dz, spec.rho_x);
                let yp = ou_path(spec, dt, &dx);
                let dy: Vec<f64> = yp.windows(2).map(|w| w[1] - w[0]).collect();
                let v = (0..=n)
                    .map(|i| {
                        let drift = coefficient * weights.value_at(i, &dy, &eps_y_scaled(&eps_y, spec.sigma));
                        self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps) + drift)
                    })
                    .collect();
                y = Some(yp);
                dx_out = Some(dx);
                v
            }
            PremiumState::Cir { spec, left, right } => {
                let (dx, _) = self.premium_driver(p, antithetic, &drivers.dz, spec.rho_x);
                let yp = crate::cir::cir_euler(&spec.cir, dt, &dx);
                let v = (0..=n)
                    .map(|i| {
                        let drift = cir_drift(left, right, &yp, i);
                        self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps) + drift)
                    })
                    .collect();
                y = Some(yp);
                dx_out = Some(dx);
                v
            }
            PremiumState::Implied(spec) => {
                let mut v = Vec::with_capacity(n + 1);
                let mut lam = Vec::with_capacity(n);
                let (rho, rho_bar) = (self.params.rho, self.params.rho_bar());
                for i in 0..=n {
                    // drift from λ on cells before i
                    let drift: f64 = (0..i).map(|j| zw.drift_weight(i - j) * lam[j]).sum::<f64>() * dt;
                    let vi = self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps) + drift);
                    v.push(vi);
                    if i < n {
                        let t = i as f64 * dt;
                        let chi = (self.rate[i] - self.mu[i]) / vi.sqrt();
                        let g = spec.gamma.value_at(t).clamp(-spec.bound, spec.bound);
                        lam.push(rho * chi + rho_bar * g);
                    }
                }
                lambda = Some(lam);
                v
            }
        };
        let s = self.spot_path(&v, &drivers.dw);
        MarketPath {
            drivers,
            v,
            s,
            y,
            dx: dx_out,
            lambda,
        }
    }

    /// Variance at selected grid indices only; O(N) per index for premia
    /// that do not feed back on v.
    pub fn variance_at(&self, p: u64, antithetic: bool, indices: &[usize]) -> Vec<f64> {
        if matches!(self.premium, PremiumState::Implied(_)) {
            let path = self.path(p, antithetic);
            return indices.iter().map(|&i| path.v[i]).collect();
        }
        let drivers = DriverPath::draw(&self.cfg, p, antithetic);
        let zw = &self.z_weights;
        let dt = self.dt();
        match &self.premium {
            PremiumState::None => indices
                .iter()
                .map(|&i| self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps)))
                .collect(),
            PremiumState::Fixed(d) => indices
                .iter()
                .map(|&i| self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps) + d[i]))
                .collect(),
            PremiumState::Ito { spec, coefficient, weights } => {
                let (dx, eps_y) = self.premium_driver(p, antithetic, &drivers.dz, spec.rho_x);
                let yp = ou_path(spec, dt, &dx);
                let dy: Vec<f64> = yp.windows(2).map(|w| w[1] - w[0]).collect();
                let eps_y = eps_y_scaled(&eps_y, spec.sigma);
                indices
                    .iter()
                    .map(|&i| {
                        let drift = coefficient * weights.value_at(i, &dy, &eps_y);
                        self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps) + drift)
                    })
                    .collect()
            }
            PremiumState::Cir { spec, left, right } => {
                let (dx, _) = self.premium_driver(p, antithetic, &drivers.dz, spec.rho_x);
                let yp = crate::cir::cir_euler(&spec.cir, dt, &dx);
                indices
                    .iter()
                    .map(|&i| {
                        let drift = cir_drift(left, right, &yp, i);
                        self.variance(i, zw.value_at(i, &drivers.dz, &drivers.eps) + drift)
                    })
                    .collect()
            }
            PremiumState::Implied(_) => unreachable!("handled above"),
        }
    }

    /// Runs every path in parallel and returns `f(path index, path)` in order.
    pub fn map<T: Send>(&self, antithetic: bool, f: impl Fn(usize, &MarketPath) -> T + Sync + Send) -> Vec<T> {
        map_paths(self.cfg.n_paths, |p| f(p, &self.path(p as u64, antithetic)))
    }

    pub fn simulate(&self) -> SimulatedMarket {
        SimulatedMarket {
            dt: self.dt(),
            measure: self.measure,
            paths: map_paths(self.cfg.n_paths, |p| self.path(p as u64, false)),
        }
    }
}

/// The hybrid nearest-cell normals of a premium driver carry its diffusion
/// coefficient; for an OU driver σ is constant, so scaling is exact.
fn eps_y_scaled(eps: &[f64], sigma: f64) -> Vec<f64> {
    eps.iter().map(|e| sigma * e).collect()
}

fn ou_path(spec: &ItoPremium, dt: f64, dx: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(dx.len() + 1);
    let mut cur = spec.y0;
    y.push(cur);
    for d in dx {
        cur += spec.kappa * (spec.theta - cur) * dt + spec.sigma * d;
        y.push(cur);
    }
    y
}

/// Kernel moments of a linearly interpolated integrand at lag m:
/// ∫_{cell} x^e (1-θ) and ∫_{cell} x^e θ with θ the position in the cell.
pub(crate) fn linear_moment_weights(e: f64, dt: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut left = vec![0.0; n + 1];
    let mut right = vec![0.0; n + 1];
    for m in 1..=n {
        let lo = (m - 1) as f64 * dt;
        let hi = m as f64 * dt;
        let m0 = (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0);
        let m1 = (hi.powf(e + 2.0) - lo.powf(e + 2.0)) / (e + 2.0);
        // the lag x = t_i - s runs from hi (s = t_j) to lo (s = t_{j+1}),
        // so the weight of Y_{j+1} is (hi - x)/dt
        let r = (hi * m0 - m1) / dt;
        right[m] = r;
        left[m] = m0 - r;
    }
    (left, right)
}

fn cir_drift(left: &[f64], right: &[f64], y: &[f64], i: usize) -> f64 {
    (0..i).map(|j| left[i - j] * y[j] + right[i - j] * y[j + 1]).sum()
}

/// Historical-measure market (zero premium, spot drift μ).
pub fn simulate_p_measure(params: &ModelParams, cfg: &DriverConfig) -> Result<SimulatedMarket> {
    Ok(Simulator::p_measure(params, cfg)?.simulate())
}

/// Pricing-measure market under the given premium.
pub fn simulate_q_measure(
    params: &ModelParams,
    premium: &RiskPremiumSpec,
    cfg: &DriverConfig,
) -> Result<SimulatedMarket> {
    Ok(Simulator::q_measure(params, premium, cfg)?.simulate())
}

/// Constant in front of the (Z, X) cross term of the conditional variance
/// correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossTermConvention {
    /// ρ𝚔_{2H₊}(t-s)/H₊² at α = 0: twice the covariance, the full variance of the sum.
    #[default]
    FullCovariance,
    /// The intermediate integral ρ∫𝚔_{2H}/H₊, half of the above.
    HalfCovariance,
}

/// ½ν²Var of ν⁻¹·log v_t given ℱ_s for a Brownian diffusion premium, raw
/// normalisation, in closed form.
pub fn conditional_variance_correction(
    h: HolderIndices,
    nu: f64,
    premium: &ItoPremium,
    tau: f64,
    convention: CrossTermConvention,
) -> Result<f64> {
    ensure(tau >= 0.0, || format!("t - s must be nonnegative, got {tau}"))?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let hh = h.hurst();
    let a = premium.alpha;
    let c = premium.coefficient(h)?;
    let var_z = tau.powf(2.0 * hh) / (2.0 * hh);
    let e_x = 2.0 * a + 2.0 * hh + 2.0;
    let var_x = c * c * tau.powf(e_x) / e_x;
    let e_c = 2.0 * hh + a + 1.0;
    let mut cross = 2.0 * premium.rho_x * c * tau.powf(e_c) / e_c;
    if convention == CrossTermConvention::HalfCovariance {
        cross *= 0.5;
    }
    Ok(0.5 * nu * nu * (var_z + var_x + cross))
}

/// E^Q[v_t | ℱ_s] for a Brownian diffusion premium, on the path's history.
///
/// `s` and `t` are grid indices; the truncated convolutions reuse the
/// simulator's own weights, so the result is the scheme's conditional mean up
/// to the continuous-time variance correction.
pub fn conditional_forward_variance(
    sim: &Simulator,
    path: &MarketPath,
    s: usize,
    t: usize,
    convention: CrossTermConvention,
) -> Result<f64> {
    ensure(s <= t && t <= sim.cfg.n_steps, || format!("need s <= t <= N, got s={s}, t={t}"))?;
    let PremiumState::Ito { spec, coefficient, weights } = &sim.premium else {
        return Err(Error::Unsupported(
            "closed-form conditional forward variance needs a diffusion premium".into(),
        ));
    };
    if !spec.is_brownian() {
        return Err(Error::Unsupported(
            "closed-form conditional forward variance needs Y to be a Brownian motion".into(),
        ));
    }
    if s == t {
        return Ok(path.v[t]);
    }
    let dt = sim.dt();
    let dz = &path.drivers.dz;
    let y = path.y.as_ref().expect("diffusion premia record their state");
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let z_part = sim.z_weights.truncated(s, t, dz, &path.drivers.eps);
    let y_part = coefficient * weights.truncated(s, t, &dy, &[]);
    let tau = (t - s) as f64 * dt;
    let corr = conditional_variance_correction(sim.params.hurst, sim.params.nu, spec, tau, convention)?;
    let comp = sim.compensation[t];
    Ok(sim.xi[t] * (sim.params.nu * (z_part + y_part) + corr - comp).exp())
}

/// E^Q[v_t] at s = 0 for a Brownian diffusion premium.
pub fn unconditional_forward_variance(
    params: &ModelParams,
    premium: &ItoPremium,
    t: f64,
    convention: CrossTermConvention,
) -> Result<f64> {
    let corr = conditional_variance_correction(params.hurst, params.nu, premium, t, convention)?;
    let comp = match params.normalization {
        Normalization::Raw => 0.0,
        Normalization::Compensated => {
            let hh = params.hurst.hurst();
            0.5 * params.nu * params.nu * t.powf(2.0 * hh) / (2.0 * hh)
        }
    };
    Ok(params.xi0.value_at(t) * (corr - comp).exp())
}

/// Variance swap strike E^Q[(1/T)∫₀ᵀ v_s ds] by trapezoid on the grid.
pub fn price_variance_swap(
    params: &ModelParams,
    premium: &RiskPremiumSpec,
    cfg: &DriverConfig,
    maturity: f64,
) -> Result<MeanEstimate> {
    let sim = Simulator::q_measure(params, premium, cfg)?;
    let samples = variance_swap_samples(&sim, maturity)?;
    Ok(MeanEstimate::from_samples(&samples))
}

/// Per-path realised (1/T)∫₀ᵀ v ds.
pub fn variance_swap_samples(sim: &Simulator, maturity: f64) -> Result<Vec<f64>> {
    let dt = sim.dt();
    let k = (maturity / dt).round() as usize;
    ensure(k >= 1 && k <= sim.cfg.n_steps && ((k as f64 * dt) - maturity).abs() <= 1e-9 * maturity.max(1.0), || {
        format!("maturity {maturity} is not on the simulation grid")
    })?;
    Ok(sim.map(false, |_, path| trapezoid(&path.v[..=k], dt) / maturity))
}

fn trapezoid(v: &[f64], dt: f64) -> f64 {
    let n = v.len() - 1;
    let inner: f64 = v[1..n].iter().sum();
    (0.5 * (v[0] + v[n]) + inner) * dt
}
