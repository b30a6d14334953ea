//! CIR premium driver, the Riccati system of its kernel-weighted exponential
//! moment, and the resulting conditional forward variance.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::gauss::{normals, rng_substream, Component, DriverConfig};
use crate::gfo::SampledPath;
use crate::kernels::HolderIndices;
use crate::mc::map_paths;
use crate::models::{MarketPath, Simulator};

/// Blow-up threshold for |C|.
const DIVERGENCE: f64 = 1e12;
/// Substeps of the first cell, graded towards the singular end.
const FIRST_CELL_SUBSTEPS: usize = 256;
const GRADING: f64 = 4.0;
/// RK4 substeps inside every later cell.
const CELL_SUBSTEPS: usize = 8;

/// dY = κ(θ - Y)dt + σ√Y dX.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub y0: f64,
}

impl CirParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64, y0: f64) -> Result<Self> {
        let p = Self { kappa, theta, sigma, y0 };
        p.validate()?;
        Ok(p)
    }

    /// Degenerate values (zero speed, level or vol) are accepted; they give
    /// the closed-form special cases.
    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa, self.theta, self.sigma, self.y0];
        ensure(all.iter().all(|x| x.is_finite() && *x >= 0.0), || {
            format!("CIR parameters must be finite and nonnegative, got {all:?}")
        })
    }

    /// E[Y_t] = θ + (y₀ - θ)e^{-κt}.
    pub fn mean(&self, t: f64) -> f64 {
        self.theta + (self.y0 - self.theta) * (-self.kappa * t).exp()
    }
}

/// Full-truncation Euler on the given driver increments; the returned path
/// is the truncated state max(Y, 0).
pub fn cir_euler(p: &CirParams, dt: f64, dx: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dx.len() + 1);
    let mut y = p.y0;
    out.push(y.max(0.0));
    for d in dx {
        let yp = y.max(0.0);
        y += p.kappa * (p.theta - yp) * dt + p.sigma * yp.sqrt() * d;
        out.push(y.max(0.0));
    }
    out
}

/// CIR paths driven by the premium stream of each path.
pub fn simulate_cir(p: &CirParams, cfg: &DriverConfig) -> Result<Vec<SampledPath>> {
    p.validate()?;
    cfg.validate()?;
    let dt = cfg.dt();
    Ok(map_paths(cfg.n_paths, |i| {
        let dx = normals(&mut rng_substream(cfg.seed, i as u64, Component::Premium), cfg.n_steps, dt.sqrt(), false);
        SampledPath::new(dt, cir_euler(p, dt, &dx)).expect("dt validated")
    }))
}

/// Which reading of the Riccati system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiccatiForm {
    /// ∂ₜC = ν𝚔(T-t) + κC + (σ²/2)C², ∂ₜA = -κθC: what the Feynman–Kac
    /// ansatz B = exp(-yC - A) actually yields.
    #[default]
    FeynmanKac,
    /// ∂ₜC = ν𝚔(T-t) - κC + (σ²/2)C², A = -κθ∫ₜᵀC.
    ReversedSpeed,
    /// ∂ₜC = ν𝚔(T-t) + θC + (σ²/2)C², A = -κθ∫ₜᵀC.
    LevelRate,
}

impl RiccatiForm {
    /// (linear coefficient of C in ∂ₜC, sign s with ∂_τA = s·κθ·C).
    fn coefficients(self, p: &CirParams) -> (f64, f64) {
        match self {
            Self::FeynmanKac => (p.kappa, 1.0),
            Self::ReversedSpeed => (-p.kappa, -1.0),
            Self::LevelRate => (p.theta, -1.0),
        }
    }
}

/// C(·, T) and A(·, T) on a uniform grid t₀ = 0 < … < t_n = T.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub maturity: f64,
    pub grid: Vec<f64>,
    pub c: Vec<f64>,
    pub a: Vec<f64>,
}

impl RiccatiSolution {
    /// (C, A) at time-to-maturity τ = T - t, which must sit on the grid.
    /// The system is time-homogeneous, so this is also C(s, s + τ).
    pub fn at_lag(&self, tau: f64) -> Result<(f64, f64)> {
        let n = self.grid.len() - 1;
        let dt = self.maturity / n as f64;
        let k = (tau / dt).round();
        ensure(k >= 0.0 && k as usize <= n && (k * dt - tau).abs() <= 1e-9 * self.maturity.max(1.0), || {
            format!("lag {tau} is not on the Riccati grid")
        })?;
        let i = n - k as usize;
        Ok((self.c[i], self.a[i]))
    }
}

/// Solves backward from C(T,T) = A(T,T) = 0 with the source ν𝚔_{H₋}(T-t).
///
/// Works in τ = T - t with E = C + ντ^{H₊}/H₊, which removes the integrable
/// singularity of the source; RK4 with graded substeps in the first cell.
pub fn solve_riccati(
    p: &CirParams,
    nu: f64,
    h: HolderIndices,
    maturity: f64,
    n_steps: usize,
    form: RiccatiForm,
) -> Result<RiccatiSolution> {
    p.validate()?;
    ensure(n_steps >= 16, || format!("Riccati grid needs at least 16 steps, got {n_steps}"))?;
    ensure(maturity > 0.0 && maturity.is_finite(), || format!("maturity must be positive, got {maturity}"))?;
    let hp = h.plus();
    let (lin, a_sign) = form.coefficients(p);
    let q = 0.5 * p.sigma * p.sigma;
    let kt = p.kappa * p.theta;
    // singular parts of C and A
    let c_sing = |tau: f64| -nu * tau.powf(hp) / hp;
    let a_sing = |tau: f64| -a_sign * kt * nu * tau.powf(hp + 1.0) / (hp * (hp + 1.0));
    // state (E, Â) with C = E + c_sing, A = Â + a_sing
    let rhs = |tau: f64, st: [f64; 2]| -> [f64; 2] {
        let c = st[0] + c_sing(tau);
        [-lin * c - q * c * c, a_sign * kt * st[0]]
    };
    let rk4 = |tau: f64, st: [f64; 2], d: f64| -> [f64; 2] {
        let add = |x: [f64; 2], k: [f64; 2], f: f64| [x[0] + f * k[0], x[1] + f * k[1]];
        let k1 = rhs(tau, st);
        let k2 = rhs(tau + 0.5 * d, add(st, k1, 0.5 * d));
        let k3 = rhs(tau + 0.5 * d, add(st, k2, 0.5 * d));
        let k4 = rhs(tau + d, add(st, k3, d));
        [
            st[0] + d / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            st[1] + d / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    let dt = maturity / n_steps as f64;
    let mut c_tau = Vec::with_capacity(n_steps + 1);
    let mut a_tau = Vec::with_capacity(n_steps + 1);
    c_tau.push(0.0);
    a_tau.push(0.0);
    let mut st = [0.0, 0.0];
    for i in 0..n_steps {
        let tau0 = i as f64 * dt;
        if i == 0 {
            let mut prev = 0.0;
            for k in 1..=FIRST_CELL_SUBSTEPS {
                let next = dt * (k as f64 / FIRST_CELL_SUBSTEPS as f64).powf(GRADING);
                st = rk4(prev, st, next - prev);
                prev = next;
            }
        } else {
            let d = dt / CELL_SUBSTEPS as f64;
            for k in 0..CELL_SUBSTEPS {
                st = rk4(tau0 + k as f64 * d, st, d);
            }
        }
        let tau1 = tau0 + dt;
        let c = st[0] + c_sing(tau1);
        if !c.is_finite() || c.abs() > DIVERGENCE {
            return Err(Error::Divergence {
                time: maturity - tau1,
                magnitude: c.abs(),
            });
        }
        c_tau.push(c);
        a_tau.push(st[1] + a_sing(tau1));
    }
    c_tau.reverse();
    a_tau.reverse();
    Ok(RiccatiSolution {
        maturity,
        grid: (0..=n_steps).map(|i| i as f64 * dt).collect(),
        c: c_tau,
        a: a_tau,
    })
}

/// E^Q[v_t | ℱ_s] under a CIR premium with independent drivers, on a path
/// simulated by `sim`. `s` and `t` are grid indices; `riccati` must cover
/// the lag t - s on its grid.
pub fn fcir_conditional_expectation(
    sim: &Simulator,
    path: &MarketPath,
    s: usize,
    t: usize,
    riccati: &RiccatiSolution,
) -> Result<f64> {
    let cfg = sim.config();
    ensure(s <= t && t <= cfg.n_steps, || format!("need s <= t <= N, got s={s}, t={t}"))?;
    let (spec, y_trunc) = sim.cir_truncated(path, s, t)?;
    if spec.rho_x != 0.0 {
        return Err(Error::Unsupported(
            "CIR premium with correlated drivers has no semi-analytic conditional expectation".into(),
        ));
    }
    let params = sim.params();
    let nu = params.nu;
    if s == t {
        return Ok(path.v[t]);
    }
    let dt = sim.dt();
    let tau = (t - s) as f64 * dt;
    let (c, a) = riccati.at_lag(tau)?;
    let hh = params.hurst.hurst();
    let z_trunc = sim.z_weights().truncated(s, t, &path.drivers.dz, &path.drivers.eps);
    let y = path.y.as_ref().expect("CIR premia record their state");
    let gauss = 0.5 * nu * nu * tau.powf(2.0 * hh) / (2.0 * hh);
    let xi = params.xi0.value_at(t as f64 * dt);
    let v = xi * (nu * (z_trunc + y_trunc) + gauss - y[s] * c - a - sim.compensation(t)).exp();
    Ok(v.max(params.variance_floor))
}
