//! Generalised fractional operators on sampled paths, and discrete Volterra
//! convolutions of Brownian increments.

use crate::error::{ensure, Error, Result};
use crate::kernels::{HolderIndices, KernelSpec};

/// Values on the uniform grid tᵢ = i·dt, i = 0..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    dt: f64,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        ensure(dt > 0.0 && dt.is_finite(), || format!("grid step must be positive, got {dt}"))?;
        ensure(!values.is_empty(), || "a sampled path needs at least one value".into())?;
        Ok(Self { dt, values })
    }

    /// Samples `f` on the grid with `n` steps of size `dt`.
    pub fn from_fn(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(dt, (0..=n).map(|i| f(i as f64 * dt)).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Number of steps N.
    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps())
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("paths are never empty")
    }
}

/// Which branch of the operator definition applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfoBranch {
    /// α ∈ (-β, 0): derivative taken outside the integral.
    DerivativeOutside,
    /// α ∈ [0, 1-β): derivative of the kernel inside.
    DerivativeInside,
}

/// Operator 𝒢^α with power-law kernel x^α, acting on β-Hölder inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfoKind {
    alpha: f64,
    regularity: f64,
}

impl GfoKind {
    pub fn new(alpha: f64, regularity: f64) -> Result<Self> {
        ensure(regularity > 0.0 && regularity < 1.0, || {
            format!("input regularity must lie in (0, 1), got {regularity}")
        })?;
        ensure(alpha > -regularity && alpha < 1.0 - regularity, || {
            format!("exponent {alpha} outside ({}, {})", -regularity, 1.0 - regularity)
        })?;
        Ok(Self { alpha, regularity })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn regularity(&self) -> f64 {
        self.regularity
    }

    pub fn branch(&self) -> GfoBranch {
        if self.alpha < 0.0 {
            GfoBranch::DerivativeOutside
        } else {
            GfoBranch::DerivativeInside
        }
    }
}

/// (𝒢^α f)(tᵢ) for piecewise-linear f.
///
/// Both branches reduce to ∫₀ᵗ (t-s)^α f'(s) ds once the kernel moments are
/// differentiated analytically; on each linear piece this is the slope times
/// an exact power difference. At α = 0 the indicator kernel contributes its
/// boundary mass, so the result is f(t) - f(0).
pub fn gfo_apply_deterministic(kind: GfoKind, path: &SampledPath) -> Result<SampledPath> {
    ensure(path.values()[0].is_finite(), || "path must start at a finite value".into())?;
    let a1 = kind.alpha + 1.0;
    let dt = path.dt();
    let v = path.values();
    let slopes: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    // P[m] = (m dt)^{α+1}
    let pw: Vec<f64> = (0..v.len()).map(|m| (m as f64 * dt).powf(a1)).collect();
    let out = (0..v.len())
        .map(|i| {
            (0..i)
                .map(|j| slopes[j] * (pw[i - j] - pw[i - j - 1]))
                .sum::<f64>()
                / a1
        })
        .collect();
    SampledPath::new(dt, out)
}

/// Interpolation of λ between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// λ(s) = λ(tⱼ) on [tⱼ, tⱼ₊₁).
    PiecewiseConstant,
    #[default]
    PiecewiseLinear,
}

/// Whether λ(0) ≠ 0 is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartPolicy {
    #[default]
    Strict,
    /// Accept λ(0) ≠ 0 and integrate λ itself.
    AllowNonzero,
}

/// (𝔊⁺λ)(tᵢ) = ∫₀^{tᵢ} (tᵢ-s)^{H₋} λ_s ds with exact kernel moments per cell.
pub fn gfo_half_plus(
    lambda: &SampledPath,
    h: HolderIndices,
    interpolation: Interpolation,
    start: StartPolicy,
) -> Result<SampledPath> {
    let v = lambda.values();
    if start == StartPolicy::Strict && v[0] != 0.0 {
        return Err(Error::Domain(format!(
            "lambda must vanish at t = 0 (got {}); pass StartPolicy::AllowNonzero to integrate it anyway",
            v[0]
        )));
    }
    let dt = lambda.dt();
    let hp = h.plus();
    let n = v.len();
    // x^{H₊} and x^{H₊+1} on lags m·dt
    let p1: Vec<f64> = (0..n).map(|m| (m as f64 * dt).powf(hp)).collect();
    let p2: Vec<f64> = (0..n).map(|m| (m as f64 * dt).powf(hp + 1.0)).collect();
    let out = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..i {
                // lags run from x_lo = (i-j-1)dt to x_hi = (i-j)dt
                let (lo, hi) = (i - j - 1, i - j);
                let m0 = (p1[hi] - p1[lo]) / hp;
                acc += v[j] * m0;
                if interpolation == Interpolation::PiecewiseLinear {
                    let x_hi = hi as f64 * dt;
                    let m1 = x_hi * m0 - (p2[hi] - p2[lo]) / (hp + 1.0);
                    acc += (v[j + 1] - v[j]) / dt * m1;
                }
            }
            acc
        })
        .collect();
    SampledPath::new(dt, out)
}

/// Discretisation of ∫₀ᵗ k(t-s) dZ_s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolterraScheme {
    /// Σ_{j<i} k(tᵢ - tⱼ) ΔZⱼ; nearest lag is one step.
    #[default]
    LeftPoint,
    /// Nearest cell simulated exactly from (ΔZ, fresh normal); the rest use
    /// cell-averaged kernel weights.
    Hybrid,
}

/// Precomputed weights of a discrete Volterra convolution on a uniform grid.
#[derive(Debug, Clone)]
pub struct VolterraWeights {
    scheme: VolterraScheme,
    dt: f64,
    /// w[m] multiplies ΔZ at lag m (m = 1..=n); w[0] unused.
    w: Vec<f64>,
    /// Hybrid nearest cell: I = c1·ΔZ + c2·ε.
    c1: f64,
    c2: f64,
}

impl VolterraWeights {
    pub fn new(kernel: &KernelSpec, dt: f64, n: usize, scheme: VolterraScheme) -> Result<Self> {
        ensure(dt > 0.0 && n >= 1, || "weights need a positive step and at least one cell".into())?;
        let mut w = vec![0.0; n + 1];
        let (mut c1, mut c2) = (0.0, 0.0);
        match scheme {
            VolterraScheme::LeftPoint => {
                for (m, wm) in w.iter_mut().enumerate().skip(1) {
                    *wm = kernel.eval(m as f64 * dt);
                }
            }
            VolterraScheme::Hybrid => {
                for (m, wm) in w.iter_mut().enumerate().skip(1) {
                    *wm = kernel.lag_integral((m - 1) as f64 * dt, m as f64 * dt)? / dt;
                }
                c1 = w[1];
                let var = kernel.squared_lag_integral(0.0, dt)?;
                c2 = (var - c1 * c1 * dt).max(0.0).sqrt();
            }
        }
        Ok(Self { scheme, dt, w, c1, c2 })
    }

    pub fn scheme(&self) -> VolterraScheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.w.len() - 1
    }

    /// Whether a fresh normal per step is consumed.
    pub fn needs_extra_normals(&self) -> bool {
        self.scheme == VolterraScheme::Hybrid
    }

    /// Weight applied to a cell-wise constant integrand at lag m, so that
    /// Σ drift_weight(i-j)·λⱼ·dt is the matching deterministic convolution.
    pub fn drift_weight(&self, m: usize) -> f64 {
        self.w[m]
    }

    /// Value at grid index i from increments ΔZ and (Hybrid) extra normals.
    pub fn value_at(&self, i: usize, dz: &[f64], eps: &[f64]) -> f64 {
        if i == 0 {
            return 0.0;
        }
        match self.scheme {
            VolterraScheme::LeftPoint => (0..i).map(|j| self.w[i - j] * dz[j]).sum(),
            VolterraScheme::Hybrid => {
                let near = self.c1 * dz[i - 1] + self.c2 * eps[i - 1];
                near + (0..i - 1).map(|j| self.w[i - j] * dz[j]).sum::<f64>()
            }
        }
    }

    /// Σ_{j<s} w(t-j) ΔZⱼ: the part of the value at t driven by increments
    /// before grid index s.
    pub fn truncated(&self, s: usize, t: usize, dz: &[f64], eps: &[f64]) -> f64 {
        debug_assert!(s <= t);
        if s == t {
            return self.value_at(t, dz, eps);
        }
        (0..s).map(|j| self.w[t - j] * dz[j]).sum()
    }

    /// Full path (N+1 values).
    pub fn convolve(&self, dz: &[f64], eps: &[f64]) -> Vec<f64> {
        let n = dz.len();
        (0..=n).map(|i| self.value_at(i, dz, eps)).collect()
    }

    /// Variance of the scheme's value at index i for unit-rate increments.
    pub fn discrete_variance(&self, i: usize) -> f64 {
        match self.scheme {
            VolterraScheme::LeftPoint => (1..=i).map(|m| self.w[m] * self.w[m]).sum::<f64>() * self.dt,
            VolterraScheme::Hybrid if i == 0 => 0.0,
            VolterraScheme::Hybrid => {
                (self.c1 * self.c1 * self.dt + self.c2 * self.c2)
                    + (2..=i).map(|m| self.w[m] * self.w[m]).sum::<f64>() * self.dt
            }
        }
    }

    /// Variance of the truncated part Σ_{j<s} w(t-j)ΔZⱼ.
    pub fn truncated_variance(&self, s: usize, t: usize) -> f64 {
        if s == t {
            return self.discrete_variance(t);
        }
        ((t - s + 1)..=t).map(|m| self.w[m] * self.w[m]).sum::<f64>() * self.dt
    }

    /// Cov(value at i, Z(tᵢ)) for unit-rate increments.
    pub fn covariance_with_driver(&self, i: usize) -> f64 {
        (1..=i).map(|m| self.w[m]).sum::<f64>() * self.dt
    }
}

/// Left-point Itô convolution Σ_{j<i} k(tᵢ - tⱼ) ΔZⱼ of the given increments.
pub fn gfo_stochastic_convolution(kernel: &KernelSpec, dt: f64, increments: &[f64]) -> Result<SampledPath> {
    if increments.is_empty() {
        return SampledPath::new(dt, vec![0.0]);
    }
    let weights = VolterraWeights::new(kernel, dt, increments.len(), VolterraScheme::LeftPoint)?;
    SampledPath::new(dt, weights.convolve(increments, &[]))
}
