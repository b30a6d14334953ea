//! Correlated Brownian drivers and the Riemann–Liouville Volterra driver with
//! stream-per-path random numbers.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;

use crate::error::{ensure, Result};
use crate::gfo::{SampledPath, VolterraScheme, VolterraWeights};
use crate::kernels::HolderIndices;
use crate::quadrature::{Endpoint, SingularIntegrator};

/// Independent random components drawn for each path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Component {
    W = 0,
    WPerp = 1,
    /// Extra normals of the hybrid Volterra scheme.
    Hybrid = 2,
    /// Orthogonal part of a premium driver.
    Premium = 3,
    /// Extra normals of a premium-driver convolution.
    PremiumHybrid = 4,
}

const COMPONENTS_PER_PATH: u64 = 8;

/// The generator for component 0 of `path_index`.
pub fn rng_stream(seed: u64, path_index: u64) -> ChaCha8Rng {
    rng_substream(seed, path_index, Component::W)
}

/// One ChaCha stream per (path, component): draws never depend on how paths
/// are scheduled across threads.
pub fn rng_substream(seed: u64, path_index: u64, component: Component) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index * COMPONENTS_PER_PATH + component as u64);
    rng
}

/// Uniform on the open interval (0, 1) with 53 random bits.
pub fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by inverse CDF.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * open_uniform(rng))
}

/// `n` normals scaled by `scale`, negated when `antithetic`.
pub fn normals(rng: &mut impl RngCore, n: usize, scale: f64, antithetic: bool) -> Vec<f64> {
    let s = if antithetic { -scale } else { scale };
    (0..n).map(|_| s * standard_normal(rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    pub n_steps: usize,
    pub horizon: f64,
    pub n_paths: usize,
    pub rho: f64,
    pub hurst: HolderIndices,
    pub seed: u64,
    pub scheme: VolterraScheme,
}

impl DriverConfig {
    pub fn new(n_steps: usize, horizon: f64, n_paths: usize, rho: f64, hurst: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            n_steps,
            horizon,
            n_paths,
            rho,
            hurst: HolderIndices::new(hurst)?,
            seed,
            scheme: VolterraScheme::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: VolterraScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.n_steps >= 1, || "n_steps must be at least 1".into())?;
        ensure(self.n_paths >= 1, || "n_paths must be at least 1".into())?;
        ensure(self.horizon > 0.0 && self.horizon.is_finite(), || {
            format!("horizon must be positive, got {}", self.horizon)
        })?;
        ensure((-1.0..=1.0).contains(&self.rho), || format!("rho must lie in [-1, 1], got {}", self.rho))
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }

    pub fn volterra_weights(&self) -> Result<VolterraWeights> {
        VolterraWeights::new(&self.hurst.kernel(), self.dt(), self.n_steps, self.scheme)
    }
}

/// Increments of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    pub dw: Vec<f64>,
    pub dw_perp: Vec<f64>,
    /// ρΔW + ρ̄ΔW⊥.
    pub dz: Vec<f64>,
    /// Standard normals for the hybrid nearest cell (empty for left-point).
    pub eps: Vec<f64>,
}

impl DriverPath {
    pub fn draw(cfg: &DriverConfig, path_index: u64, antithetic: bool) -> Self {
        let n = cfg.n_steps;
        let sd = cfg.dt().sqrt();
        let dw = normals(&mut rng_substream(cfg.seed, path_index, Component::W), n, sd, antithetic);
        let dw_perp = normals(&mut rng_substream(cfg.seed, path_index, Component::WPerp), n, sd, antithetic);
        let eps = if cfg.scheme == VolterraScheme::Hybrid {
            normals(&mut rng_substream(cfg.seed, path_index, Component::Hybrid), n, 1.0, antithetic)
        } else {
            Vec::new()
        };
        let (rho, rho_bar) = (cfg.rho, cfg.rho_bar());
        let dz = dw.iter().zip(&dw_perp).map(|(a, b)| rho * a + rho_bar * b).collect();
        Self { dw, dw_perp, dz, eps }
    }
}

fn cumulative(dt: f64, inc: &[f64]) -> SampledPath {
    let mut v = Vec::with_capacity(inc.len() + 1);
    let mut acc = 0.0;
    v.push(acc);
    for x in inc {
        acc += x;
        v.push(acc);
    }
    SampledPath::new(dt, v).expect("dt validated by config")
}

/// Drivers for every path on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPaths {
    pub dt: f64,
    pub paths: Vec<DriverPath>,
    /// Z^H per path when requested.
    pub volterra: Option<Vec<SampledPath>>,
}

impl DriverPaths {
    pub fn w(&self, p: usize) -> SampledPath {
        cumulative(self.dt, &self.paths[p].dw)
    }

    pub fn w_perp(&self, p: usize) -> SampledPath {
        cumulative(self.dt, &self.paths[p].dw_perp)
    }

    pub fn z(&self, p: usize) -> SampledPath {
        cumulative(self.dt, &self.paths[p].dz)
    }
}

/// Draws all paths; `with_volterra` also builds Z^H.
pub fn simulate_drivers(cfg: &DriverConfig, with_volterra: bool) -> Result<DriverPaths> {
    cfg.validate()?;
    let weights = cfg.volterra_weights()?;
    let paths: Vec<DriverPath> = crate::mc::map_paths(cfg.n_paths, |p| DriverPath::draw(cfg, p as u64, false));
    let volterra = with_volterra.then(|| {
        paths
            .iter()
            .map(|p| volterra_path(&weights, p))
            .collect::<Vec<_>>()
    });
    Ok(DriverPaths {
        dt: cfg.dt(),
        paths,
        volterra,
    })
}

/// Z^H(tᵢ) for one path.
pub fn volterra_path(weights: &VolterraWeights, path: &DriverPath) -> SampledPath {
    SampledPath::new(weights.dt(), weights.convolve(&path.dz, &path.eps)).expect("dt validated by weights")
}

/// Cov(Z^H_s, Z^H_t) = ∫₀^{min} (s-u)^{H₋}(t-u)^{H₋} du.
pub fn volterra_covariance(h: HolderIndices, s: f64, t: f64) -> Result<f64> {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    if s == 0.0 {
        return Ok(0.0);
    }
    let e = h.minus();
    if s == t {
        return Ok(s.powf(2.0 * h.hurst()) / (2.0 * h.hurst()));
    }
    let rule = SingularIntegrator::new(e, Endpoint::Right)?;
    rule.integrate(|u| (t - u).powf(e), 0.0, s, 1e-12)
}

/// Exact Gaussian sampler of Z^H on a small grid, by Cholesky factorisation.
#[derive(Debug, Clone)]
pub struct CholeskyVolterra {
    dt: f64,
    factor: DMatrix<f64>,
}

impl CholeskyVolterra {
    pub const MAX_STEPS: usize = 256;

    pub fn new(h: HolderIndices, dt: f64, n_steps: usize) -> Result<Self> {
        ensure((1..=Self::MAX_STEPS).contains(&n_steps), || {
            format!("Cholesky sampler supports 1..={} steps, got {n_steps}", Self::MAX_STEPS)
        })?;
        let cov = DMatrix::from_fn(n_steps, n_steps, |i, j| {
            volterra_covariance(h, (i + 1) as f64 * dt, (j + 1) as f64 * dt).unwrap_or(f64::NAN)
        });
        ensure(cov.iter().all(|x| x.is_finite()), || "covariance quadrature failed".into())?;
        let chol = cov
            .cholesky()
            .ok_or_else(|| crate::Error::Degenerate("covariance is not positive definite".into()))?;
        Ok(Self { dt, factor: chol.l() })
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> SampledPath {
        let n = self.factor.nrows();
        let g = DVector::from_iterator(n, (0..n).map(|_| standard_normal(rng)));
        let x = &self.factor * g;
        let mut v = Vec::with_capacity(n + 1);
        v.push(0.0);
        v.extend(x.iter());
        SampledPath::new(self.dt, v).expect("dt validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::MeanEstimate;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: Vec<u64> = (0..1000).map({
            let mut r = rng_stream(7, 3);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..1000).map({
            let mut r = rng_stream(7, 3);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        let mut other = rng_stream(8, 3);
        assert_ne!(a[0], other.next_u64());

        let x = normals(&mut rng_stream(7, 0), 10_000, 1.0, false);
        let y = normals(&mut rng_stream(7, 1), 10_000, 1.0, false);
        assert!(corr(&x, &y).abs() < 0.05);
    }

    #[test]
    fn normals_have_unit_moments() {
        let x = normals(&mut rng_stream(1, 0), 200_000, 1.0, false);
        let est = MeanEstimate::from_samples(&x);
        assert!(est.mean.abs() < 4.0 * est.se);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn correlation_identity() {
        let cfg = DriverConfig::new(10, 1.0, 10_000, -0.7, 0.1, 11).unwrap();
        let d = simulate_drivers(&cfg, false).unwrap();
        let dw: Vec<f64> = d.paths.iter().flat_map(|p| p.dw.clone()).collect();
        let dz: Vec<f64> = d.paths.iter().flat_map(|p| p.dz.clone()).collect();
        let n = dw.len() as f64;
        let c = corr(&dw, &dz);
        // SE of a sample correlation ≈ (1 - r²)/√n
        assert!((c + 0.7).abs() < 3.0 * (1.0 - 0.49) / n.sqrt(), "{c}");

        let cfg1 = DriverConfig::new(10, 1.0, 5, 1.0, 0.1, 11).unwrap();
        let d1 = simulate_drivers(&cfg1, false).unwrap();
        assert!(d1.paths.iter().all(|p| p.dz == p.dw));

        let cfg0 = DriverConfig::new(10, 1.0, 5000, 0.0, 0.1, 12).unwrap();
        let d0 = simulate_drivers(&cfg0, false).unwrap();
        let dw: Vec<f64> = d0.paths.iter().flat_map(|p| p.dw.clone()).collect();
        let dz: Vec<f64> = d0.paths.iter().flat_map(|p| p.dz.clone()).collect();
        assert!(corr(&dw, &dz).abs() < 3.0 / (dw.len() as f64).sqrt());
    }

    #[test]
    fn z_is_the_correlated_combination() {
        let cfg = DriverConfig::new(20, 1.0, 3, -0.3, 0.2, 5).unwrap();
        let d = simulate_drivers(&cfg, true).unwrap();
        for p in 0..3 {
            let (w, wp, z) = (d.w(p), d.w_perp(p), d.z(p));
            for i in 0..=20 {
                let lhs = -0.3 * w.values()[i] + cfg.rho_bar() * wp.values()[i];
                assert!((z.values()[i] - lhs).abs() < 1e-12);
            }
            assert_eq!(d.volterra.as_ref().unwrap()[p].values()[0], 0.0);
        }
    }

    #[test]
    fn reproducible_across_runs() {
        let cfg = DriverConfig::new(16, 1.0, 50, -0.5, 0.1, 99).unwrap().with_scheme(VolterraScheme::Hybrid);
        assert_eq!(simulate_drivers(&cfg, true).unwrap(), simulate_drivers(&cfg, true).unwrap());
    }

    #[test]
    fn covariance_matches_fixed_jacobi_rule() {
        let h = HolderIndices::new(0.2).unwrap();
        // ∫₀¹ (1-u)^{H₋}(2-u)^{H₋} du with a 64-node rule on the weight (1-x)^{H₋}
        let rule = crate::quadrature::GaussRule::jacobi(64, h.minus(), 0.0).unwrap();
        let oracle = 0.5f64.powf(h.minus() + 1.0) * rule.apply(|x| (2.0 - (0.5 + 0.5 * x)).powf(h.minus()));
        let got = volterra_covariance(h, 1.0, 2.0).unwrap();
        assert!((got - oracle).abs() < 1e-11, "{got} vs {oracle}");
        // continuity at the diagonal, at the d^{2H} rate
        let near = volterra_covariance(h, 1.0, 1.0 + 1e-9).unwrap();
        assert!((near - 1.0 / 0.4).abs() < 1e-3);
        assert_eq!(volterra_covariance(h, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cholesky_sampler_matches_marginal_variance() {
        let h = HolderIndices::new(0.3).unwrap();
        let sampler = CholeskyVolterra::new(h, 1.0 / 32.0, 32).unwrap();
        let mut rng = rng_stream(3, 0);
        let terminal: Vec<f64> = (0..20_000).map(|_| sampler.sample(&mut rng).last()).collect();
        let sq: Vec<f64> = terminal.iter().map(|x| x * x).collect();
        let est = MeanEstimate::from_samples(&sq);
        assert!((est.mean - 1.0 / 0.6).abs() < 3.0 * est.se, "{est:?}");
        assert!(CholeskyVolterra::new(h, 0.001, 300).is_err());
    }
}
