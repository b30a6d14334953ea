//! Roughness and vol-of-vol from realised volatility by moment scaling of
//! log-variance increments, and the correlation proxy from joint series.

use chrono::NaiveDate;

use crate::error::{ensure, Error, Result};
use crate::forecastr::c_h;

/// Trading days per year; lags are measured in years.
pub const TRADING_DAYS: f64 = 252.0;
/// Smallest admissible window.
pub const MIN_WINDOW: usize = 50;

/// Daily annualised realised volatility.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSeries {
    dates: Vec<NaiveDate>,
    rv: Vec<f64>,
}

impl VolSeries {
    pub fn new(dates: Vec<NaiveDate>, rv: Vec<f64>) -> Result<Self> {
        ensure(dates.len() == rv.len(), || "dates and values differ in length".into())?;
        ensure(dates.windows(2).all(|w| w[0] < w[1]), || "dates must be strictly increasing".into())?;
        ensure(rv.iter().all(|&x| x > 0.0 && x.is_finite()), || "realised volatility must be positive".into())?;
        Ok(Self { dates, rv })
    }

    /// Consecutive business-like dates from `start`, one per value.
    pub fn from_values(start: NaiveDate, rv: Vec<f64>) -> Result<Self> {
        let dates = (0..rv.len()).map(|i| start + chrono::Days::new(i as u64)).collect();
        Self::new(dates, rv)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.rv
    }

    pub fn len(&self) -> usize {
        self.rv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rv.is_empty()
    }

    /// log v = 2 log σ.
    fn log_variance(&self) -> Vec<f64> {
        self.rv.iter().map(|s| 2.0 * s.ln()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub window: usize,
    /// Distance between consecutive window ends.
    pub step: usize,
    pub q_set: Vec<f64>,
    pub max_lag: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: 100,
            step: 1,
            q_set: vec![0.5, 1.0, 1.5, 2.0, 3.0],
            max_lag: 30,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        ensure(self.window >= MIN_WINDOW, || format!("window must be at least {MIN_WINDOW}, got {}", self.window))?;
        ensure(self.window <= len, || format!("window {} exceeds series length {len}", self.window))?;
        ensure(self.step >= 1, || "step must be positive".into())?;
        ensure(!self.q_set.is_empty() && self.q_set.iter().all(|&q| q > 0.0), || {
            "moment set must be nonempty and positive".into()
        })?;
        ensure(self.max_lag >= 2 && self.max_lag < self.window, || {
            format!("max lag must lie in [2, window), got {}", self.max_lag)
        })
    }

    /// Window end indices (inclusive).
    fn ends(&self, len: usize) -> Vec<usize> {
        (self.window - 1..len).step_by(self.step).collect()
    }
}

/// Scaling exponent of one moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentFit {
    pub q: f64,
    pub zeta: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessEstimate {
    pub h: f64,
    pub nu: f64,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub fits: Vec<MomentFit>,
}

/// Least squares y = a + b x; returns (a, b, R²).
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let b = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (my - b * mx, b, r2)
}

/// Moment-scaling estimate on one window of log-variance.
pub fn estimate_window(log_v: &[f64], q_set: &[f64], max_lag: usize) -> Result<(f64, f64, Vec<MomentFit>)> {
    ensure(max_lag < log_v.len(), || "window shorter than the largest lag".into())?;
    let lags: Vec<f64> = (1..=max_lag).map(|d| (d as f64 / TRADING_DAYS).ln()).collect();
    let mut fits = Vec::with_capacity(q_set.len());
    let mut log_m2 = None;
    for &q in q_set {
        let mut log_m = Vec::with_capacity(max_lag);
        for d in 1..=max_lag {
            let incs = log_v.windows(d + 1).map(|w| (w[d] - w[0]).abs().powf(q));
            let m = incs.sum::<f64>() / (log_v.len() - d) as f64;
            if m <= 0.0 || !m.is_finite() {
                return Err(Error::Degenerate("log-variance increments vanish on the window".into()));
            }
            log_m.push(m.ln());
        }
        let (_, zeta, r_squared) = linear_fit(&lags, &log_m);
        if q == 2.0 {
            log_m2 = Some(log_m);
        }
        fits.push(MomentFit { q, zeta, r_squared });
    }
    // ζ_q = qH through the origin
    let h = fits.iter().map(|f| f.q * f.zeta).sum::<f64>() / fits.iter().map(|f| f.q * f.q).sum::<f64>();
    ensure(h > 0.0 && h < 0.5, || format!("roughness estimate {h} outside (0, 1/2)"))
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    // m(2,Δ) = ν²Δ^{2H}/(2H C_H) for stationary Volterra increments
    let log_m2 = match log_m2 {
        Some(v) => v,
        None => (1..=max_lag)
            .map(|d| {
                let m = log_v.windows(d + 1).map(|w| (w[d] - w[0]).powi(2)).sum::<f64>() / (log_v.len() - d) as f64;
                m.ln()
            })
            .collect(),
    };
    let k2 = (log_m2.iter().zip(&lags).map(|(m, l)| m - 2.0 * h * l).sum::<f64>() / max_lag as f64).exp();
    let nu = (2.0 * h * c_h(h)? * k2).sqrt();
    Ok((h, nu, fits))
}

/// Rolling (Ĥ, ν̂) over windows of the series.
pub fn estimate_h_nu(series: &VolSeries, cfg: &EstimatorConfig) -> Result<Vec<RoughnessEstimate>> {
    cfg.validate(series.len())?;
    let log_v = series.log_variance();
    cfg.ends(series.len())
        .into_iter()
        .map(|end| {
            let start = end + 1 - cfg.window;
            let (h, nu, fits) = estimate_window(&log_v[start..=end], &cfg.q_set, cfg.max_lag)?;
            Ok(RoughnessEstimate {
                h,
                nu,
                window_start: series.dates[start],
                window_end: series.dates[end],
                fits,
            })
        })
        .collect()
}

/// Normalisation of the increment correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoProxy {
    /// Stationary increments: ρ = Corr·H₊/√(2H C_H).
    #[default]
    Stationary,
    /// Increments from the origin: ρ = Corr·H₊/√(2H).
    Origin,
}

impl RhoProxy {
    pub fn factor(self, h: f64) -> Result<f64> {
        let base = (h + 0.5) / (2.0 * h).sqrt();
        Ok(match self {
            Self::Stationary => base / c_h(h)?.sqrt(),
            Self::Origin => base,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub window_end: NaiveDate,
    pub rho: f64,
    /// Proxy before clamping to [-1, 1].
    pub raw: f64,
    pub clamped: bool,
}

/// Sample correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    ensure(x.len() == y.len() && x.len() >= 2, || "correlation needs two equal series".into())?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// ρ̂ before clamping from one window of closes and realised volatility
/// sharing their dates: returns over √v against log-variance increments.
pub fn window_rho(closes: &[f64], rv: &[f64], h: f64, proxy: RhoProxy) -> Result<f64> {
    ensure(closes.len() == rv.len() && closes.len() >= 3, || "closes and volatility must pair up".into())?;
    ensure(closes.iter().all(|&c| c > 0.0), || "closes must be positive".into())?;
    let v: Vec<f64> = rv.iter().map(|s| s * s).collect();
    let ret: Vec<f64> = (0..v.len() - 1).map(|i| (closes[i + 1] / closes[i]).ln() / v[i].sqrt()).collect();
    let dlv: Vec<f64> = (0..v.len() - 1).map(|i| (v[i + 1] / v[i]).ln()).collect();
    Ok(proxy.factor(h)? * correlation(&ret, &dlv)?)
}

/// Rolling ρ̂ on the windows of `cfg` with a fixed roughness.
pub fn estimate_rho(closes: &[f64], vols: &VolSeries, cfg: &EstimatorConfig, h: f64, proxy: RhoProxy) -> Result<Vec<RhoEstimate>> {
    ensure(closes.len() == vols.len(), || "closes and volatility dates are misaligned".into())?;
    cfg.validate(vols.len())?;
    cfg.ends(vols.len())
        .into_iter()
        .map(|end| {
            let start = end + 1 - cfg.window;
            let raw = window_rho(&closes[start..=end], &vols.values()[start..=end], h, proxy)?;
            Ok(RhoEstimate::new(vols.dates[end], raw))
        })
        .collect()
}

impl RhoEstimate {
    pub fn new(window_end: NaiveDate, raw: f64) -> Self {
        Self {
            window_end,
            rho: raw.clamp(-1.0, 1.0),
            raw,
            clamped: raw.abs() > 1.0,
        }
    }
}

/// (Ĥ, ν̂) per window with ρ̂ from the window's own Ĥ when closes are given.
pub fn estimate_rolling(
    series: &VolSeries,
    closes: Option<&[f64]>,
    cfg: &EstimatorConfig,
    proxy: RhoProxy,
) -> Result<Vec<(RoughnessEstimate, Option<RhoEstimate>)>> {
    if let Some(c) = closes {
        ensure(c.len() == series.len(), || "closes and volatility dates are misaligned".into())?;
    }
    let est = estimate_h_nu(series, cfg)?;
    let ends = cfg.ends(series.len());
    est.into_iter()
        .zip(ends)
        .map(|(e, end)| {
            let rho = match closes {
                Some(c) => {
                    let start = end + 1 - cfg.window;
                    let raw = window_rho(&c[start..=end], &series.values()[start..=end], e.h, proxy)?;
                    Some(RhoEstimate::new(e.window_end, raw))
                }
                None => None,
            };
            Ok((e, rho))
        })
        .collect()
}
