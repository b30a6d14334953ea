//! Forward variance from variance-swap quotes and extraction of a
//! piecewise-constant risk premium on the quote tenors.

use chrono::NaiveDate;

use crate::curve::PiecewiseCurve;
use crate::error::{ensure, Error, Result};
use crate::kernels::HolderIndices;

/// Largest admissible residual of the triangular system.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarSwapQuote {
    /// Years.
    pub tenor: f64,
    /// Decimal volatility; the variance strike is its square.
    pub strike_vol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSwapQuoteSet {
    pub as_of: NaiveDate,
    pub quotes: Vec<VarSwapQuote>,
}

impl VarSwapQuoteSet {
    /// Sorts by tenor; duplicate tenors and nonpositive values are errors.
    pub fn new(as_of: NaiveDate, mut quotes: Vec<VarSwapQuote>) -> Result<Self> {
        ensure(!quotes.is_empty(), || format!("{as_of}: no quotes"))?;
        for q in &quotes {
            ensure(q.tenor > 0.0 && q.tenor.is_finite(), || format!("{as_of}: tenor must be positive, got {}", q.tenor))?;
            ensure(q.strike_vol > 0.0 && q.strike_vol.is_finite(), || {
                format!("{as_of}: strike must be positive, got {} at tenor {}", q.strike_vol, q.tenor)
            })?;
        }
        quotes.sort_by(|a, b| a.tenor.total_cmp(&b.tenor));
        if let Some(w) = quotes.windows(2).find(|w| w[0].tenor == w[1].tenor) {
            return Err(Error::domain(format!("{as_of}: duplicate tenor {}", w[0].tenor)));
        }
        Ok(Self { as_of, quotes })
    }

    pub fn tenors(&self) -> Vec<f64> {
        self.quotes.iter().map(|q| q.tenor).collect()
    }
}

/// ξᵢ on (T_{i-1}, T_i] with T₀ = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardVarianceCurve {
    tenors: Vec<f64>,
    xi: Vec<f64>,
}

/// A tenor whose bootstrapped forward variance is not positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbitrageWarning {
    pub tenor: f64,
    pub xi: f64,
}

impl ForwardVarianceCurve {
    pub fn new(tenors: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        ensure(!tenors.is_empty() && tenors.len() == xi.len(), || "tenors and values differ in length".into())?;
        ensure(tenors[0] > 0.0 && tenors.windows(2).all(|w| w[0] < w[1]), || {
            "tenors must be positive and strictly increasing".into()
        })?;
        Ok(Self { tenors, xi })
    }

    pub fn tenors(&self) -> &[f64] {
        &self.tenors
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Σ_{j≤i} ξⱼ(Tⱼ - T_{j-1}) / T_i.
    pub fn implied_strikes(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut prev = 0.0;
        self.tenors
            .iter()
            .zip(&self.xi)
            .map(|(&t, &x)| {
                acc += x * (t - prev);
                prev = t;
                acc / t
            })
            .collect()
    }

    pub fn warnings(&self) -> Vec<ArbitrageWarning> {
        self.tenors
            .iter()
            .zip(&self.xi)
            .filter(|(_, &x)| x <= 0.0)
            .map(|(&tenor, &xi)| ArbitrageWarning { tenor, xi })
            .collect()
    }

    /// Piecewise-constant ξ₀ with knots 0, T₁, …, Tₙ.
    pub fn to_curve(&self) -> Result<PiecewiseCurve> {
        let mut knots = vec![0.0];
        knots.extend(&self.tenors);
        PiecewiseCurve::new(knots, self.xi.clone())
    }
}

/// ξᵢ = (𝔙ᵢTᵢ - 𝔙_{i-1}T_{i-1}) / (Tᵢ - T_{i-1}); negative values are kept
/// and reported by [`ForwardVarianceCurve::warnings`].
pub fn bootstrap_forward_variance(quotes: &VarSwapQuoteSet) -> Result<ForwardVarianceCurve> {
    let mut prev = (0.0, 0.0);
    let mut xi = Vec::with_capacity(quotes.quotes.len());
    for q in &quotes.quotes {
        ensure(q.tenor > prev.0, || format!("{}: tenors must be strictly increasing", quotes.as_of))?;
        let total = q.strike_vol * q.strike_vol * q.tenor;
        xi.push((total - prev.1) / (q.tenor - prev.0));
        prev = (q.tenor, total);
    }
    ForwardVarianceCurve::new(quotes.tenors(), xi)
}

/// Constant c in Σ λⱼ∫k du = c·log(ξ₀/E^P).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PremiumNormalization {
    /// c = 1/ν: the drift λ of the variance driver.
    #[default]
    Lambda,
    /// c = 1/(νρ̄): the orthogonal premium γ.
    Gamma,
    /// c = 1/(ν(1-ρ²)).
    Estimation,
}

impl PremiumNormalization {
    pub fn factor(self, nu: f64, rho: f64) -> Result<f64> {
        ensure(nu > 0.0 && nu.is_finite(), || format!("nu must be positive, got {nu}"))?;
        ensure(rho.abs() < 1.0, || format!("|rho| must be below one, got {rho}"))?;
        let rho_bar = (1.0 - rho * rho).sqrt();
        Ok(match self {
            Self::Lambda => 1.0 / nu,
            Self::Gamma => 1.0 / (nu * rho_bar),
            Self::Estimation => 1.0 / (nu * rho_bar * rho_bar),
        })
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Gamma => "gamma",
            Self::Estimation => "estimation",
        }
    }
}

impl std::str::FromStr for PremiumNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "gamma" => Ok(Self::Gamma),
            "estimation" => Ok(Self::Estimation),
            other => Err(Error::Config(format!("unknown premium normalization '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PremiumParams {
    pub hurst: HolderIndices,
    pub nu: f64,
    pub rho: f64,
    pub normalization: PremiumNormalization,
}

impl PremiumParams {
    pub fn new(hurst: f64, nu: f64, rho: f64, normalization: PremiumNormalization) -> Result<Self> {
        let p = Self {
            hurst: HolderIndices::new(hurst)?,
            nu,
            rho,
            normalization,
        };
        p.normalization.factor(nu, rho)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedPremium {
    pub tenors: Vec<f64>,
    pub lambda: Vec<f64>,
    pub normalization: PremiumNormalization,
    /// max |Aλ - b| of the triangular system.
    pub residual: f64,
}

impl ExtractedPremium {
    pub fn to_curve(&self) -> Result<PiecewiseCurve> {
        let mut knots = vec![0.0];
        knots.extend(&self.tenors);
        PiecewiseCurve::new(knots, self.lambda.clone())
    }
}

/// A_ij = ∫_{T_{j-1}}^{T_j} k(T_i - u) du for j ≤ i.
pub fn kernel_matrix(h: HolderIndices, tenors: &[f64]) -> Result<Vec<Vec<f64>>> {
    ensure(!tenors.is_empty() && tenors[0] > 0.0, || "tenors must be positive".into())?;
    let k = h.kernel();
    let mut rows = Vec::with_capacity(tenors.len());
    for (i, &ti) in tenors.iter().enumerate() {
        let mut row = Vec::with_capacity(i + 1);
        for j in 0..=i {
            let lo = if j == 0 { 0.0 } else { tenors[j - 1] };
            ensure(tenors[j] > lo, || format!("tenor {} repeats its predecessor", tenors[j]))?;
            row.push(k.interval_integral(ti, lo, tenors[j])?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// log(ξ₀(Tᵢ)/E^P[v_{Tᵢ}]) = (1/c) Σ_{j≤i} λⱼ A_ij.
pub fn premium_forward_map(lambda: &[f64], tenors: &[f64], params: &PremiumParams) -> Result<Vec<f64>> {
    ensure(lambda.len() == tenors.len(), || "one premium value per tenor is required".into())?;
    let c = params.normalization.factor(params.nu, params.rho)?;
    let a = kernel_matrix(params.hurst, tenors)?;
    Ok(a.iter()
        .map(|row| row.iter().zip(lambda).map(|(x, l)| x * l).sum::<f64>() / c)
        .collect())
}

/// Solves the lower-triangular system by forward substitution. ξ₀(Tᵢ) is
/// the forward variance on the interval ending at Tᵢ.
pub fn extract_premium(xi: &ForwardVarianceCurve, p_forecasts: &[f64], params: &PremiumParams) -> Result<ExtractedPremium> {
    let tenors = xi.tenors();
    ensure(p_forecasts.len() == tenors.len(), || "one forecast per tenor is required".into())?;
    if let Some(w) = xi.warnings().first() {
        return Err(Error::domain(format!("nonpositive forward variance {} at tenor {}", w.xi, w.tenor)));
    }
    if let Some((t, f)) = tenors.iter().zip(p_forecasts).find(|(_, f)| !(**f > 0.0 && f.is_finite())) {
        return Err(Error::domain(format!("historical forecast {f} at tenor {t} must be positive")));
    }
    let c = params.normalization.factor(params.nu, params.rho)?;
    let a = kernel_matrix(params.hurst, tenors)?;
    let b: Vec<f64> = xi.xi().iter().zip(p_forecasts).map(|(x, f)| c * (x / f).ln()).collect();
    let mut lambda = Vec::with_capacity(b.len());
    for (i, row) in a.iter().enumerate() {
        let known: f64 = row[..i].iter().zip(&lambda).map(|(x, l)| x * l).sum();
        lambda.push((b[i] - known) / row[i]);
    }
    let residual = a
        .iter()
        .zip(&b)
        .map(|(row, bi)| (row.iter().zip(&lambda).map(|(x, l)| x * l).sum::<f64>() - bi).abs())
        .fold(0.0, f64::max);
    if !(residual <= RESIDUAL_TOL * (1.0 + b.iter().fold(0.0f64, |m, x| m.max(x.abs())))) {
        return Err(Error::Degenerate(format!("triangular system residual {residual:e} too large")));
    }
    Ok(ExtractedPremium {
        tenors: tenors.to_vec(),
        lambda,
        normalization: params.normalization,
        residual,
    })
}

/// Inverse of [`premium_forward_map`]: the historical forecasts that make
/// `lambda` the extracted premium for the curve.
pub fn implied_forecasts(xi: &ForwardVarianceCurve, lambda: &[f64], params: &PremiumParams) -> Result<Vec<f64>> {
    let logs = premium_forward_map(lambda, xi.tenors(), params)?;
    Ok(xi.xi().iter().zip(logs).map(|(x, l)| x * (-l).exp()).collect())
}
