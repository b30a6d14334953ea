//! End-to-end premium extraction: rolling estimates, historical variance
//! forecasts, forward-variance bootstrap and the triangular solve, per
//! quote date.

use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::curve::PiecewiseCurve;
use crate::error::{ensure, Error, Result};
use crate::forecastr::{lognormal_forecast, DriverForecast, ForecastOptions, ForecastResult, ForecastWeights};
use crate::gauss::DriverConfig;
use crate::gfo::VolterraScheme;
use crate::inference::{estimate_window, window_rho, EstimatorConfig, RhoProxy, VolSeries, TRADING_DAYS};
use crate::io::{fmt_f64, read_closes, read_varswap_quotes, read_vol_series, tenor_days, Notice, Table};
use crate::kernels::HolderIndices;
use crate::models::{ModelParams, Simulator};
use crate::premium::{
    bootstrap_forward_variance, extract_premium, PremiumNormalization, PremiumParams, VarSwapQuote, VarSwapQuoteSet,
};

pub const DEFAULT_TENOR_DAYS: [u32; 5] = [30, 91, 182, 365, 730];
const DEFAULT_LAMBDA: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.0];

/// Market inputs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub vols: Option<VolSeries>,
    pub closes: Option<Vec<f64>>,
    pub quotes: Vec<VarSwapQuoteSet>,
}

/// Model parameters at one date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DateParams {
    pub hurst: f64,
    pub nu: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DateResult {
    pub date: NaiveDate,
    pub params: DateParams,
    pub tenors: Vec<f64>,
    pub xi: Vec<f64>,
    pub forecasts: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub dates: Vec<DateResult>,
    pub notices: Vec<Notice>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineStatus {
    /// No quotes to process.
    NoWork(Vec<Notice>),
    Done(PipelineOutput),
}

/// Where the historical parameters come from.
#[derive(Debug, Clone, PartialEq)]
enum ParamSource {
    Fixed(DateParams),
    Estimated { est: EstimatorConfig, rho: RhoSource },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RhoSource {
    Fixed(f64),
    Proxy(RhoProxy),
}

struct Plan {
    source: ParamSource,
    forecast: ForecastOptions,
    normalization: PremiumNormalization,
    /// ξ₀ and normalisation for model forecasts without a vol series.
    model: Option<ModelParams>,
}

fn plan(cfg: &RunConfig, inputs: &Inputs) -> Result<Plan> {
    let forecast = cfg.forecast_options()?;
    let normalization = cfg.premium_normalization()?;
    match &inputs.vols {
        Some(_) => {
            let rho = match (&inputs.closes, cfg.rho) {
                (Some(_), _) => RhoSource::Proxy(cfg.rho_proxy()?),
                (None, Some(r)) => RhoSource::Fixed(r),
                (None, None) => return Err(Error::Config("rho needs either 'closes' or a 'rho' value".into())),
            };
            Ok(Plan {
                source: ParamSource::Estimated { est: cfg.estimator(), rho },
                forecast,
                normalization,
                model: None,
            })
        }
        None => {
            let model = cfg.model()?;
            let p = DateParams {
                hurst: model.hurst.hurst(),
                nu: model.nu,
                rho: model.rho,
            };
            Ok(Plan {
                source: ParamSource::Fixed(p),
                forecast,
                normalization,
                model: Some(model),
            })
        }
    }
}

fn at_date(date: NaiveDate, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{date}: {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("{date}: {m}")),
        other => Error::Domain(format!("{date}: {other}")),
    }
}

fn process_date(plan: &Plan, inputs: &Inputs, quotes: &VarSwapQuoteSet) -> Result<DateResult> {
    let date = quotes.as_of;
    let tenors = quotes.tenors();
    let (params, forecasts) = match (&plan.source, &inputs.vols) {
        (ParamSource::Estimated { est, rho }, Some(vols)) => {
            let end = vols
                .dates()
                .partition_point(|d| *d <= date)
                .checked_sub(1)
                .ok_or_else(|| Error::domain("no volatility data on or before the quote date"))?;
            if end + 1 < est.window {
                return Err(Error::domain(format!(
                    "{} volatility points before the quote date, window needs {}",
                    end + 1,
                    est.window
                )));
            }
            let start = end + 1 - est.window;
            let log_v: Vec<f64> = vols.values()[start..=end].iter().map(|s| 2.0 * s.ln()).collect();
            let (h, nu, _) = estimate_window(&log_v, &est.q_set, est.max_lag)?;
            let rho = match rho {
                RhoSource::Fixed(r) => *r,
                RhoSource::Proxy(proxy) => {
                    let closes = inputs.closes.as_ref().expect("planned with closes");
                    window_rho(&closes[start..=end], &vols.values()[start..=end], h, *proxy)?.clamp(-1.0, 1.0)
                }
            };
            let forecasts: Vec<f64> = forecast_from_rv(&vols.values()[start..=end], h, nu, &tenors, plan.forecast)?
                .into_iter()
                .map(|f| f.v_forecast)
                .collect();
            (DateParams { hurst: h, nu, rho }, forecasts)
        }
        (ParamSource::Fixed(p), _) => {
            let model = plan.model.as_ref().expect("fixed parameters carry a model");
            let forecasts: Vec<f64> = tenors
                .iter()
                .map(|&t| unconditional_p_forecast(model, t))
                .collect();
            (*p, forecasts)
        }
        (ParamSource::Estimated { .. }, None) => unreachable!("planned with a vol series"),
    };
    let xi = bootstrap_forward_variance(quotes)?;
    let pp = PremiumParams::new(params.hurst, params.nu, params.rho, plan.normalization)?;
    let extracted = extract_premium(&xi, &forecasts, &pp)?;
    Ok(DateResult {
        date,
        params,
        tenors,
        xi: xi.xi().to_vec(),
        forecasts,
        lambda: extracted.lambda,
    })
}

/// E^P[v_{t+Δ}|F_t] from daily realised volatility ending at t, with Z^H
/// taken as the centred log-variance over ν and the centre as prefactor.
pub fn forecast_from_rv(
    rv: &[f64],
    h: f64,
    nu: f64,
    horizons: &[f64],
    opts: ForecastOptions,
) -> Result<Vec<ForecastResult>> {
    ensure(rv.len() >= 2 && rv.iter().all(|&s| s > 0.0), || "history needs two positive points".into())?;
    ensure(nu > 0.0, || format!("nu must be positive, got {nu}"))?;
    let log_v: Vec<f64> = rv.iter().map(|s| 2.0 * s.ln()).collect();
    let m = log_v.iter().sum::<f64>() / log_v.len() as f64;
    let z: Vec<f64> = log_v.iter().map(|x| (x - m) / nu).collect();
    let hh = HolderIndices::new(h)?;
    let dt = 1.0 / TRADING_DAYS;
    horizons
        .iter()
        .map(|&t| {
            let w = ForecastWeights::new(hh, dt, z.len() - 1, t, opts.tail)?;
            let f = DriverForecast {
                horizon: t,
                mean: w.mean(&z)?,
                var: opts.variance.value(h, t)?,
            };
            Ok(lognormal_forecast(f, nu, m.exp()))
        })
        .collect()
}

/// E^P[v_t] at time zero under the model.
pub fn unconditional_p_forecast(model: &ModelParams, t: f64) -> f64 {
    let h = model.hurst.hurst();
    crate::forecastr::variance_prefactor(model, t) * (0.5 * model.nu * model.nu * t.powf(2.0 * h) / (2.0 * h)).exp()
}

/// Runs the whole workflow on in-memory inputs.
pub fn run_on_inputs(cfg: &RunConfig, inputs: &Inputs, mut notices: Vec<Notice>) -> Result<PipelineStatus> {
    if inputs.quotes.is_empty() {
        return Ok(PipelineStatus::NoWork(notices));
    }
    let plan = plan(cfg, inputs)?;
    let dates = inputs
        .quotes
        .par_iter()
        .map(|q| process_date(&plan, inputs, q).map_err(|e| at_date(q.as_of, e)))
        .collect::<Result<Vec<_>>>()?;
    for d in &dates {
        for (t, x) in d.tenors.iter().zip(&d.xi) {
            if *x <= 0.0 {
                notices.push(Notice(format!("{}: nonpositive forward variance at {} days", d.date, tenor_days(*t))));
            }
        }
    }
    Ok(PipelineStatus::Done(PipelineOutput { dates, notices }))
}

/// Reads the configured files, or builds a synthetic fixture when
/// `synthetic_days` is set, then runs the workflow.
pub fn run_pipeline(cfg: &RunConfig, seed: Option<u64>) -> Result<PipelineStatus> {
    let (inputs, notices) = if cfg.synthetic_days.is_some() {
        let seed = seed.or(cfg.seed).ok_or_else(|| Error::Config("a synthetic run needs a seed".into()))?;
        (synthetic_inputs(cfg, seed)?.0, Vec::new())
    } else {
        load_inputs(cfg)?
    };
    run_on_inputs(cfg, &inputs, notices)
}

pub fn load_inputs(cfg: &RunConfig) -> Result<(Inputs, Vec<Notice>)> {
    let qpath = cfg.quotes.as_ref().ok_or_else(|| Error::Config("missing key 'quotes'".into()))?;
    if cfg.vol_series.is_none() {
        // validate before reading anything large
        cfg.model()?;
    }
    let (quotes, mut notices) = read_varswap_quotes(qpath)?;
    let vols = match &cfg.vol_series {
        Some(p) => {
            let (s, n) = read_vol_series(p)?;
            notices.extend(n);
            Some(s)
        }
        None => None,
    };
    let closes = match (&cfg.closes, &vols) {
        (Some(p), Some(v)) => {
            let (dates, closes, n) = read_closes(p)?;
            notices.extend(n);
            if dates != v.dates() {
                return Err(Error::Config("closes and volatility series must share their dates".into()));
            }
            Some(closes)
        }
        (Some(_), None) => return Err(Error::Config("'closes' requires 'vol_series'".into())),
        _ => None,
    };
    Ok((Inputs { vols, closes, quotes }, notices))
}

/// Consecutive weekdays from 2000-01-03.
pub fn weekdays(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Simulated daily volatility and closes under the historical measure, and
/// variance-swap quotes priced with a known premium on the tenor partition.
/// Returns the inputs and the premium used.
pub fn synthetic_inputs(cfg: &RunConfig, seed: u64) -> Result<(Inputs, Vec<f64>)> {
    let days = cfg.synthetic_days.ok_or_else(|| Error::Config("missing key 'synthetic_days'".into()))?;
    let model = cfg.model()?;
    let tenor_days_list = cfg.synthetic_tenor_days.clone().unwrap_or_else(|| DEFAULT_TENOR_DAYS.to_vec());
    let lambda = cfg.synthetic_lambda.clone().unwrap_or_else(|| DEFAULT_LAMBDA.to_vec());
    if lambda.len() != tenor_days_list.len() || tenor_days_list.is_empty() {
        return Err(Error::Config("synthetic_lambda needs one value per tenor".into()));
    }
    let every = cfg.synthetic_quote_every.unwrap_or(21).max(1);
    let n_dates = cfg.synthetic_quote_dates.unwrap_or(5);
    let window = cfg.estimator().window;
    if days < window + every * n_dates.saturating_sub(1) {
        return Err(Error::Config(format!("synthetic_days {days} too short for the window and quote dates")));
    }
    let dt = 1.0 / TRADING_DAYS;
    let max_tenor = *tenor_days_list.iter().max().expect("nonempty");
    let ahead = (max_tenor as f64 / crate::io::TENOR_DAY_COUNT * TRADING_DAYS).ceil() as usize + 1;
    let n = days + ahead;
    let drivers = DriverConfig::new(n, n as f64 * dt, 1, model.rho, model.hurst.hurst(), seed)?
        .with_scheme(VolterraScheme::Hybrid);
    let sim = Simulator::p_measure(&model, &drivers)?;
    let path = sim.path(0, false);
    let dates = weekdays(days);
    let rv: Vec<f64> = path.v[1..=days].iter().map(|v| v.sqrt()).collect();
    let closes: Vec<f64> = path.s[1..=days].to_vec();
    let vols = VolSeries::new(dates.clone(), rv)?;

    let tenors: Vec<f64> = tenor_days_list.iter().map(|&d| d as f64 / crate::io::TENOR_DAY_COUNT).collect();
    let mut knots = vec![0.0];
    knots.extend(&tenors);
    let lam_curve = PiecewiseCurve::new(knots, lambda.clone())?;
    let kernel = model.hurst.kernel();
    let zw = sim.z_weights();
    let nu = model.nu;
    let quote_idx: Vec<usize> = (0..n_dates).map(|k| days - k * every).rev().collect();
    let quotes = quote_idx
        .iter()
        .map(|&d| {
            // forward variance under Q on the daily grid from index d (grid index = d)
            let xi_q: Vec<f64> = (0..=ahead)
                .map(|k| {
                    let t = d + k;
                    let mean = zw.truncated(d, t, &path.drivers.dz, &path.drivers.eps);
                    let var = zw.discrete_variance(t) - zw.truncated_variance(d, t);
                    let shift = lam_curve.kernel_convolution(&kernel, k as f64 * dt)?;
                    Ok(sim.xi_at(t) * (nu * mean + 0.5 * nu * nu * var + nu * shift - sim.compensation(t)).exp())
                })
                .collect::<Result<Vec<_>>>()?;
            let quotes = tenors
                .iter()
                .map(|&tt| {
                    let strike = average_on_grid(&xi_q, dt, tt);
                    VarSwapQuote {
                        tenor: tt,
                        strike_vol: strike.sqrt(),
                    }
                })
                .collect();
            VarSwapQuoteSet::new(dates[d - 1], quotes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Inputs {
            vols: Some(vols),
            closes: Some(closes),
            quotes,
        },
        lambda,
    ))
}

/// (1/T)∫₀ᵀ f by trapezoid on a uniform grid with a linear partial cell.
fn average_on_grid(f: &[f64], dt: f64, t: f64) -> f64 {
    let full = (t / dt).floor() as usize;
    let mut acc: f64 = (0..full).map(|k| 0.5 * (f[k] + f[k + 1]) * dt).sum();
    let rem = t - full as f64 * dt;
    if rem > 0.0 {
        let end = f[full] + (f[full + 1] - f[full]) * rem / dt;
        acc += 0.5 * (f[full] + end) * rem;
    }
    acc / t
}

/// Output tables by file name, sorted by date then tenor.
pub fn output_tables(out: &PipelineOutput) -> Vec<(&'static str, Table)> {
    let mut xi = Table::new(&["date", "tenor_days", "xi"]);
    let mut fc = Table::new(&["date", "tenor_days", "p_forecast"]);
    let mut lam = Table::new(&["date", "tenor_days", "lambda"]);
    let mut est = Table::new(&["date", "H_hat", "nu_hat", "rho_hat"]);
    let mut plot = Table::new(&["x", "y", "series"]);
    let mut by_tenor: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
    for d in &out.dates {
        let date = d.date.to_string();
        est.push(vec![date.clone(), fmt_f64(d.params.hurst), fmt_f64(d.params.nu), fmt_f64(d.params.rho)]);
        for i in 0..d.tenors.len() {
            let td = tenor_days(d.tenors[i]);
            xi.push(vec![date.clone(), td.to_string(), fmt_f64(d.xi[i])]);
            fc.push(vec![date.clone(), td.to_string(), fmt_f64(d.forecasts[i])]);
            lam.push(vec![date.clone(), td.to_string(), fmt_f64(d.lambda[i])]);
            plot.push(vec![date.clone(), fmt_f64(d.lambda[i]), format!("lambda_{td}d")]);
            by_tenor.entry(td).or_default().push(d.lambda[i]);
        }
    }
    let mut summary = Table::new(&["tenor_days", "mean_lambda", "std_lambda", "n"]);
    for (td, xs) in &by_tenor {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        summary.push(vec![td.to_string(), fmt_f64(mean), fmt_f64(sd), xs.len().to_string()]);
        for d in &out.dates {
            plot.push(vec![d.date.to_string(), fmt_f64(mean), format!("mean_{td}d")]);
        }
    }
    vec![
        ("estimates.csv", est),
        ("forecasts.csv", fc),
        ("xi.csv", xi),
        ("lambda.csv", lam),
        ("summary.csv", summary),
        ("plot.csv", plot),
    ]
}

/// Writes every output table into `dir`; returns the paths in write order.
pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    output_tables(out)
        .into_iter()
        .map(|(name, t)| {
            let p = crate::io::output_path(dir, name)?;
            t.write(&p)?;
            Ok(p)
        })
        .collect()
}
