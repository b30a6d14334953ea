//! Command-line front end: simulation, pricing, diagnostics, estimation,
//! forecasting and premium extraction.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roughrisk::cir::solve_riccati;
use roughrisk::config::RunConfig;
use roughrisk::error::{Error, Result};
use roughrisk::inference::{estimate_rolling, VolSeries};
use roughrisk::io::{fmt_f64, output_path, read_closes, read_varswap_quotes, read_vol_series, tenor_days, Notice, Table};
use roughrisk::measure::martingale_suite;
use roughrisk::models::{variance_swap_samples, Simulator};
use roughrisk::mc::MeanEstimate;
use roughrisk::pipeline::{forecast_from_rv, output_tables, run_on_inputs, run_pipeline, Inputs, PipelineStatus};
use roughrisk::premium::bootstrap_forward_variance;

const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NO_WORK: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "roughrisk", version, about = "Rough volatility risk premium toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; required by every randomized subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; tables go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Simulate variance and spot paths.
    Simulate {
        /// "p" (historical) or "q" (pricing, with the configured premium).
        #[arg(long, default_value = "p")]
        measure: String,
    },
    /// Variance-swap strikes by Monte Carlo under the pricing measure.
    PriceVarswap {
        /// Maturities in years, on the simulation grid.
        #[arg(long, value_delimiter = ',', required = true)]
        maturity: Vec<f64>,
    },
    /// Unit-mean checks of the density and discounted spot.
    VerifyMartingale,
    /// Solve the Riccati system of the CIR premium.
    Riccati {
        #[arg(long)]
        maturity: Option<f64>,
        /// "feynman-kac", "reversed-speed" or "level-rate".
        #[arg(long)]
        form: Option<String>,
    },
    /// Rolling roughness, vol-of-vol and correlation estimates.
    Estimate {
        /// `date,rv` CSV.
        #[arg(long)]
        rv: Option<PathBuf>,
        /// `date,close` CSV on the same dates.
        #[arg(long)]
        closes: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        step: Option<usize>,
    },
    /// Historical variance forecast from a realised volatility history.
    Forecast {
        /// `date,rv` CSV; the forecast origin is its last date.
        #[arg(long)]
        history: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        horizon_days: Vec<u32>,
        #[arg(long = "H")]
        hurst: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
    },
    /// Forward variance from variance-swap quotes.
    BootstrapXi {
        /// `date,tenor_days,strike_vol` CSV.
        #[arg(long)]
        quotes: Option<PathBuf>,
    },
    /// Piecewise-constant premium per quote date.
    ExtractPremium {
        #[arg(long)]
        quotes: Option<PathBuf>,
        /// Optional `date,rv` CSV for conditional historical forecasts.
        #[arg(long)]
        rv: Option<PathBuf>,
        #[arg(long = "H")]
        hurst: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        rho: Option<f64>,
        /// "lambda", "gamma" or "estimation".
        #[arg(long)]
        normalization: Option<String>,
    },
    /// Full workflow from a configuration file.
    RunPipeline,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Parse { .. } | Error::Csv(_) => EXIT_INVALID,
        _ => EXIT_RUNTIME,
    }
}

fn notify(notices: &[Notice]) {
    for n in notices {
        eprintln!("notice: {n}");
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    // flags win over the file
    cfg.seed = common.seed.or(cfg.seed);
    cfg.paths = common.paths.or(cfg.paths);
    cfg.steps = common.steps.or(cfg.steps);
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn require_seed(common: &Common) -> Result<u64> {
    common
        .seed
        .ok_or_else(|| Error::Config("this subcommand is randomized and needs an explicit --seed".into()))
}

/// Writes one table as `dir/name`, or to stdout without a directory.
fn emit(table: &Table, out: Option<&Path>, name: &str) -> Result<()> {
    match out {
        Some(dir) => table.write(&output_path(dir, name)?),
        None => table.emit(None),
    }
}

fn need_path(p: Option<PathBuf>, fallback: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    p.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("missing input '{key}'")))
}

fn simulate(cfg: &RunConfig, measure: &str, out: Option<&Path>) -> Result<u8> {
    let params = cfg.model()?;
    let drivers = cfg.driver(&params)?;
    let sim = match measure {
        "p" => Simulator::p_measure(&params, &drivers)?,
        "q" => Simulator::q_measure(&params, &cfg.premium()?, &drivers)?,
        other => return Err(Error::Config(format!("unknown measure '{other}'"))),
    };
    let dt = sim.dt();
    let rows = sim.map(false, |p, path| {
        (0..path.v.len())
            .map(|i| vec![p.to_string(), fmt_f64(i as f64 * dt), fmt_f64(path.v[i]), fmt_f64(path.s[i])])
            .collect::<Vec<_>>()
    });
    let mut t = Table::new(&["path", "t", "v", "s"]);
    rows.into_iter().flatten().for_each(|r| t.push(r));
    emit(&t, out, "paths.csv")?;
    Ok(0)
}

fn price_varswap(cfg: &RunConfig, maturities: &[f64], out: Option<&Path>) -> Result<u8> {
    let params = cfg.model()?;
    let drivers = cfg.driver(&params)?;
    let sim = Simulator::q_measure(&params, &cfg.premium()?, &drivers)?;
    let mut t = Table::new(&["maturity", "strike", "se", "strike_vol"]);
    for &m in maturities {
        let est = MeanEstimate::from_samples(&variance_swap_samples(&sim, m)?);
        t.push(vec![fmt_f64(m), fmt_f64(est.mean), fmt_f64(est.se), fmt_f64(est.mean.sqrt())]);
    }
    emit(&t, out, "varswap.csv")?;
    Ok(0)
}

fn verify_martingale(cfg: &RunConfig, out: Option<&Path>) -> Result<u8> {
    let params = cfg.model()?;
    let drivers = cfg.driver(&params)?;
    let reports = martingale_suite(&cfg.girsanov()?, &params, &drivers)?;
    let mut t = Table::new(&["check", "target", "mean", "se", "z", "pass"]);
    for (name, r) in &reports {
        t.push(vec![
            name.to_string(),
            fmt_f64(r.target),
            fmt_f64(r.plain.mean),
            fmt_f64(r.plain.se),
            fmt_f64(r.z),
            r.pass.to_string(),
        ]);
    }
    emit(&t, out, "martingale.csv")?;
    Ok(if reports.iter().all(|(_, r)| r.pass) { 0 } else { EXIT_CHECK_FAILED })
}

fn riccati(cfg: &RunConfig, maturity: Option<f64>, form: Option<String>, out: Option<&Path>) -> Result<u8> {
    let mut cfg = cfg.clone();
    if form.is_some() {
        cfg.riccati_form = form;
    }
    let maturity = maturity.or(cfg.maturity).unwrap_or(1.0);
    let h = roughrisk::kernels::HolderIndices::new(cfg.hurst()?)?;
    let sol = solve_riccati(&cfg.cir_params()?, cfg.nu()?, h, maturity, cfg.steps.unwrap_or(256), cfg.riccati_form()?)?;
    let mut t = Table::new(&["t", "C", "A"]);
    for i in 0..sol.grid.len() {
        t.push(vec![fmt_f64(sol.grid[i]), fmt_f64(sol.c[i]), fmt_f64(sol.a[i])]);
    }
    emit(&t, out, "riccati.csv")?;
    Ok(0)
}

fn closes_for(series: &VolSeries, path: &Path) -> Result<Vec<f64>> {
    let (dates, closes, notices) = read_closes(path)?;
    notify(&notices);
    if dates != series.dates() {
        return Err(Error::Config("closes and volatility series must share their dates".into()));
    }
    Ok(closes)
}

fn estimate(cfg: &RunConfig, rv: PathBuf, closes: Option<PathBuf>, window: Option<usize>, step: Option<usize>, out: Option<&Path>) -> Result<u8> {
    let (series, notices) = read_vol_series(&rv)?;
    notify(&notices);
    let closes = closes.map(|p| closes_for(&series, &p)).transpose()?;
    let mut est = cfg.estimator();
    est.window = window.unwrap_or(est.window);
    est.step = step.unwrap_or(est.step);
    let rows = estimate_rolling(&series, closes.as_deref(), &est, cfg.rho_proxy()?)?;
    let mut t = Table::new(&["window_end", "H_hat", "nu_hat", "rho_hat"]);
    for (e, r) in rows {
        if let Some(r) = r.filter(|r| r.clamped) {
            eprintln!("notice: {}: correlation proxy {} clamped", r.window_end, r.raw);
        }
        t.push(vec![
            e.window_end.to_string(),
            fmt_f64(e.h),
            fmt_f64(e.nu),
            r.map(|r| fmt_f64(r.rho)).unwrap_or_default(),
        ]);
    }
    emit(&t, out, "estimates.csv")?;
    Ok(0)
}

fn forecast(cfg: &RunConfig, history: &Path, horizon_days: &[u32], hurst: Option<f64>, nu: Option<f64>, out: Option<&Path>) -> Result<u8> {
    let (series, notices) = read_vol_series(history)?;
    notify(&notices);
    let h = hurst.map_or_else(|| cfg.hurst(), Ok)?;
    let nu = nu.map_or_else(|| cfg.nu(), Ok)?;
    let horizons: Vec<f64> = horizon_days.iter().map(|&d| d as f64 / roughrisk::inference::TRADING_DAYS).collect();
    let res = forecast_from_rv(series.values(), h, nu, &horizons, cfg.forecast_options()?)?;
    let mut t = Table::new(&["horizon", "mean", "var", "v_forecast"]);
    for r in res {
        t.push(vec![fmt_f64(r.horizon), fmt_f64(r.mean), fmt_f64(r.var), fmt_f64(r.v_forecast)]);
    }
    emit(&t, out, "forecast.csv")?;
    Ok(0)
}

fn bootstrap_xi(cfg: &RunConfig, quotes: Option<PathBuf>, out: Option<&Path>) -> Result<u8> {
    let path = need_path(quotes, &cfg.quotes, "quotes")?;
    let (sets, notices) = read_varswap_quotes(&path)?;
    notify(&notices);
    if sets.is_empty() {
        return Ok(EXIT_NO_WORK);
    }
    let mut t = Table::new(&["date", "tenor_days", "xi"]);
    for s in &sets {
        let c = bootstrap_forward_variance(s)?;
        for w in c.warnings() {
            eprintln!("warning: {}: forward variance {} at {} days", s.as_of, w.xi, tenor_days(w.tenor));
        }
        for (tt, x) in c.tenors().iter().zip(c.xi()) {
            t.push(vec![s.as_of.to_string(), tenor_days(*tt).to_string(), fmt_f64(*x)]);
        }
    }
    emit(&t, out, "xi.csv")?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn extract(
    cfg: &RunConfig,
    quotes: Option<PathBuf>,
    rv: Option<PathBuf>,
    hurst: Option<f64>,
    nu: Option<f64>,
    rho: Option<f64>,
    normalization: Option<String>,
    out: Option<&Path>,
) -> Result<u8> {
    let mut cfg = cfg.clone();
    cfg.hurst = hurst.or(cfg.hurst);
    cfg.nu = nu.or(cfg.nu);
    cfg.rho = rho.or(cfg.rho);
    if normalization.is_some() {
        cfg.premium_normalization = normalization;
    }
    let path = need_path(quotes, &cfg.quotes, "quotes")?;
    let (sets, mut notices) = read_varswap_quotes(&path)?;
    let vols = match rv.or_else(|| cfg.vol_series.clone()) {
        Some(p) => {
            let (s, n) = read_vol_series(&p)?;
            notices.extend(n);
            Some(s)
        }
        None => None,
    };
    let inputs = Inputs { vols, closes: None, quotes: sets };
    match run_on_inputs(&cfg, &inputs, notices)? {
        PipelineStatus::NoWork(n) => {
            notify(&n);
            Ok(EXIT_NO_WORK)
        }
        PipelineStatus::Done(res) => {
            notify(&res.notices);
            let (_, lam) = output_tables(&res)
                .into_iter()
                .find(|(n, _)| *n == "lambda.csv")
                .expect("lambda table is always produced");
            emit(&lam, out, "lambda.csv")?;
            Ok(0)
        }
    }
}

fn pipeline(cfg: &RunConfig, common: &Common) -> Result<u8> {
    if common.config.is_none() {
        return Err(Error::Config("run-pipeline needs --config".into()));
    }
    if cfg.synthetic_days.is_some() {
        require_seed(common)?;
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("run-pipeline needs --out or an 'out' key".into()))?;
    match run_pipeline(cfg, common.seed)? {
        PipelineStatus::NoWork(n) => {
            notify(&n);
            Ok(EXIT_NO_WORK)
        }
        PipelineStatus::Done(res) => {
            notify(&res.notices);
            for p in roughrisk::pipeline::write_outputs(&res, &out)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(0)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_deref();
    match cli.cmd {
        Cmd::Simulate { measure } => {
            require_seed(&cli.common)?;
            simulate(&cfg, &measure, out)
        }
        Cmd::PriceVarswap { maturity } => {
            require_seed(&cli.common)?;
            price_varswap(&cfg, &maturity, out)
        }
        Cmd::VerifyMartingale => {
            require_seed(&cli.common)?;
            verify_martingale(&cfg, out)
        }
        Cmd::Riccati { maturity, form } => riccati(&cfg, maturity, form, out),
        Cmd::Estimate { rv, closes, window, step } => {
            let rv = need_path(rv, &cfg.vol_series, "rv")?;
            let closes = closes.or_else(|| cfg.closes.clone());
            estimate(&cfg, rv, closes, window, step, out)
        }
        Cmd::Forecast { history, horizon_days, hurst, nu } => forecast(&cfg, &history, &horizon_days, hurst, nu, out),
        Cmd::BootstrapXi { quotes } => bootstrap_xi(&cfg, quotes, out),
        Cmd::ExtractPremium { quotes, rv, hurst, nu, rho, normalization } => {
            extract(&cfg, quotes, rv, hurst, nu, rho, normalization, out)
        }
        Cmd::RunPipeline => pipeline(&cfg, &cli.common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        // reader closed stdout early, e.g. `| head`
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
