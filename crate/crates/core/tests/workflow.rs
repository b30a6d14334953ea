use std::path::Path;

use roughrisk::config::RunConfig;
use roughrisk::forecastr::{forecast_driver, ForecastOptions};
use roughrisk::gauss::{DriverConfig, DriverPath};
use roughrisk::gfo::{SampledPath, VolterraScheme};
use roughrisk::io::{fmt_f64, tenor_days, Table};
use roughrisk::pipeline::{output_tables, run_pipeline, synthetic_inputs, write_outputs, PipelineStatus};

const SYNTHETIC: &str = "hurst = 0.2\nnu = 1.0\nrho = -0.6\nxi0 = 0.04\nnormalization = \"compensated\"\n\
synthetic_days = 500\nwindow = 250\nsynthetic_quote_dates = 3\n";

fn done(s: PipelineStatus) -> roughrisk::pipeline::PipelineOutput {
    match s {
        PipelineStatus::Done(o) => o,
        other => panic!("expected output, got {other:?}"),
    }
}

#[test]
fn files_written_from_a_fixture_reproduce_the_fixture_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(SYNTHETIC, Path::new(".")).unwrap();
    let (inputs, _) = synthetic_inputs(&cfg, 21).unwrap();
    let vols = inputs.vols.as_ref().unwrap();

    let mut rv = Table::new(&["date", "rv"]);
    let mut closes = Table::new(&["date", "close"]);
    for (i, d) in vols.dates().iter().enumerate() {
        rv.push(vec![d.to_string(), fmt_f64(vols.values()[i])]);
        closes.push(vec![d.to_string(), fmt_f64(inputs.closes.as_ref().unwrap()[i])]);
    }
    let mut quotes = Table::new(&["date", "tenor_days", "strike_vol"]);
    for set in &inputs.quotes {
        for q in &set.quotes {
            quotes.push(vec![set.as_of.to_string(), tenor_days(q.tenor).to_string(), fmt_f64(q.strike_vol)]);
        }
    }
    rv.write(&dir.path().join("rv.csv")).unwrap();
    closes.write(&dir.path().join("closes.csv")).unwrap();
    quotes.write(&dir.path().join("quotes.csv")).unwrap();

    let file_cfg = RunConfig::from_toml(
        "hurst = 0.2\nnu = 1.0\nrho = -0.6\nxi0 = 0.04\nnormalization = \"compensated\"\nwindow = 250\n\
         vol_series = \"rv.csv\"\ncloses = \"closes.csv\"\nquotes = \"quotes.csv\"\n",
        dir.path(),
    )
    .unwrap();
    let from_files = done(run_pipeline(&file_cfg, None).unwrap());
    let fixture = done(run_pipeline(&cfg, Some(21)).unwrap());
    assert_eq!(from_files.dates, fixture.dates);

    let written = write_outputs(&from_files, &dir.path().join("out")).unwrap();
    assert_eq!(written.len(), output_tables(&from_files).len());
    assert!(written.iter().all(|p| p.exists()));
}

#[test]
fn fixture_runs_report_one_row_per_quote_date() {
    let cfg = RunConfig::from_toml(SYNTHETIC, Path::new(".")).unwrap();
    let out = done(run_pipeline(&cfg, Some(5)).unwrap());
    assert_eq!(out.dates.len(), 3);
    for d in &out.dates {
        assert_eq!(d.lambda.len(), 5);
        assert!(d.params.hurst > 0.0 && d.params.hurst < 0.5);
        assert!(d.xi.iter().chain(&d.forecasts).all(|x| *x > 0.0));
    }
}

/// The conditional forecast of a rough driver beats the random-walk forecast
/// Z_{t+Δ} ≈ Z_t out of sample.
#[test]
fn driver_forecast_beats_the_last_value() {
    let h = 0.1;
    let dt = 1.0 / 252.0;
    let (n, ahead) = (600, 10);
    let cfg = DriverConfig::new(n + ahead, (n + ahead) as f64 * dt, 1, 0.0, h, 17)
        .unwrap()
        .with_scheme(VolterraScheme::Hybrid);
    let w = cfg.volterra_weights().unwrap();
    let (mut se_fc, mut se_rw) = (0.0, 0.0);
    for p in 0..40 {
        let d = DriverPath::draw(&cfg, p, false);
        let z = w.convolve(&d.dz, &d.eps);
        for origin in [300, 450, 600] {
            let hist = SampledPath::new(dt, z[..=origin].to_vec()).unwrap();
            let f = forecast_driver(&hist, ahead as f64 * dt, cfg.hurst, ForecastOptions::default()).unwrap();
            let truth = z[origin + ahead];
            se_fc += (f.mean - truth).powi(2);
            se_rw += (z[origin] - truth).powi(2);
        }
    }
    assert!(se_fc < 0.95 * se_rw, "forecast {se_fc} vs last value {se_rw}");
}
