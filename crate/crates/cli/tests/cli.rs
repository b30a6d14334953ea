use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roughrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughrisk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

const QUOTES: &str = "date,tenor_days,strike_vol\n\
2024-01-02,30,0.18\n2024-01-02,91,0.19\n2024-01-02,182,0.2\n2024-01-02,365,0.21\n2024-01-02,730,0.22\n";

#[test]
fn bootstrap_writes_forward_variances() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.csv", QUOTES);
    let o = roughrisk(&["bootstrap-xi", "--quotes", &q]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 6);
    // first forward variance is the first strike squared
    let first: Vec<&str> = rows[1].split(',').collect();
    let xi: f64 = first.last().unwrap().parse().unwrap();
    assert!((xi - 0.18 * 0.18).abs() < 1e-12, "{}", rows[1]);
}

#[test]
fn empty_quote_file_is_no_work() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.csv", "date,tenor_days,strike_vol\n");
    assert_eq!(code(&roughrisk(&["bootstrap-xi", "--quotes", &q])), 3);
}

#[test]
fn malformed_input_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.csv", "date,tenor_days,strike_vol\n2024-01-02,30,-0.1\n");
    let o = roughrisk(&["bootstrap-xi", "--quotes", &q]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("q.csv:2:"));
}

#[test]
fn randomized_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "hurst = 0.1\nnu = 1.0\nsteps = 16\npaths = 10\nhorizon = 1.0\n");
    assert_eq!(code(&roughrisk(&["simulate", "--config", &cfg])), 2);
    let o = roughrisk(&["simulate", "--config", &cfg, "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("path,t,v,s\n"));
}

#[test]
fn unknown_config_keys_are_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "hurst = 0.1\nvolvol = 2.0\n");
    assert_eq!(code(&roughrisk(&["riccati", "--config", &cfg])), 2);
}

#[test]
fn riccati_starts_from_zero_at_maturity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "hurst = 0.2\nnu = 0.8\nkappa = 1.0\ntheta = 0.04\nsigma = 0.3\ny0 = 0.04\nsteps = 64\n",
    );
    let o = roughrisk(&["riccati", "--config", &cfg, "--maturity", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().last().unwrap(), "1,0,0");
}

fn pipeline_outputs(cfg: &str, out: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let o = roughrisk(&[
        "run-pipeline",
        "--config",
        cfg,
        "--seed",
        "11",
        "--threads",
        threads,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn pipeline_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "hurst = 0.15\nnu = 1.2\nrho = -0.6\nxi0 = 0.04\nnormalization = \"compensated\"\n\
         synthetic_days = 400\nwindow = 200\nsynthetic_quote_dates = 3\n",
    );
    let a = pipeline_outputs(&cfg, &dir.path().join("a"), "1");
    let b = pipeline_outputs(&cfg, &dir.path().join("b"), "3");
    assert_eq!(a.len(), 6);
    assert_eq!(a, b);
}

#[test]
fn synthetic_pipeline_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", "hurst = 0.15\nnu = 1.2\nrho = -0.6\nsynthetic_days = 300\n");
    let out = dir.path().join("o");
    assert_eq!(code(&roughrisk(&["run-pipeline", "--config", &cfg, "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn extract_premium_accepts_negative_rho() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.csv", QUOTES);
    let o = roughrisk(&["extract-premium", "--quotes", &q, "--H", "0.1", "--nu", "1.5", "--rho", "-0.7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("date,tenor_days,lambda\n"));
    assert_eq!(text.lines().count(), 6);
}
