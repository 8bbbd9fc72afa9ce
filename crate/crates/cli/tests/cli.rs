use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use msl_core::io::write_theta;
use msl_core::MslParams;
use nalgebra::DMatrix;

fn theta() -> MslParams {
    MslParams {
        loadings: DMatrix::from_column_slice(2, 1, &[1.0, 0.9]),
        idio_var: vec![1.5, 0.9],
        logvol_mean: vec![1.0, 0.6],
        persistence: vec![0.6, 0.7],
        innovation_var: vec![0.4, 0.5],
        risk_premia: vec![0.0013],
        regime_stay: 0.87,
    }
}

fn msl(cmd: &str, dir: &Path, out: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msl"))
        .args([cmd, "--config"])
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join(out))
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("run.toml"), body).unwrap();
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "[simulate]\nperiods = 10\nbogus = 1\n");
    let out = msl("simulate", dir.path(), "sim");
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("msl simulate: error:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn malformed_returns_exit_with_data_code_and_line_number() {
    let dir = tempfile::tempdir().unwrap();
    write_theta(&theta(), &dir.path().join("theta.csv")).unwrap();
    fs::write(
        dir.path().join("returns.csv"),
        "# units: percent\ndate,a,b\n2020-01-03,0.1,0.2\n2020-01-10,0.3,oops\n",
    )
    .unwrap();
    write_config(
        dir.path(),
        "[model]\ntheta = \"theta.csv\"\n[data]\nreturns = \"returns.csv\"\n[filter]\nseed = 1\n",
    );
    let out = msl("filter", dir.path(), "f");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn constant_chain_summarizes_with_zero_mcse() {
    let dir = tempfile::tempdir().unwrap();
    let mut chain = String::from("iter,beta2,phi1,log_prior,avg_loglik,accepted\n");
    for i in 1..=50 {
        chain.push_str(&format!("{i},0.75,0.5,-1.0,-10.0,0\n"));
    }
    fs::write(dir.path().join("chain.csv"), chain).unwrap();
    write_config(dir.path(), "[summarize]\nchain = \"chain.csv\"\nburn_in = 10\n");
    let out = msl("summarize", dir.path(), "s");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("s/summary.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], ",est,mcse,95.credible.lower,95.credible.upper");
    for (line, value) in lines[1..].iter().zip([0.75, 0.5]) {
        let cells: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells, vec![value, 0.0, value, value]);
    }
}

#[test]
fn backtest_writes_one_row_per_test_week() {
    let dir = tempfile::tempdir().unwrap();
    write_theta(&theta(), &dir.path().join("theta.csv")).unwrap();
    write_config(
        dir.path(),
        r#"
[model]
theta = "theta.csv"
[simulate]
periods = 60
seed = 3
[data]
returns = "sim/returns.csv"
test_start = "2006-06-01"
test_end = "2006-09-30"
[backtest]
seed = 4
particles = 30
"#,
    );
    assert!(msl("simulate", dir.path(), "sim").status.success());
    let out = msl("backtest", dir.path(), "bt");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let returns = fs::read_to_string(dir.path().join("sim/returns.csv")).unwrap();
    let in_window = returns
        .lines()
        .filter_map(|l| l.split(',').next())
        .filter(|d| d.len() == 10 && *d >= "2006-06-01" && *d <= "2006-09-30")
        .count();
    let backtest = fs::read_to_string(dir.path().join("bt/backtest.csv")).unwrap();
    assert!(in_window > 0);
    assert_eq!(backtest.lines().count() - 1, in_window);
}

#[test]
fn runs_are_reproducible_from_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    write_theta(&theta(), &dir.path().join("theta.csv")).unwrap();
    write_config(dir.path(), "[model]\ntheta = \"theta.csv\"\n[simulate]\nperiods = 20\n");
    assert!(msl("simulate", dir.path(), "a").status.success());
    let echoed = fs::read_to_string(dir.path().join("a/config.toml")).unwrap();
    assert!(echoed.contains("seed = "), "seed must be recorded: {echoed}");
    fs::write(dir.path().join("run.toml"), echoed).unwrap();
    assert!(msl("simulate", dir.path(), "b").status.success());
    assert_eq!(
        fs::read(dir.path().join("a/returns.csv")).unwrap(),
        fs::read(dir.path().join("b/returns.csv")).unwrap()
    );
}
