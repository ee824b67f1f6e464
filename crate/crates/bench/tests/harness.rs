use std::process::Command;

use cdfilter_bench::config::{illcond_preset, table2_preset, Example};
use cdfilter_bench::{parse_csv, run_scenario, write_csv, RunRecord};

fn csv_without_timing(records: &[RunRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(7);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn small_table() -> cdfilter_bench::ScenarioConfig {
    let mut cfg = table2_preset(4, 11);
    cfg.periods = vec![4.0, 12.0];
    cfg.horizon = 60.0;
    cfg
}

#[test]
fn same_seed_same_csv() {
    let cfg = small_table();
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.len(), 8);
    assert_eq!(csv_without_timing(&a), csv_without_timing(&b));
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = small_table();
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| run_scenario(&cfg).unwrap())
    };
    assert_eq!(csv_without_timing(&run(1)), csv_without_timing(&run(3)));
}

#[test]
fn illcond_sweep_is_repeatable() {
    let mut cfg = illcond_preset(Example::Tracking, 1e-3, 2, 5).unwrap();
    cfg.horizon = 35.0;
    let a: Vec<f64> = run_scenario(&cfg).unwrap().iter().map(|r| r.armse).collect();
    let b: Vec<f64> = run_scenario(&cfg).unwrap().iter().map(|r| r.armse).collect();
    assert_eq!(a.len(), 12);
    assert_eq!(a, b);
}

#[test]
fn emitted_csv_parses_back() {
    let recs = run_scenario(&small_table()).unwrap();
    let mut buf = Vec::new();
    write_csv(&recs, &mut buf).unwrap();
    assert_eq!(parse_csv(buf.as_slice()).unwrap(), recs);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdfilter"))
}

#[test]
fn cli_exit_codes() {
    assert_eq!(cli().args(["run", "--config", "/nonexistent.toml"]).status().unwrap().code(), Some(1));
    assert_eq!(cli().arg("--unknown").status().unwrap().code(), Some(1));
    let dir = std::env::temp_dir().join(format!("cdfilter-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nexample = \"tracking\"\nperiods = []\nhorizon = 10\ntruth_step = 1e-3\nvariants = [\"hybrid-svd\"]\n").unwrap();
    let out = cli().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("periods"));
}

#[test]
fn cli_run_writes_csv() {
    let dir = std::env::temp_dir().join(format!("cdfilter-run-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("scenario.toml");
    std::fs::write(
        &cfg,
        "name = \"vdp\"\nexample = \"van_der_pol\"\nperiods = [0.2]\nlambdas = [1.0]\nhorizon = 1.0\n\
         monte_carlo = 2\ntruth_step = 1e-4\nvariants = [\"hybrid-svd\", \"baseline16-dense\"]\n",
    )
    .unwrap();
    let csv = dir.join("out.csv");
    let out = cli()
        .args(["run", "--threads", "2", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("vdp,0.2,,1,hybrid-svd,9,"));
    // A runtime failure (unwritable output) is exit code 2.
    let out = cli()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--out", "/nonexistent-dir/out.csv"])
        .status()
        .unwrap();
    assert_eq!(out.code(), Some(2));
    let bad_env = cli()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("CDFILTER_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_env.stderr).contains("CDFILTER_THREADS"));
}

#[test]
fn selftest_passes() {
    let out = cli().arg("selftest").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7);
}
