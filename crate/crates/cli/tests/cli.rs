use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndnsmc::dist::Distribution;
use ndnsmc::rng::seeded;

fn ndnsmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndnsmc")).args(args).env_remove("NDNSMC_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn simulate_prints_counters() {
    let v = json(&ndnsmc(&["simulate", "--horizon", "200000", "--send-interval", "2000", "--seed", "3"]));
    assert_eq!(v["all"]["sent"], 100);
    assert_eq!(v["horizon"], 200_000);
    assert_eq!(v["stray_responses"], 0);
}

#[test]
fn seed_comes_from_the_environment() {
    let args = ["simulate", "--horizon", "300000", "--send-interval", "600", "--threads", "2"];
    let flag = ndnsmc(&[&args[..], &["--seed", "77"]].concat());
    let env = Command::new(env!("CARGO_BIN_EXE_ndnsmc")).args(args).env("NDNSMC_SEED", "77").output().unwrap();
    assert_eq!(stdout(&flag), stdout(&env));
}

#[test]
fn estimate_reports_sample_count() {
    let v = json(&ndnsmc(&[
        "estimate",
        "--horizon",
        "100000",
        "--send-interval",
        "3000",
        "--alpha",
        "0.2",
        "--delta-conf",
        "0.2",
    ]));
    assert_eq!(v["n"], 29);
    assert_eq!(v["p_hat"], 1.0);
}

#[test]
fn budget_refuses_large_estimates() {
    let o = ndnsmc(&["estimate", "--horizon", "100000", "--budget", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("150"));
}

#[test]
fn sprt_reaches_a_verdict() {
    let v = json(&ndnsmc(&[
        "sprt",
        "--horizon",
        "100000",
        "--send-interval",
        "3000",
        "--theta",
        "0.5",
        "--half-width",
        "0.1",
    ]));
    assert_eq!(v["verdict"], "upper");
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[factors]\nthreads = [1]\n").unwrap();
    for args in [
        vec!["simulate", "--threads", "0"],
        vec!["simulate", "--threads", "9"],
        vec!["estimate", "--alpha", "2"],
        vec!["sweep", bad.to_str().unwrap()],
        vec!["sweep", "/nonexistent/sweep.toml"],
        vec!["simulate", "--placement", "P7"],
    ] {
        let o = ndnsmc(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn write_sweep(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("sweep.toml");
    fs::write(
        &spec,
        r#"
output = "results.csv"

[fixed]
alpha = 0.3
delta_conf = 0.3
master_seed = 5
horizon = 100000
send_interval = 800

[factors]
n_forwarding_threads = [1, 2]
numa_placement = ["P1", "P4"]
"#,
    )
    .unwrap();
    spec
}

#[test]
fn sweep_then_effects_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path());
    let o = ndnsmc(&["sweep", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = dir.path().join("results.csv");
    let text = fs::read_to_string(&results).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "#schema=ndnsmc-results/1");
    assert_eq!(lines.len(), 2 + 4);
    assert!(lines[2].starts_with("1,3,0,800,4096,P1,"));

    let o = ndnsmc(&["effects", results.to_str().unwrap()]);
    let effects = stdout(&o);
    assert!(effects.starts_with("#schema=ndnsmc-effects/1\n"));
    assert!(effects.contains("mean_ratio,numa_placement,P4,2,"));

    let series = dir.path().join("series.csv");
    let o = ndnsmc(&[
        "series",
        results.to_str().unwrap(),
        "--x",
        "n_forwarding_threads",
        "--curve",
        "numa_placement",
        "--response",
        "p-hat",
        "--out",
        series.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = fs::read_to_string(&series).unwrap();
    assert_eq!(s.lines().count(), 2 + 4);
    assert!(s.contains("n_forwarding_threads,numa_placement,p_hat,stderr\n"));
    assert_eq!(ndnsmc(&["series", results.to_str().unwrap(), "--x", "bogus"]).status.code(), Some(2));

    let r = results.to_str().unwrap();
    let o = ndnsmc(&["series", r, "--x", "n-forwarding-threads", "--where", "numa_placement=P4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 2 + 2);
    assert!(s.lines().skip(2).all(|l| l.split(',').nth(1) == Some("")), "{s}");
    assert_eq!(ndnsmc(&["series", r, "--x", "n_forwarding_threads"]).status.code(), Some(2));
    assert_eq!(
        ndnsmc(&["series", r, "--x", "n_forwarding_threads", "--where", "numa_placement"]).status.code(),
        Some(2)
    );
}

#[test]
fn sweep_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (out, seed) in [(&a, "5"), (&b, "6")] {
        let o =
            ndnsmc(&["sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed, "--jobs", "1"]);
        assert!(o.status.success());
    }
    assert!(!dir.path().join("results.csv").exists());
    let o = ndnsmc(&["sweep", spec.to_str().unwrap(), "--budget", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("44"));
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn fit_lognormal_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    let d = Distribution::lognormal_median(1100.0, 0.3);
    let mut rng = seeded(4);
    let text: String = (0..10_000).map(|_| format!("{}\n", d.sample(&mut rng))).collect();
    fs::write(&path, text).unwrap();
    let v = json(&ndnsmc(&["fit", path.to_str().unwrap()]));
    assert!(v["ks_distance"].as_f64().unwrap() <= 0.05);
    assert_eq!(v["n"], 10_000);

    fs::write(&path, "12\nabc\n").unwrap();
    assert_eq!(ndnsmc(&["fit", path.to_str().unwrap()]).status.code(), Some(2));
}
