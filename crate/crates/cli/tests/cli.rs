use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nldelay")).args(args).output().expect("binary runs")
}

fn run_json(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad json ({e}): {}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    });
    (out.status.code().unwrap(), v)
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn constants_for_delayed_poisson() {
    let s = scenario("delayed-poisson");
    let (code, v) = run_json(&["constants", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["tool"], "nldelay");
    assert_eq!(v["command"], "constants");
    assert_eq!(v["scenario_hash"].as_str().unwrap().len(), 64);
    let v = &v["constants"];
    assert_eq!(f(&v["Gamma"]), 1.0);
    assert_eq!(f(&v["K"][0]), 0.5);
    assert_eq!(f(&v["Sigma"][0][0]), 0.125);
    assert_eq!(v["kernel_dim"], 0);
}

#[test]
fn dde_gamma_for_fig1() {
    let s = scenario("fig1");
    let (code, v) = run_json(&["dde-gamma", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!((f(&v["gamma"]) - 1.00498134836006).abs() < 1e-10);
    assert!(f(&v["delta_at_gamma"]).abs() < 1e-12);
}

#[test]
fn dde_gamma_needs_hyperbolic_rate() {
    let s = scenario("classical-poisson");
    let out = run(&["dde-gamma", "--scenario", s.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("delayed-poisson")).unwrap()
        .replace("[run]", "[run]\nbogus_field = 3");
    std::fs::write(&bad, text).unwrap();
    let out_path = dir.path().join("out.json");
    let out = run(&["constants", "--scenario", bad.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());

    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["constants", "--scenario", missing.to_str().unwrap()]).status.code(), Some(2));

    let s = scenario("delayed-poisson");
    let neg = run(&["simulate", "--scenario", s.to_str().unwrap(), "--horizon=-1"]);
    assert_eq!(neg.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_across_workers() {
    let s = scenario("fig1");
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (k, workers) in ["1", "3", "3"].iter().enumerate() {
        let p = dir.path().join(format!("run{k}.csv"));
        let out = run(&[
            "simulate", "--scenario", s.to_str().unwrap(), "--horizon", "20", "--probes", "5,20", "--n", "64",
            "--seed", "11", "--workers", workers, "--out", p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(std::fs::read(&p).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    let mut lines = text.lines();
    let pre = lines.next().unwrap();
    assert!(pre.starts_with("# tool=nldelay version="));
    assert!(pre.contains("seed=11") && pre.contains("n=64"));
    assert_eq!(lines.next().unwrap(), "trajectory,5,20");
    assert_eq!(lines.count(), 64);

    let other = run(&["simulate", "--scenario", s.to_str().unwrap(), "--horizon", "20", "--n", "64", "--seed", "12"]);
    assert_ne!(other.stdout, text.as_bytes());
}

#[test]
fn lattice_csv_masses_sum_to_one() {
    let s = scenario("delayed-poisson");
    let out = run(&["lattice", "--scenario", s.to_str().unwrap(), "--horizon", "3", "--probes", "1,3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "t,x0,mass");
    let mut totals = std::collections::BTreeMap::<String, f64>::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let m: f64 = cols[2].parse().unwrap();
        assert!(m >= 0.0);
        *totals.entry(cols[0].to_string()).or_default() += m;
    }
    assert_eq!(totals.len(), 2);
    for total in totals.values() {
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lattice_rejects_continuous_jumps() {
    let s = scenario("fig2");
    assert_eq!(run(&["lattice", "--scenario", s.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn verify_clt_report_is_consistent() {
    let s = scenario("delayed-poisson");
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("clt.json");
    let z_path = dir.path().join("z.csv");
    let args = [
        "verify-clt", "--scenario", s.to_str().unwrap(), "--n", "4000", "--seed", "5", "--out",
        out_path.to_str().unwrap(), "--z-out", z_path.to_str().unwrap(),
    ];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["n"], 4000);
    for r in v["profile"]["reports"].as_array().unwrap() {
        let mut ok = true;
        for a in r["axes"].as_array().unwrap() {
            ok &= f(&a["ks"]) <= f(&a["ks_tolerance"]);
        }
        assert_eq!(r["pass"].as_bool().unwrap(), ok);
    }
    let z = std::fs::read_to_string(&z_path).unwrap();
    assert_eq!(z.lines().filter(|l| !l.starts_with('#')).count(), 4001);

    let again = dir.path().join("again.json");
    let mut args2 = args;
    args2[8] = again.to_str().unwrap();
    run(&args2[..9]);
    assert_eq!(std::fs::read(&out_path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn verify_clt_fails_honestly_before_the_asymptotic_regime() {
    let s = scenario("fig2");
    let (code, v) = run_json(&["verify-clt", "--scenario", s.to_str().unwrap(), "--horizon", "2", "--probes", "2", "--n", "20000"]);
    assert_eq!(code, 1);
    assert_eq!(v["pass"], false);
}

#[test]
fn verify_clt_path_recentring() {
    let s = scenario("fig1");
    let (code, v) = run_json(&["verify-clt", "--scenario", s.to_str().unwrap(), "--recentring", "path", "--n", "400"]);
    assert_eq!(code, 0);
    assert_eq!(v["recentring"], "path");
}

#[test]
fn verify_lln_and_lattice_pass() {
    let s = scenario("delayed-poisson");
    let (code, v) = run_json(&["verify-lln", "--scenario", s.to_str().unwrap(), "--n", "500"]);
    assert_eq!(code, 0);
    assert_eq!(v["pass"], true);

    let (code, v) = run_json(&["verify-lattice", "--scenario", s.to_str().unwrap(), "--probes", "1,3", "--horizon", "3", "--n", "20000"]);
    assert_eq!(code, 0, "{v}");
    for p in v["probes"].as_array().unwrap() {
        assert!(f(&p["total_variation"]) <= f(&p["tolerance"]));
    }
    assert!(f(&v["lattice_max_mass_defect"]) <= 1e-10);
}
