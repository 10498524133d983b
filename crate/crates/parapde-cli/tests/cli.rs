//! End-to-end checks of the binary: exit-code contract, artifact files and
//! config handling.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parapde"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("parapde-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn verify_whole_catalog_passes() {
    let out = bin().args(["verify"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("lobatto3c-4"));
    assert!(text.contains("order 6"));
    assert!(text.contains("A-stable, |r(-inf)| = 0.732051")); // calahan
    assert_eq!(text.matches("PASS").count(), 5);
}

#[test]
fn verify_json_lines_are_one_object_per_scheme() {
    let out = bin().args(["verify", "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    for line in lines {
        assert!(line.starts_with('{') && line.ends_with('}'), "{line}");
        assert!(line.contains("\"pass\":true"), "{line}");
    }
}

#[test]
fn verify_unknown_scheme_is_a_config_error() {
    let out = bin().args(["verify", "--scheme", "rk4"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_reports_threshold_two_for_lobatto() {
    let dir = scratch("analyze");
    let out = bin()
        .args(["analyze", "--scheme", "lobatto3c-2", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("J* = 2"), "{text}");
    let table = std::fs::read_to_string(dir.join("factors_lobatto3c-2.csv")).unwrap();
    assert!(table.starts_with("j,phi,argmax_s,tail_bound_used"));
    assert_eq!(table.lines().count(), 1 + 64);
}

#[test]
fn analyze_without_threshold_exits_three_but_writes_table() {
    let dir = scratch("nothreshold");
    let out = bin()
        .args([
            "analyze", "--scheme", "calahan", "--gamma", "0.05", "--j-max", "8", "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    assert!(dir.join("factors_calahan.csv").exists());
}

#[test]
fn analyze_profile_csv() {
    let dir = scratch("profile");
    let out = bin()
        .args(["analyze", "--scheme", "backward-euler", "--j", "2", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Phi(2) = 0.125"), "{text}");
    let profile = std::fs::read_to_string(dir.join("profile_backward-euler_J2.csv")).unwrap();
    assert!(profile.starts_with("s,factor"));
    assert_eq!(profile.lines().count(), 1 + 2000);
}

#[test]
fn kappa_curve_endpoints() {
    let dir = scratch("kappa");
    let path = dir.join("curve.csv");
    let out = bin()
        .args(["kappa-curve", "--points", "11", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0");
    assert!((first[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    let last: Vec<&str> = lines[11].split(',').collect();
    assert_eq!(last[0], "2");
    assert!((last[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn run_preset_writes_artifacts() {
    let dir = scratch("run");
    let out = bin()
        .args([
            "run",
            "--preset",
            "ex2",
            "--scheme",
            "lobatto3c-2",
            "--j",
            "10",
            "--m-intervals",
            "48",
            "--k-max",
            "8",
            "--threads",
            "1",
            "--gnuplot",
            "--out",
        ])
        .arg(dir.to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(dir.join("ex2_lobatto3c-2_J10.csv")).unwrap();
    assert!(csv.starts_with("k,max_error,factor_estimate,fine_sweep_ms"));
    assert_eq!(csv.lines().count(), 1 + 9); // header + k = 0..=8
    let echo = std::fs::read_to_string(dir.join("ex2_lobatto3c-2_J10.cfg")).unwrap();
    assert!(echo.contains("preset = ex2"));
    assert!(echo.contains("schemes = lobatto3c-2"));
    assert!(echo.contains("# provenance: parapde"));
    assert!(dir.join("ex2_lobatto3c-2_J10.gp").exists());
}

#[test]
fn run_config_file_round_trips_through_the_binary() {
    let dir = scratch("cfgfile");
    let cfg_text = "\
[run]
preset = ex2
schemes = lobatto3c-2
js = 10
m_intervals = 48
k_max = 6
threads = 1
out = OUTDIR
";
    let cfg_path = dir.join("runs.cfg");
    std::fs::write(&cfg_path, cfg_text.replace("OUTDIR", dir.to_str().unwrap())).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(dir.join("ex2_lobatto3c-2_J10.csv").exists());
}

#[test]
fn run_rejects_inconsistent_config() {
    let dir = scratch("badcfg");
    let cfg_path = dir.join("bad.cfg");
    std::fs::write(
        &cfg_path,
        "[run]\npreset = ex2\nproblem = linear-diffusion\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("allen-cahn"), "{err}");
}

#[test]
fn run_unknown_scheme_is_a_config_error() {
    let out = bin()
        .args(["run", "--preset", "ex1b", "--scheme", "rk4", "--j", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
