//! End-to-end runs of the `viscolab` binary: exit codes, listing, reports
//! and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn viscolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viscolab"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn list_prints_eight_names_in_order() {
    let out = viscolab(&["--list"]);
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(
        names,
        [
            "solve",
            "compare",
            "key-estimate",
            "lemma-diagnostics",
            "perron",
            "tos-check",
            "regularity",
            "all"
        ]
    );
}

#[test]
fn compare_on_heat_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "scenario = \"compare\"\n[operator]\nid = \"heat\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = viscolab(&["run", &cfg, "--outdir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out_dir);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["pass"], true);
    assert_eq!(r["reports"][0]["scenario"], "compare");
    let csv = fs::read_to_string(out_dir.join("heat/compare/compare.csv")).unwrap();
    assert!(csv.starts_with("pair,kind,shift,verdict,min_margin,diagonal_margin\n"));
}

#[test]
fn unknown_operator_is_an_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "scenario = \"compare\"\n[operator]\nid = \"heat2\"\n",
    );
    let out = viscolab(&["run", &cfg, "--outdir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("operator.id") && err.contains("heat2"), "{err}");
}

#[test]
fn unknown_scenario_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "scenario = \"sweep\"\n");
    let out = viscolab(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strict.toml",
        "scenario = \"solve\"\n[operator]\nid = \"heat\"\n[solve]\noracle_tol = 1e-12\n",
    );
    let out_dir = dir.path().join("out");
    let out = viscolab(&["run", &cfg, "--outdir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("FAIL heat/solve oracle"));
    assert_eq!(report(&out_dir)["pass"], false);
}

#[test]
fn tos_check_writes_margins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tos.toml",
        "scenario = \"tos-check\"\n[operator]\nid = \"heat\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = viscolab(&["run", &cfg, "--outdir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(out_dir.join("heat/tos-check/tos_margins.csv")).unwrap();
    assert!(csv.starts_with("case,alpha,z1,z2,b1,b2,left_block,right_block,gradient,slope_sum,pass\n"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn seed_override_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.toml",
        "scenario = \"perron\"\nseed = 1\n[operator]\nid = \"eikonal\"\n[perron]\ncontraction_pairs = 3\n",
    );
    let run = |name: &str, seed: &str| {
        let d = dir.path().join(name);
        let out = viscolab(&["run", &cfg, "--outdir", d.to_str().unwrap(), "--seed", seed]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        fs::read(d.join("eikonal/perron/contraction.csv")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(report(&dir.path().join("a"))["seed"], 5);
}
