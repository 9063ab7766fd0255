//! End-to-end runs of the `thinsets` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thinsets::tritree::{build_tree, expectation, LatticeSpec, VolSurface};

const BIN: &str = env!("CARGO_BIN_EXE_thinsets");

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, workers: usize) -> Output {
    Command::new(BIN)
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .output()
        .unwrap()
}

fn validate(config: &Path) -> Output {
    Command::new(BIN)
        .args(["validate", "--config"])
        .arg(config)
        .output()
        .unwrap()
}

/// `summary.csv` as (key, value) pairs.
fn summary(out: &Path) -> Vec<(String, String)> {
    fs::read_to_string(out.join("summary.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_owned(), v.to_owned())
        })
        .collect()
}

fn value(out: &Path, key: &str) -> f64 {
    summary(out)
        .into_iter()
        .find(|(k, _)| k == key)
        .unwrap()
        .1
        .parse()
        .unwrap()
}

/// Column `name` of a CSV table.
fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn stderr_doc(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

#[test]
fn iproj_reports_the_bernoulli_tilt() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&configs_dir().join("iproj.toml"), &out, 2);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((value(&out, "lambda_star_0") - 0.847298).abs() < 1e-6);
    assert!((value(&out, "entropy") - 0.082282).abs() < 1e-6);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["workers"], 2);
    assert_eq!(manifest["tables"][2]["name"], "sanov");
    assert_eq!(manifest["config"]["experiment"], "iproj");
}

#[test]
fn whole_space_conditioning_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.json",
        r#"{"experiment": "gibbs", "seed": 9, "params": {
            "alpha": {"points": ["a", "b", "c"], "weights": [0.2, 0.3, 0.5]},
            "event": {"kind": "whole"}, "n_list": [4, 9], "k": 2}}"#,
    );
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, 1).status.success());
    let tv = column(&out.join("curve.csv"), "tv");
    assert_eq!(tv.len(), 2);
    assert!(tv.iter().all(|t| *t < 1e-12), "{tv:?}");
    assert!(column(&out.join("curve.csv"), "p_event")
        .iter()
        .all(|p| (p - 1.0).abs() < 1e-12));
}

#[test]
fn calibrating_to_the_prior_returns_the_prior() {
    let spec = LatticeSpec::new(32, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap();
    let tree = build_tree(&VolSurface::constant(&spec, 0.9, spec.b0), &spec).unwrap();
    let target = expectation(&tree, |x| x * x, spec.n).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!(
            r#"experiment = "calibrate"
seed = 1
[params]
epsilon = 0.0
audit_points = 50
lattice = {{ n = 32, alpha = 2.0, sigma_min = 0.5, sigma_max = 1.5, b0 = 0.1, s = 0.05 }}
[params.problem]
sigma0 = {{ kind = "constant", value = 0.9 }}
family = {{ kind = "constant", lo = 0.6, hi = 1.4 }}
constraints = [{{ payoff = {{ kind = "power", exponent = 2, scale = 1.0 }}, target = {target:?} }}]
"#
        ),
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out, 2);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((value(&out, "theta_star_0") - 0.9).abs() < 1e-6);
    assert!(value(&out, "entropy").abs() < 1e-9);
}

#[test]
fn monte_carlo_tables_are_reproducible() {
    for name in ["schedules.toml", "gibbs_mc.toml", "calibrate_tree_mc.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        assert!(run(&configs_dir().join(name), &a, 3).status.success(), "{name}");
        assert!(run(&configs_dir().join(name), &b, 3).status.success(), "{name}");
        let mut files: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        for f in files.iter().filter(|f| f.to_string_lossy().ends_with(".csv")) {
            assert_eq!(
                fs::read(a.join(f)).unwrap(),
                fs::read(b.join(f)).unwrap(),
                "{name}: {f:?}"
            );
        }
    }
}

#[test]
fn shipped_configs_validate_cleanly() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let p = entry.unwrap().path();
        let o = validate(&p);
        assert!(
            o.status.success(),
            "{}: {}",
            p.display(),
            String::from_utf8_lossy(&o.stdout)
        );
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "[]");
        n += 1;
    }
    assert!(n >= 8);
}

#[test]
fn validate_names_n0_for_too_shallow_trees() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("calibrate.toml"))
        .unwrap()
        .replace("n = 64,", "n = 1,");
    let cfg = write(dir.path(), "c.toml", &text);
    let o = validate(&cfg);
    assert_eq!(o.status.code(), Some(2));
    let diags: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(diags.as_array().unwrap().len(), 1);
    assert_eq!(diags[0]["path"], "params.lattice.n");
    // n0 = floor((2·0.15/0.25)²) + 1
    assert!(diags[0]["message"].as_str().unwrap().contains("n0 = 2"));

    let o = run(&cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_doc(&o)["kind"], "config");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_seeds_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (i, seed) in [r#""-4""#, "-4", "1.5"].iter().enumerate() {
        let cfg = write(
            dir.path(),
            &format!("s{i}.json"),
            &format!(
                r#"{{"experiment": "covering", "seed": {seed}, "params": {{"space": {{"line": [0, 1]}}, "epsilons": [0.5]}}}}"#
            ),
        );
        let o = validate(&cfg);
        assert_eq!(o.status.code(), Some(2), "{seed}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("seed"));
    }
}

#[test]
fn impossible_events_exit_with_zero_acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "z.toml",
        r#"experiment = "gibbs"
seed = 3
[params]
alpha = { points = ["0", "1"], weights = [0.5, 0.5] }
event = { kind = "band", f = [[0.0], [1.0]], center = [0.123], radius = 0.0 }
n_list = [10]
method = "mc"
trials = 500
"#,
    );
    let o = run(&cfg, &dir.path().join("out"), 2);
    assert_eq!(o.status.code(), Some(4));
    let doc = stderr_doc(&o);
    assert_eq!(doc["kind"], "zero_acceptance");
    assert_eq!(doc["exit_code"], 4);
}

#[test]
fn numeric_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // a target outside the convex hull of the moment values
    let cfg = write(
        dir.path(),
        "i.json",
        r#"{"experiment": "iproj", "seed": 1, "params": {
            "alpha": {"weights": [0.5, 0.5]}, "f": [[0], [1]], "target": {"point": [1.5]}}}"#,
    );
    let o = run(&cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_doc(&o)["kind"], "numeric");
}

#[test]
fn json_output_mirrors_the_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("gamma.toml")).unwrap() + "\n[output]\nformat = \"json\"\n";
    let cfg = write(dir.path(), "g.toml", &text);
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, 1).status.success());
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("gamma.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["n"], 32);
    let gaps: Vec<f64> = rows.iter().map(|r| r["gap"].as_f64().unwrap()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    assert!(!out.join("gamma.csv").exists());
}
