#![cfg(feature = "cli")]

use std::path::Path;

use scramble_core::cli::run;

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("scramble").chain(list.iter().copied()).map(String::from).collect()
}

fn run_to(dir: &Path, name: &str, list: &[&str]) -> (i32, String) {
    let out = dir.join(name);
    let mut a = args(list);
    a.push("--out".into());
    a.push(out.to_str().unwrap().into());
    let code = run(a);
    (code, std::fs::read_to_string(&out).unwrap_or_default())
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(args(&["no-such-command"])), 2);
    assert_eq!(run(args(&["tree-wire", "--n", "10", "--layers", "1"])), 2);
    assert_eq!(run(args(&["recursions", "--q0", "1.5", "--family", "inflationary"])), 2);
    assert_eq!(run(args(&["--config", "/nonexistent/file", "recursion-verify"])), 2);
}

#[test]
fn validating_commands_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_to(dir.path(), "v.json", &["recursion-verify"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["ok"], true);

    let (code, text) = run_to(dir.path(), "q.txt", &["qudit-construct", "--d", "3"]);
    assert_eq!(code, 0);
    assert!(text.starts_with("d=3\n1 1 0 0\n"));

    let (code, text) = run_to(dir.path(), "nogo.json", &["qubit-nogo"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["inflationary_count"], 0);
}

#[test]
fn census_writes_gate_sets() {
    let dir = tempfile::tempdir().unwrap();
    let sets = dir.path().join("sets");
    let (code, text) = run_to(dir.path(), "c.json", &["gates-census", "--write-sets", sets.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["inflationary"], 144);
    let infl = std::fs::read_to_string(sets.join("inflationary.txt")).unwrap();
    assert_eq!(infl.lines().filter(|l| !l.trim().is_empty()).count(), 144);
}

#[test]
fn recursions_csv_is_constant_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_to(dir.path(), "r.csv", &["recursions", "--family", "inflationary", "--q0", "1.0", "--layers", "10"]);
    assert_eq!(code, 0);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("layer,s,q"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.ends_with(",1")));
}

#[test]
fn config_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tree\nn = 9\nlayers = 2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let (code, text) = run_to(dir.path(), "a.json", &["--config", c, "tree-wire"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["wiring"]["n"], 9);
    let (code, text) = run_to(dir.path(), "b.json", &["--config", c, "tree-wire", "--n", "27"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["wiring"]["n"], 27);
}

#[test]
fn cipher_round_trips_through_sac_scan() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run_to(dir.path(), "cipher.json", &["cipher-build", "--n", "9", "--seed", "5"]);
    assert_eq!(code, 0);
    let path = dir.path().join("cipher.json");
    let from_file = run_to(dir.path(), "a.csv", &["sac-scan", "--circuit", path.to_str().unwrap(), "--seed", "5", "--samples", "500"]);
    let rebuilt = run_to(dir.path(), "b.csv", &["sac-scan", "--n", "9", "--seed", "5", "--samples", "500"]);
    assert_eq!(from_file.0, 0);
    assert_eq!(from_file.1, rebuilt.1);
    assert!(from_file.1.starts_with("i,j,layer,estimate,stderr,samples,seed\n"));
}

#[test]
fn stochastic_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        vec!["stay-prob", "--n", "256", "--depth", "4", "--samples", "3000", "--seed", "7"],
        vec!["front", "--n", "64", "--t-max", "16", "--samples", "200", "--seed", "7"],
        vec!["recursions", "--measure-n", "81", "--layers", "4", "--samples", "3000", "--seed", "7"],
    ] {
        let mut outs = Vec::new();
        for w in ["1", "4"] {
            let mut a = vec!["--workers", w];
            a.extend(&cmd);
            let (code, text) = run_to(dir.path(), &format!("{}-{w}", cmd[0]), &a);
            assert_eq!(code, 0, "{cmd:?}");
            outs.push(text);
        }
        assert_eq!(outs[0], outs[1], "{cmd:?}");
    }
}

#[test]
fn continuum_report() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_to(dir.path(), "m.json", &["mean-field", "--continuum-n", "1e6", "--eps", "1e-3"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["relative_difference"].as_f64().unwrap() < 0.05);
}
