use std::path::PathBuf;
use std::process::{Command, Output};

fn repo(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(path)
}

fn divnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divnet"))
        .args(args)
        .env_remove("DIVNET_TOL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn temp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("divnet-cli-{}-{name}", std::process::id()))
}

#[test]
fn eval_prints_phi_with_twelve_decimals() {
    let o = divnet(&[
        "eval",
        repo("networks/bregman.json").to_str().unwrap(),
        "--convex",
        "quadratic",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "2.500000000000\n");
}

#[test]
fn eval_of_missing_file_exits_two() {
    let o = divnet(&["eval", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));
}

#[test]
fn eval_rejects_a_different_generator() {
    let o = divnet(&[
        "eval",
        repo("networks/bregman.json").to_str().unwrap(),
        "--convex",
        "neg_log",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(divnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        divnet(&["--tol", "-1", "eval", "x.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn breakdown_lists_node_and_edge_terms() {
    let o = divnet(&[
        "eval",
        repo("networks/bregman.json").to_str().unwrap(),
        "--breakdown",
    ]);
    let out = stdout(&o);
    assert!(out.contains("node p 2.500000000000"));
    assert!(out.contains("edge e 0.000000000000"));
}

#[test]
fn build_then_eval_round_trips() {
    let path = temp("sym.json");
    let o = divnet(&[
        "build",
        "sym-bregman",
        "--convex",
        "quadratic",
        "--p",
        "0",
        "--q",
        "2",
        "--alpha",
        "0.5",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = divnet(&["eval", path.to_str().unwrap()]);
    assert_eq!(stdout(&o), "2.000000000000\n");
    std::fs::remove_file(path).ok();
}

#[test]
fn matches_then_apply() {
    let net = repo("networks/parallel.json");
    let o = divnet(&["matches", net.to_str().unwrap(), "--rule", "summation"]);
    let matches: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(matches.as_array().unwrap().len(), 1);
    let m = matches[0].to_string();
    let out = temp("merged.json");
    let o = divnet(&[
        "apply",
        net.to_str().unwrap(),
        "--match",
        &m,
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let merged = divnet_core::Network::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(merged.edge_count(), 1);
    assert_eq!(
        stdout(&divnet(&["eval", out.to_str().unwrap()])),
        "6.000000000000\n"
    );
    std::fs::remove_file(out).ok();
}

#[test]
fn stale_apply_exits_two() {
    let net = repo("networks/bregman.json");
    let o = divnet(&[
        "apply",
        net.to_str().unwrap(),
        "--match",
        r#"{"rule":"summation","anchors":{"edges":["e","x"]}}"#,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_of_shipped_scripts_passes() {
    for f in [
        "networks/insertion_variant.json",
        "networks/parallelogram.json",
    ] {
        let o = divnet(&["replay", repo(f).to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{f}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).contains("final network matches"));
    }
}

#[test]
fn replay_with_wrong_expected_phi_exits_one() {
    let text = std::fs::read_to_string(repo("networks/insertion_variant.json")).unwrap();
    let mut d: serde_json::Value = serde_json::from_str(&text).unwrap();
    d["steps"][1]["expected_phi"] = serde_json::json!(123.0);
    let path = temp("bad-script.json");
    std::fs::write(&path, d.to_string()).unwrap();
    let o = divnet(&["replay", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
    std::fs::remove_file(path).ok();
}

#[test]
fn verify_identities_passes() {
    let o = divnet(&[
        "verify",
        "--suite",
        "identities",
        "--trials",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(),
        24
    );
}

#[test]
fn verify_output_is_reproducible() {
    let args = [
        "verify", "--suite", "special", "--trials", "20", "--seed", "7",
    ];
    assert_eq!(divnet(&args).stdout, divnet(&args).stdout);
}

#[test]
fn verify_chains_and_rules_pass() {
    for suite in ["chains", "rules"] {
        let o = divnet(&["verify", "--suite", suite, "--dim", "2"]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", stdout(&o));
    }
}

#[test]
fn tiny_tolerance_fails_verification() {
    let o = divnet(&[
        "--tol",
        "1e-30",
        "verify",
        "--suite",
        "chains",
        "--convex",
        "neg_entropy",
        "--dim",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_dot() {
    let o = divnet(&[
        "export",
        repo("networks/jensen.json").to_str().unwrap(),
        "--format",
        "dot",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("digraph"));
}
