//! End-to-end tests of the command-line surface: exit codes, output formats,
//! the benchmark harness, and pipeline self-consistency.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_symkit")
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn lie_heat_emits_generators_and_constraint() {
    let heat = corpus_dir().join("heat.deq");
    let out = run(&["lie", heat.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("D[x]"));
    assert!(text.contains("family F1"));
    assert!(text.contains("diff(F1(x,t),x,x) - diff(F1(x,t),t)"));
}

#[test]
fn detsys_count_only_prints_nine() {
    let heat = corpus_dir().join("heat.deq");
    let out = run(&["detsys", heat.to_str().unwrap(), "--count-only"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "9");
    let json = run(&["detsys", heat.to_str().unwrap(), "--count-only", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["count"], 9);
}

#[test]
fn check_klein_gordon_boost() {
    let kg = corpus_dir().join("klein_gordon.deq");
    let out = run(&["check", kg.to_str().unwrap(), "--gen", "y*D[t]+t*D[y]"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("residual 0"));
}

#[test]
fn lie_output_generators_all_pass_check() {
    // self-consistency: every finite generator emitted by `lie` passes
    // `check` when fed back in D-notation
    let heat = corpus_dir().join("heat.deq");
    let out = run(&["lie", heat.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let gens = v["generators"].as_array().unwrap();
    assert_eq!(gens.len(), 7);
    for g in gens {
        if g.get("family").is_some() {
            continue;
        }
        let d = g["d_notation"].as_str().unwrap();
        let chk = run(&["check", heat.to_str().unwrap(), "--gen", d]);
        assert!(chk.status.success(), "check failed for {d}");
        let cv: serde_json::Value = serde_json::from_str(&stdout(&run(&[
            "check",
            heat.to_str().unwrap(),
            "--gen",
            d,
            "--format",
            "json",
        ])))
        .unwrap();
        assert_eq!(cv["checks"][0]["symmetry"], true, "generator {d}");
        let _ = chk;
    }
}

#[test]
fn exit_codes_parse_and_orthonomic_errors() {
    let dir = tempdir();
    let bad = dir.join("bad.deq");
    std::fs::write(&bad, "indep x, t; dep u(x,t); eq 2*t*D;").unwrap();
    let out = run(&["lie", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undeclared symbol 'D'"));

    let sq = dir.join("square.deq");
    std::fs::write(&sq, "indep x; dep u(x); eq diff(u,x)^2 - 1 = 0;").unwrap();
    let out = run(&["lie", sq.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("symkit-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn non_polynomial_invariance_reports_cleanly() {
    let dir = tempdir();
    let f = dir.join("nonpoly.deq");
    std::fs::write(&f, "indep x, t; dep u(x,t); eq diff(u,x,x) = exp(diff(u,x));").unwrap();
    let out = run(&["lie", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not polynomial"));
}

#[test]
fn bench_reports_three_solved_rows() {
    let dir = tempdir().join("bench3");
    std::fs::create_dir_all(&dir).unwrap();
    for f in ["heat.deq", "transport.deq", "burgers_pair.deq"] {
        std::fs::copy(corpus_dir().join(f), dir.join(f)).unwrap();
    }
    let out = run(&["bench", dir.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        assert_eq!(e["status"], "solved", "{e}");
    }
    // rows ordered by filename
    let names: Vec<&str> = entries.iter().map(|e| e["file"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn bench_empty_corpus_is_ok() {
    let dir = tempdir().join("empty");
    std::fs::create_dir_all(&dir).unwrap();
    let out = run(&["bench", dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("empty corpus"));
}

#[test]
fn bench_isolates_malformed_file() {
    let dir = tempdir().join("mixed");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::copy(corpus_dir().join("heat.deq"), dir.join("heat.deq")).unwrap();
    std::fs::write(dir.join("broken.deq"), "indep x; dep u(x); eq diff(u,q);").unwrap();
    let out = run(&["bench", dir.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["file"], "broken.deq");
    assert_eq!(entries[0]["status"], "error");
    assert_eq!(entries[1]["file"], "heat.deq");
    assert_eq!(entries[1]["status"], "solved");
}

#[test]
fn qp_commands_roundtrip() {
    let lv = corpus_dir().join("lv_conservative.json");
    let out = run(&["qp", "lv", lv.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["invertible"], true);

    let out = run(&["qp", "darboux", lv.to_str().unwrap(), "--degree", "2"]);
    assert!(stdout(&out).contains("y2 + y1"));

    let out = run(&["qp", "integrals", lv.to_str().unwrap(), "--degree", "2"]);
    assert!(stdout(&out).contains("y2 + y1"));

    let pp = corpus_dir().join("predator_prey.json");
    let out = run(&["qp", "integrals", pp.to_str().unwrap(), "--degree", "1", "--logs"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("ln("));

    let out = run(&["qp", "symmetries", lv.to_str().unwrap(), "--degree", "1"]);
    assert!(out.status.success());
}

#[test]
fn noether_reports_ordering_and_currents() {
    let lag = corpus_dir().join("lagrangians/scalar_field.deq");
    let out = run(&["noether", "--lagrangian", lag.to_str().unwrap(), "--degree", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("ordering: [t, x]"));
    assert!(text.contains("diff(phi,x)^2/2 + diff(phi,t)^2/2"));
    let json = run(&[
        "noether",
        "--lagrangian",
        lag.to_str().unwrap(),
        "--degree",
        "1",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["ordering"], serde_json::json!(["t", "x"]));
    assert!(!v["currents"].as_array().unwrap().is_empty());
}

#[test]
fn algebra_from_explicit_generators() {
    let heat = corpus_dir().join("heat.deq");
    let out = run(&[
        "algebra",
        heat.to_str().unwrap(),
        "--gen",
        "D[u]",
        "--gen",
        "D[x]",
        "--gen",
        "u*D[x]",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["solvable"], true);
    assert_eq!(v["closed"], true);
}
