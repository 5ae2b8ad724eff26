use std::path::Path;
use std::process::{Command, Output};

use nnrange::bench::random_network;
use nnrange::search::{estimate_range, SearchParams};
use nnrange::{Polyhedron, Simplex};
use serde_json::Value;

const SR: &str = r#"{"inputs": 2, "layers": [
    {"weights": [[1, -1], [1, 1]], "bias": [0, -1], "activation": "relu"},
    {"weights": [[0.2, 0.3]], "bias": [0], "activation": "linear"}]}"#;
const UNIT_BOX: &str = r#"{"A": [[1, 0], [-1, 0], [0, 1], [0, -1]], "b": [1, 0, 1, 0]}"#;

fn nnrange(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnrange"))
        .args(args)
        .env_remove("NNRANGE_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn record(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON record")
}

#[test]
fn sr_range_upper_is_tight() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "sr.json", SR);
    let poly = write(dir.path(), "box.json", UNIT_BOX);
    let out = nnrange(&["range", "--network", &net, "--poly", &poly, "--delta", "1e-3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = record(&out);
    let upper = r["upper"].as_f64().unwrap();
    assert!((0.3..=0.301 + 1e-9).contains(&upper), "upper {upper}");
    assert_eq!(r["status"], "Tight");
    assert!(r["lower"].as_f64().unwrap() <= 0.0);
}

#[test]
fn gen_then_range() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("g.json");
    let net = net.to_str().unwrap();
    let out = nnrange(&["gen", "--n", "2", "--k", "2", "--N", "10", "--s", "0.5", "--seed", "42", "--out", net]);
    assert_eq!(out.status.code(), Some(0));
    let out = nnrange(&["range", "--network", net]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = record(&out);
    assert!(r["lower"].as_f64().unwrap() <= r["upper"].as_f64().unwrap());
}

#[test]
fn dimension_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "sr.json", SR);
    let poly = write(dir.path(), "p.json", r#"{"A": [[1, 0, 0]], "b": [1]}"#);
    let out = nnrange(&["range", "--network", &net, "--poly", &poly]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('2') && err.contains('3'), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "sr.json", SR);
    assert_eq!(nnrange(&["range", "--network", "missing.json"]).status.code(), Some(2));
    assert_eq!(nnrange(&["range", "--network", &net, "--delta", "0"]).status.code(), Some(2));
    assert_eq!(nnrange(&["range", "--network", &net, "--output", "3"]).status.code(), Some(2));
    assert_eq!(nnrange(&["range"]).status.code(), Some(2));
    let broken = write(dir.path(), "broken.json", "{\"inputs\": 2, ");
    assert_eq!(nnrange(&["oracle", "--network", &broken]).status.code(), Some(2));
}

#[test]
fn round_trip_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let path = path.to_str().unwrap();
    let out = nnrange(&["gen", "--n", "2", "--k", "1", "--N", "6", "--s", "1.0", "--seed", "7", "--instance", "3", "--out", path]);
    assert_eq!(out.status.code(), Some(0));
    let out = nnrange(&["--workers", "1", "range", "--network", path]);
    assert_eq!(out.status.code(), Some(0));
    let r = record(&out);

    let net = random_network(2, &[6], 1, 1.0, 7, 3);
    let cube = Polyhedron::hypercube(2, -1.0, 1.0);
    let local = estimate_range(&net, &cube, 0, &SearchParams::default(), &Simplex).unwrap();
    assert_eq!(r["upper"].as_f64().unwrap(), local.upper);
    assert_eq!(r["lower"].as_f64().unwrap(), local.lower);
}

#[test]
fn one_sided_modes() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "sr.json", SR);
    let poly = write(dir.path(), "box.json", UNIT_BOX);
    let up = record(&nnrange(&["range", "--network", &net, "--poly", &poly, "--mode", "upper"]));
    assert!(up["lower"].is_null());
    assert!((0.3..=0.301 + 1e-9).contains(&up["upper"].as_f64().unwrap()));
    let lo = record(&nnrange(&["range", "--network", &net, "--poly", &poly, "--mode", "lower"]));
    assert!(lo["upper"].is_null());
    assert!((-0.001 - 1e-9..=0.0).contains(&lo["lower"].as_f64().unwrap()));
}

#[test]
fn oracle_and_certify() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "sr.json", SR);
    let poly = write(dir.path(), "box.json", UNIT_BOX);
    let r = record(&nnrange(&["oracle", "--network", &net, "--poly", &poly]));
    assert_eq!(r["upper"].as_f64().unwrap(), 0.3);
    assert_eq!(r["cells"], 4);

    // Output 0 is 0.5, output 1 is relu(x).
    let crossing = write(
        dir.path(),
        "c.json",
        r#"{"inputs": 1, "layers": [
            {"weights": [[1]], "bias": [0], "activation": "relu"},
            {"weights": [[0], [1]], "bias": [0.5, 0], "activation": "linear"}]}"#,
    );
    let out = nnrange(&["certify", "--network", &crossing, "--label", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let r = record(&out);
    assert_eq!(r["verdict"], "counterexample");
    assert_eq!(r["detail"]["predicted"], 1);
    let out = nnrange(&["adversarial", "--network", &crossing, "--label", "0"]);
    assert_eq!(record(&out)["found"], true);
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"[{"n": 1, "k": 1, "N": 3, "s": 1.0, "count": 3, "seed": 5}]"#);
    let csv = dir.path().join("out.csv");
    let out = nnrange(&["bench", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], nnrange::bench::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.contains("Tight")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("3/3"));
}
