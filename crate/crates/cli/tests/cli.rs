use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn noreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn mupal_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/mupal.json")
}

fn mupal_doc() -> Value {
    serde_json::from_str(&std::fs::read_to_string(mupal_path()).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, doc: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scalar_agent(a: f64, e: f64, h: f64, hy: f64) -> Value {
    json!({
        "A": [[a]], "B": [[1.0]], "E": [[e]],
        "Cy": [[1.0]], "Hy": [[hy]],
        "Ce": [[1.0]], "He": [[h]]
    })
}

#[test]
fn check_bundled_scenario_passes() {
    let out = noreg(&["check", mupal_path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("A.6 spanning tree rooted at node 0         pass"));
    assert!(text.contains("rho(L33)        {1.2, 2, 2}"));
    assert!(text.contains("heuristic not met (advisory)"));
}

#[test]
fn edgeless_graph_fails_spanning_tree() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = mupal_doc();
    doc["graph"]["edges"] = json!([]);
    let out = noreg(&["check", &write(dir.path(), "s.json", &doc)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("A.6 spanning tree rooted at node 0         FAIL"));
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"agents\": [").unwrap();
    assert_eq!(noreg(&["check", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(noreg(&["check", "/nonexistent/scenario.json"]).status.code(), Some(2));

    let mut doc = mupal_doc();
    doc["informed"] = json!(9);
    assert_eq!(noreg(&["check", &write(dir.path(), "s.json", &doc)]).status.code(), Some(2));
}

#[test]
fn synthesize_then_simulate_bundled_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("gains.json");
    let trace = dir.path().join("trace.csv");
    let scenario = mupal_path();
    let out = noreg(&["synthesize", scenario.to_str().unwrap(), "-o", gains.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("gamma = 24"));

    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&gains).unwrap()).unwrap();
    assert_eq!(doc["agents"].as_array().unwrap().len(), 4);
    assert_eq!(doc["agents"][0]["observer"]["kind"], "informed");
    assert_eq!(doc["agents"][3]["observer"]["kind"], "uninformed");

    let out = noreg(&[
        "simulate",
        scenario.to_str().unwrap(),
        "-g",
        gains.to_str().unwrap(),
        "--estimator-factor",
        "1.0",
        "--t-end",
        "10",
        "-o",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).matches("nonovershooting").count(), 8);
    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,e_1_1,e_1_2,e_2_1,e_2_2,e_3_1,e_3_2,e_4_1,e_4_2"
    );
    assert_eq!(lines.count(), 10_001);

    // A large estimator error may or may not overshoot; only the contract matters.
    let out = noreg(&[
        "simulate",
        scenario.to_str().unwrap(),
        "-g",
        gains.to_str().unwrap(),
        "--estimator-factor",
        "50",
    ]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 1);
    assert_eq!(code == 1, stdout(&out).contains("sign change"));
}

#[test]
fn gains_for_the_wrong_scenario_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("gains.json");
    let scenario = mupal_path();
    noreg(&["synthesize", scenario.to_str().unwrap(), "-o", gains.to_str().unwrap()]);
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&gains).unwrap()).unwrap();
    doc["agents"].as_array_mut().unwrap().pop();
    let bad = write(dir.path(), "g.json", &doc);
    let out = noreg(&["simulate", scenario.to_str().unwrap(), "-g", &bad]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn undetectable_uninformed_agent_fails_placement() {
    let dir = tempfile::tempdir().unwrap();
    let unobservable = json!({
        "A": [[-1.0, 0.0], [0.0, 1.0]], "B": [[1.0], [1.0]], "E": [[0.0], [0.0]],
        "Cy": [[1.0, 0.0]], "Ce": [[1.0, 0.0]], "He": [[-1.0]]
    });
    let informed = json!({
        "A": [[-1.0, 0.0], [0.0, 1.0]], "B": [[1.0], [1.0]], "E": [[0.0], [0.0]],
        "Cy": [[1.0, 1.0]], "Hy": [[1.0]], "Ce": [[1.0, 0.0]], "He": [[-1.0]]
    });
    let doc = json!({
        "agents": [informed, unobservable],
        "exosystem": {"S": [[0.0]], "w0": [1.0]},
        "graph": {"nodes": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]]},
        "informed": 1,
        "x0": [[0.5, 0.0], [0.5, 0.0]],
        "synthesis": {"overshoot_flags": [[false], [false]]}
    });
    let out = noreg(&["synthesize", &write(dir.path(), "s.json", &doc), "-o", "/dev/null"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("observer gains, agent 2"), "{err}");
    assert!(err.contains("placement failed"), "{err}");
}

#[test]
fn trivial_exosystem_coupling_gives_zero_feedforward() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "agents": [scalar_agent(1.0, 0.0, 0.0, 1.0), scalar_agent(2.0, 0.0, 0.0, 0.0)],
        "exosystem": {"S": [[0.0]], "w0": [1.0]},
        "graph": {"nodes": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]]},
        "informed": 1,
        "x0": [[1.0], [-1.0]]
    });
    let gains = dir.path().join("g.json");
    let out = noreg(&["synthesize", &write(dir.path(), "s.json", &doc), "-o", gains.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let g: Value = serde_json::from_str(&std::fs::read_to_string(&gains).unwrap()).unwrap();
    for a in g["agents"].as_array().unwrap() {
        assert_eq!(a["G"], json!([[0.0]]));
    }
}

#[test]
fn demo_is_deterministic_and_thread_independent() {
    let a = noreg(&["demo", "mupal", "--seed", "1", "--estimator-factor", "1.0"]);
    let b = Command::new(env!("CARGO_BIN_EXE_noreg"))
        .args(["demo", "mupal", "--seed", "1", "--estimator-factor", "1.0"])
        .env("NOREG_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());
    let text = stdout(&a);
    assert!(text.contains("invariant zeros {-50.5428, 11.1112, 11.1112}"));
    assert!(text.contains("gamma_min = 10"));
}

#[test]
fn demo_writes_a_loadable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mupal.json");
    let out = noreg(&["demo", "mupal", "--write-scenario", path.to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(0 | 1)));
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        std::fs::read_to_string(mupal_path()).unwrap()
    );
}
