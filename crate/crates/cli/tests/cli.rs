use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tel-lab"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn simulate_simple_failover() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("simple.json");
    let out = run(
        &["simulate", "--scenario", sc.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("summary.json"))).unwrap();
    let tel = summary["modes"]["tel"]["delivered_bytes"].as_f64().unwrap();
    let base = summary["modes"]["baseline"]["delivered_bytes"]
        .as_f64()
        .unwrap();
    assert!(tel > base);

    let csv = read(dir.path().join("throughput.csv"));
    assert!(csv.starts_with("mode,replica,time_ms,flow_id,bps\n"));
    assert!(csv.lines().any(|l| l.starts_with("tel,")));
    assert!(csv.lines().any(|l| l.starts_with("baseline,")));
    assert!(dir.path().join("fct.csv").exists());
}

#[test]
fn replicas_reproduce() {
    let sc = scenarios().join("simple.json");
    let mut summaries = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = run(
            &[
                "simulate",
                "--scenario",
                sc.to_str().unwrap(),
                "--replicas",
                "4",
                "--mode",
                "tel",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0));
        summaries.push(read(dir.path().join("summary.json")));
    }
    assert_eq!(summaries[0], summaries[1]);
    let v: serde_json::Value = serde_json::from_str(&summaries[0]).unwrap();
    assert_eq!(v["per_replica"].as_array().unwrap().len(), 4);
    assert!(v["modes"].get("baseline").is_none());
}

#[test]
fn solve_and_rules_on_attmpls() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("attmpls.json");
    let out = run(&["solve", "--scenario", sc.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let plans: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("plans.json"))).unwrap();
    assert_eq!(plans.as_array().unwrap().len(), 35);

    let out = run(&["rules", "--scenario", sc.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rules = read(dir.path().join("rules.jsonl"));
    for line in rules.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["table"] == "table_1" {
            assert_eq!(v["action"]["width_bits"], 7);
        }
    }
    let memory = read(dir.path().join("memory.csv"));
    assert!(memory.starts_with("switch,base_bits,extra_bits\n"));
    assert!(memory
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("8")));
}

#[test]
fn simple_rules_hold_both_status_entries() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("simple.json");
    let out = run(&["rules", "--scenario", sc.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rules = read(dir.path().join("rules.jsonl"));
    let s1: Vec<serde_json::Value> = rules
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .filter(|v: &serde_json::Value| v["switch"] == "S1" && v["table"] == "table_2")
        .collect();
    let statuses: Vec<_> = s1
        .iter()
        .map(|v| v["match"]["status"].as_u64().unwrap())
        .collect();
    assert_eq!(statuses, [0, 1]);
}

#[test]
fn validate_reports_clean_plans() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["validate"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("violations.json"))).unwrap();
    assert!(report["capacity"].as_array().unwrap().is_empty());
}

#[test]
fn hops_on_a_single_edge() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("topo");
    std::fs::create_dir(&topo).unwrap();
    std::fs::write(
        topo.join("Edge.graphml"),
        r#"<?xml version="1.0"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <graph edgedefault="undirected">
    <node id="a"/><node id="b"/>
    <edge source="a" target="b"/>
  </graph>
</graphml>"#,
    )
    .unwrap();
    std::fs::write(topo.join("Broken.graphml"), "<graphml").unwrap();
    let out = bin()
        .args(["hops", "--min-links", "1", "--topology-dir"])
        .arg(&topo)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path().join("hops.csv"));
    let row = csv.lines().nth(1).unwrap();
    assert_eq!(row, "Edge,2,1,2,1.0000,,1.0000");
    assert!(read(dir.path().join("hops_skipped.csv")).contains("Broken"));
}

#[test]
fn infeasible_demand_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("sc.json");
    std::fs::write(
        &sc,
        r#"{"demands": [{"src": "H1", "dst": "H2", "rate_bps": 50000000.0}], "solver": {"iterations": 20}}"#,
    )
    .unwrap();
    let out = run(&["solve", "--scenario", sc.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("sc.json");
    std::fs::write(&sc, r#"{"demands": {"count": 0, "rate_bps": 1.0}}"#).unwrap();
    assert_eq!(
        run(&["solve", "--scenario", sc.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(1)
    );
    std::fs::write(&sc, "{not json").unwrap();
    assert_eq!(
        run(&["solve", "--scenario", sc.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    let missing = dir.path().join("missing.json");
    assert_eq!(
        run(
            &["solve", "--scenario", missing.to_str().unwrap()],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn show_round_trips_the_scenario() {
    let sc = scenarios().join("goodnet.json");
    let out = bin()
        .args(["show", "--scenario", sc.to_str().unwrap(), "--seed", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["solver"]["seed"], 5);
    assert_eq!(v["demands"]["count"], 25);
}
