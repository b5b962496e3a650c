use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rtp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtp")).env("RTP_OUT", out).args(args).output().expect("spawn rtp")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn checkerboard_plan_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rtp(tmp.path(), &["plan", "--scenario", "checkerboard-8x8-neg", "--seed", "0", "--mode", "optimal"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("plan/checkerboard-8x8-neg-seed0");
    let stats = json(&dir.join("stats.json"));
    assert_eq!(stats["run"]["stats"]["tree_size"], 64);
    assert_eq!(stats["run"]["solved"], true);
    assert_eq!(stats["header"]["seed"], 0);
    assert_eq!(stats["header"]["scenario"]["name"], "checkerboard-8x8-neg");
    for f in ["plan.json", "trace.jsonl", "path.svg", "path.txt"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    assert!(std::fs::read_to_string(dir.join("path.txt")).unwrap().starts_with("# "));
}

#[test]
fn unknown_scenario_exits_two_with_a_record() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rtp(tmp.path(), &["plan", "--scenario", "moon"]);
    assert_eq!(o.status.code(), Some(2));
    let line = String::from_utf8_lossy(&o.stderr);
    let rec: Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(rec["error"], "scenario not found");
    assert_eq!(rec["exit_code"], 2);
}

#[test]
fn oracle_agrees_on_small_boards() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rtp(tmp.path(), &["oracle", "--scenario", "checkerboard-5x5-neg", "--seeds", "0..19"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("20/20 match"));
}

#[test]
fn render_round_trips_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rtp(tmp.path(), &["plan", "--scenario", "terrain", "--seed", "2"]);
    assert!(o.status.success());
    let trace = tmp.path().join("plan/terrain-seed2/trace.jsonl");
    let svg = tmp.path().join("r/path.svg");
    let o = rtp(tmp.path(), &["render", "--trace", trace.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = std::fs::read_to_string(&svg).unwrap();
    assert!(s.contains("class=\"start\"") && s.contains("class=\"goal\"") && s.contains("seed=2"));
    let txt = tmp.path().join("r/path.txt");
    assert!(rtp(tmp.path(), &["render", "--trace", trace.to_str().unwrap(), "--out", txt.to_str().unwrap()]).status.success());
    assert!(std::fs::read_to_string(&txt).unwrap().contains('S'));
}

#[test]
fn config_file_is_overridden_by_flags_and_rejects_typos() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[plan]\nscenario = \"checkerboard-4x4-neg\"\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert!(rtp(tmp.path(), &["--config", c, "plan"]).status.success());
    assert!(tmp.path().join("plan/checkerboard-4x4-neg-seed5/stats.json").exists());
    assert!(rtp(tmp.path(), &["--config", c, "--seed", "7", "plan"]).status.success());
    assert_eq!(json(&tmp.path().join("plan/checkerboard-4x4-neg-seed7/stats.json"))["header"]["seed"], 7);

    std::fs::write(&cfg, "sede = 5\n").unwrap();
    let o = rtp(tmp.path(), &["--config", c, "plan", "--scenario", "terrain"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
}

#[test]
fn four_rooms_trace_covers_every_level() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rtp(
        tmp.path(),
        &["--trace-level", "full", "plan", "--scenario", "four-rooms:original", "--levels", "3", "--mode", "feasible"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(tmp.path().join("plan/four-rooms-original-seed0/trace.jsonl")).unwrap();
    let recs: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs[0]["kind"], "header");
    assert_eq!(recs.last().unwrap()["kind"], "path");
    let mut levels: Vec<u64> = recs.iter().filter(|r| r["kind"] == "call").map(|r| r["record"]["level"].as_u64().unwrap()).collect();
    levels.sort();
    levels.dedup();
    assert_eq!(levels, vec![0, 1, 2]);
}

#[test]
fn plp_then_transfer() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rtp(tmp.path(), &["plp", "--class", "four-rooms", "--examples", "10", "--iterations", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = tmp.path().join("plp/four-rooms-seed0");
    let last = std::fs::read_to_string(run.join("reports.jsonl")).unwrap();
    let rep: Value = serde_json::from_str(last.lines().last().unwrap()).unwrap();
    assert!(rep.to_string().contains("\"accuracy\""));
    assert!(run.join("config.json").exists());
    let policies = run.join("policies/final");
    assert!(policies.join("top.rtpw").exists());

    let o = rtp(tmp.path(), &["transfer", "--policies", policies.to_str().unwrap(), "--target", "four-rooms:alt1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&tmp.path().join("transfer/four-rooms-alt1-seed0/report.json"));
    assert_eq!(rep["report"]["class"], "four-rooms:alt1");
    assert_eq!(rep["report"]["evaluation"].as_array().unwrap().len(), 10);
}
