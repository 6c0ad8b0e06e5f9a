use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pavement(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pavement"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PAVEMENT_MODEL")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn simulate_fire_truck_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let o = pavement(&["simulate", "fire_truck.json", "--fixtures", "bundled", "--no-timing", "--output", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_record.json")).unwrap()).unwrap();
    assert_eq!(record["outcome"], "RecoveredByGeneratedTree");
    assert!(record.get("wall_clock").is_none());
    for f in ["runs.jsonl", "metrics.csv", "trajectory.csv", "trajectory.svg", "generated_tree.xml", "observation.json", "plan.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.contains("fire_truck,Total,21.36,45111"));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x,y,theta,v\n"), "{}", &traj[..40]);
}

#[test]
fn simulate_empty_road_writes_no_pipeline_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = pavement(&["simulate", "empty_road", "--fixtures", "bundled", "--output", "out"], dir.path());
    assert_eq!(code(&o), 0);
    let out = dir.path().join("out");
    let record = fs::read_to_string(out.join("run_record.json")).unwrap();
    assert!(record.contains("\"BaselineSucceeded\""));
    assert!(record.contains("wall_clock"));
    for f in ["observation.json", "plan.json", "generated_tree.xml", "metrics_summary.json"] {
        assert!(!out.join(f).exists(), "{f} should not exist");
    }
}

#[test]
fn simulate_exit_codes_for_config_and_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pavement(&["simulate", "fire_truck.json"], dir.path())), 3);
    assert_eq!(code(&pavement(&["simulate", "nowhere.json", "--fixtures", "bundled"], dir.path())), 3);
    assert_eq!(code(&pavement(&["simulate", "fire_truck", "--backend", "remote"], dir.path())), 3);
    assert_eq!(code(&pavement(&["simulate", "fire_truck", "--fixtures", "bundled", "--stall-timeout", "-1"], dir.path())), 3);
    assert_eq!(code(&pavement(&["frobnicate"], dir.path())), 3);
    assert_eq!(code(&pavement(&["--help"], dir.path())), 0);

    // a fixture with only the descriptor reply fails at the planner
    let bundled: serde_json::Value = serde_json::from_str(pavement::llm::BUNDLED_FIXTURES).unwrap();
    let only_descriptor = serde_json::json!({
        "descriptor:blocked_lane_firetruck": bundled["descriptor:blocked_lane_firetruck"].clone()
    });
    fs::write(dir.path().join("partial.json"), only_descriptor.to_string()).unwrap();
    let o = pavement(&["simulate", "fire_truck", "--fixtures", "partial.json", "--output", "p"], dir.path());
    assert_eq!(code(&o), 2);
    let record = fs::read_to_string(dir.path().join("p/run_record.json")).unwrap();
    assert!(record.contains("\"PipelineError\""));
}

#[test]
fn batch_simulation_writes_per_scenario_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let o = pavement(
        &["simulate", "empty_road", "fire_truck", "--fixtures", "bundled", "--no-timing", "--output", "b"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let b = dir.path().join("b");
    assert!(b.join("empty_road/run_record.json").exists());
    assert!(b.join("fire_truck/generated_tree.xml").exists());
    assert_eq!(fs::read_to_string(b.join("runs.jsonl")).unwrap().lines().count(), 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("metrics_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 1);
    assert_eq!(summary["mean_total_gt"], 21.36);
}

#[test]
fn stages_chain_to_the_simulated_tree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = pavement(&["simulate", "fire_truck", "--fixtures", "bundled", "--save-snapshots", "--no-timing", "--output", "sim"], d);
    assert_eq!(code(&o), 0);
    assert!(d.join("sim/snapshot.png").exists());
    let tag = ["--scene-tag", "blocked_lane_firetruck"];
    let run = |args: &[&str]| {
        let o = pavement(args, d);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["stage", "describe", "sim/snapshot.json", "--fixtures", "bundled", "--output", "obs.json"]);
    let obs: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("obs.json")).unwrap()).unwrap();
    assert_eq!(obs["isCritical"], true);
    run(&[&["stage", "plan", "obs.json", "--fixtures", "bundled", "--output", "plan.json"][..], &tag[..]].concat());
    run(&[&["stage", "generate", "plan.json", "--fixtures", "bundled", "--context", "obs.json", "--output", "tree.xml"][..], &tag[..]].concat());
    let staged = pavement::bt::parse_bt_xml(&fs::read_to_string(d.join("tree.xml")).unwrap()).unwrap();
    let simulated = pavement::bt::parse_bt_xml(&fs::read_to_string(d.join("sim/generated_tree.xml")).unwrap()).unwrap();
    assert_eq!(staged, simulated);
    assert_eq!(code(&pavement(&["validate", "tree.xml"], d)), 0);
}

#[test]
fn stage_plan_on_non_critical_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let obs = r#"{"isCritical": false, "confidence": 0.9, "issueExplanation": "", "sceneDescription": "open road"}"#;
    fs::write(dir.path().join("obs.json"), obs).unwrap();
    let o = pavement(&["stage", "plan", "obs.json", "--fixtures", "bundled", "--scene-tag", "clear_road"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not critical"));
}

#[test]
fn stage_generate_single_goal() {
    let dir = tempfile::tempdir().unwrap();
    let plan = r#"{"goals": [{"index": 1, "text": "Reverse away from the truck."}]}"#;
    fs::write(dir.path().join("plan.json"), plan).unwrap();
    let o = pavement(
        &["stage", "generate", "plan.json", "--fixtures", "bundled", "--scene-tag", "blocked_lane_firetruck"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let tree = pavement::bt::parse_bt_xml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!(pavement::bt::validate_against_palette(&tree, &pavement::sim::sim_palette()).is_valid());
    assert_eq!(tree.root().children().len(), 1);
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.xml"), "<BehaviorTree name=\"t\">\n  <Action id=\"Teleport\"/>\n</BehaviorTree>\n").unwrap();
    let o = pavement(&["validate", "bad.xml", "--output", "report.json"], d);
    assert_eq!(code(&o), 1);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 1);
    assert_eq!(report["violations"][0]["code"], "UnknownLeaf");

    fs::write(d.join("mal.xml"), "<BehaviorTree name=\"t\"><Sequence>").unwrap();
    let o = pavement(&["validate", "mal.xml"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("parse_error"));

    let o = pavement(&["palette", "--output", "palette.json"], d);
    assert_eq!(code(&o), 0);
    fs::write(d.join("ok.xml"), "<BehaviorTree name=\"t\">\n  <Action id=\"Stop\"/>\n</BehaviorTree>\n").unwrap();
    assert_eq!(code(&pavement(&["validate", "ok.xml", "palette.json"], d)), 0);
}

#[test]
fn eval_is_deterministic_and_reports_search_size() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = pavement(&["eval", "--seed", "7", "--grid-step", "0.1", "--output", out], d);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("search size 66"));
    }
    for f in ["eval_report.json", "scores.csv", "weights.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("a/eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["search_size"], 66);
}

#[test]
fn eval_without_annotations_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = pavement(&["corpus", "--annotated", "0", "--unannotated", "12", "--output", "c.jsonl"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&pavement(&["eval", "c.jsonl", "--output", "e"], d)), 3);
    let o = pavement(&["corpus", "--seed", "3", "--output", "full.jsonl"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&pavement(&["eval", "full.jsonl", "--output", "e"], d)), 0);
}
