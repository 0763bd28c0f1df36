use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

const STAGES: [&str; 7] = ["synth", "ingest", "compress", "fit", "solve", "evaluate", "forecast"];

fn pathway(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathway"))
        .current_dir(dir)
        .env_remove("PATHWAY_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 1, "one summary line expected, got {text}");
    serde_json::from_str(text.trim()).expect("summary is JSON")
}

fn run_pipeline(dir: &Path, out: &str) -> Vec<Value> {
    STAGES
        .iter()
        .map(|stage| {
            let o = pathway(dir, &[stage, "--out-dir", out]);
            assert!(o.status.success(), "{stage} failed: {}", String::from_utf8_lossy(&o.stderr));
            summary(&o)
        })
        .collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn default_pipeline_is_fast_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let summaries = run_pipeline(tmp.path(), "a");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "pipeline took {elapsed:.1}s");
    run_pipeline(tmp.path(), "b");

    let mut names: Vec<String> = std::fs::read_dir(tmp.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in &names {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between reruns");
    }
    for expected in ["claims.csv", "ingest.json", "partition.json", "mdp.json", "policy.json", "evaluation.json", "forecast.csv"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }

    let hash = summaries[0]["config_hash"].clone();
    assert!(summaries.iter().all(|s| s["config_hash"] == hash));
    assert_eq!(summaries[1]["episodes"], 212);

    let eval = read_json(&tmp.path().join("a/evaluation.json"));
    assert_eq!(eval["meta"]["stage"], "evaluate");
    assert_eq!(eval["meta"]["config_hash"], hash);
    assert!(eval["meta"]["inputs"]["policy.json"].is_string());
    assert!(eval["meta"]["outputs"]["histogram_policy.csv"].is_string());
    let data = &eval["data"];
    assert!(data["optimized"]["mean_cost"].as_f64().unwrap() < data["behavior"]["mean_cost"].as_f64().unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(pathway(tmp.path(), &["fit", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(pathway(tmp.path(), &["warp"]).status.code(), Some(1));
    assert_eq!(pathway(tmp.path(), &["ingest", "--out-dir", "missing"]).status.code(), Some(1));
    assert_eq!(pathway(tmp.path(), &["solve", "--discount", "2"]).status.code(), Some(1));
    assert_eq!(pathway(tmp.path(), &["--help"]).status.code(), Some(0));

    for stage in ["synth", "ingest", "compress", "fit"] {
        assert!(pathway(tmp.path(), &[stage, "--out-dir", "o"]).status.success());
    }
    let stuck = pathway(tmp.path(), &["solve", "--out-dir", "o", "--max-iter", "3"]);
    assert_eq!(stuck.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&stuck.stderr).contains("converge"));
}

#[test]
fn version_config_dump_and_env_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let v = pathway(tmp.path(), &["--version"]);
    assert!(v.status.success());
    assert_eq!(summary(&v)["name"], "pathway");

    std::fs::write(tmp.path().join("run.conf"), "k = 4\nseed = 7 # comment\nrepeats = 9\n").unwrap();
    let dump = pathway(tmp.path(), &["--config", "run.conf", "--seed", "8", "--config-dump"]);
    let cfg = summary(&dump);
    assert_eq!((cfg["k"].as_u64(), cfg["seed"].as_u64(), cfg["repeats"].as_u64()), (Some(4), Some(8), Some(9)));

    std::fs::write(tmp.path().join("bad.conf"), "colour = red\n").unwrap();
    assert_eq!(pathway(tmp.path(), &["--config", "bad.conf", "synth"]).status.code(), Some(1));

    let env = Command::new(env!("CARGO_BIN_EXE_pathway"))
        .current_dir(tmp.path())
        .env("PATHWAY_OUT_DIR", "from_env")
        .args(["synth", "--synth-episodes", "20", "--synth-physicians", "6", "--synth-beneficiaries", "20"])
        .output()
        .unwrap();
    assert!(env.status.success(), "{}", String::from_utf8_lossy(&env.stderr));
    assert!(tmp.path().join("from_env/claims.csv").exists());
}

#[test]
fn synth_ingest_round_trip_with_known_groups() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(pathway(tmp.path(), &["synth", "--out-dir", "o"]).status.success());
    let truth = read_json(&tmp.path().join("o/physician_groups.json"));
    let ingest = pathway(tmp.path(), &["ingest", "--out-dir", "o", "--grouping-file", "o/physician_groups.json"]);
    assert!(ingest.status.success(), "{}", String::from_utf8_lossy(&ingest.stderr));
    let s = summary(&ingest);
    assert_eq!((s["claims"].as_u64(), s["skipped_rows"].as_u64()), (Some(8208), Some(0)));
    let art = read_json(&tmp.path().join("o/ingest.json"));
    assert_eq!(art["data"]["grouping"]["groups"], truth);
    assert!(art["meta"]["inputs"]["claims.csv"].is_string());
    assert!(art["meta"]["inputs"]["physician_groups.json"].is_string());

    for stage in ["compress", "fit", "solve"] {
        assert!(pathway(tmp.path(), &[stage, "--out-dir", "o"]).status.success());
    }
    let cv = pathway(tmp.path(), &["cv", "--out-dir", "o", "--grouping-file", "o/physician_groups.json", "--repeats", "6", "--rollouts", "30", "--k-max", "4", "--workers", "2"]);
    assert!(cv.status.success(), "{}", String::from_utf8_lossy(&cv.stderr));
    let report = read_json(&tmp.path().join("o/cv_report.json"));
    let ks: Vec<u64> = report["data"]["entries"].as_array().unwrap().iter().map(|e| e["k"].as_u64().unwrap()).collect();
    assert_eq!(ks, vec![2, 3, 4]);
}
