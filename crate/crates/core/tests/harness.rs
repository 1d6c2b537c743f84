use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use wmnav::config::NavConfig;
use wmnav::harness::{
    generate_suite, read_ppm, read_results, run_benchmark, snapshot_from_log, BackendChoice, BenchmarkSummary,
    RunOptions,
};

fn bundled() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../suites/bundled")
}

/// Copies the first `n` bundled episodes into a suite under `dir`, with
/// scene paths made absolute.
fn mini_suite(dir: &Path, n: usize) -> PathBuf {
    let src = bundled();
    let scenes = fs::canonicalize(src.join("scenes")).unwrap();
    fs::create_dir_all(dir.join("episodes")).unwrap();
    let mut listed = Vec::new();
    for i in 0..n {
        let name = format!("episodes/ep_{i:02}.json");
        let mut ep: serde_json::Value = serde_json::from_str(&fs::read_to_string(src.join(&name)).unwrap()).unwrap();
        let scene = ep["scene"].as_str().unwrap().rsplit('/').next().unwrap().to_string();
        ep["scene"] = scenes.join(scene).to_str().unwrap().into();
        fs::write(dir.join(&name), ep.to_string()).unwrap();
        listed.push(name);
    }
    let suite = serde_json::json!({"schema": 1, "name": "mini", "episodes": listed});
    let path = dir.join("suite.json");
    fs::write(&path, suite.to_string()).unwrap();
    path
}

#[test]
fn bundled_suite_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bundled");
    let cfg = NavConfig::default();
    generate_suite(&out, 20, 1, cfg.map_size as f64 * cfg.resolution).unwrap();
    for sub in ["suite.json", "episodes", "scenes"] {
        let a = bundled().join(sub);
        let files: Vec<PathBuf> = if a.is_dir() {
            let mut v: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().path()).collect();
            v.sort();
            v
        } else {
            vec![a.clone()]
        };
        for f in files {
            let rel = f.strip_prefix(bundled()).unwrap();
            assert_eq!(
                fs::read_to_string(&f).unwrap(),
                fs::read_to_string(out.join(rel)).unwrap(),
                "{} differs",
                rel.display()
            );
        }
    }
}

#[test]
fn run_writes_artifacts_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let suite = mini_suite(&dir.path().join("suite"), 3);
    let opts = RunOptions {
        seed: 1,
        ..RunOptions::default()
    };
    let out = dir.path().join("oracle");
    let run = run_benchmark(&suite, &BackendChoice::Oracle, &out, &opts).unwrap();
    assert_eq!(run.summary.episodes, 3);
    assert_eq!(run.summary.backend, "oracle");

    for a in &run.summary.artifacts {
        assert!(out.join(a).is_file(), "missing {a}");
    }
    let on_disk: BenchmarkSummary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk.spl, run.summary.spl);
    assert_eq!(read_results(&out.join("results.jsonl")).unwrap(), run.results);

    for r in &run.results {
        let ep_dir = out.join("episodes").join(&r.episode_id);
        let traj = ep_dir.join("trajectory.jsonl");
        assert_eq!(fs::read_to_string(&traj).unwrap().lines().count(), r.steps);
        let rebuilt = snapshot_from_log(&traj).unwrap();
        let written = read_ppm(&ep_dir.join("snapshot.ppm")).unwrap();
        assert_eq!(rebuilt, written, "{}", r.episode_id);
    }

    let replayed_out = dir.path().join("replay");
    let replayed = run_benchmark(
        &suite,
        &BackendChoice::Replay(out.join("vlm_calls.jsonl")),
        &replayed_out,
        &opts,
    )
    .unwrap();
    assert_eq!(replayed.results, run.results);
    for r in &run.results {
        let rel = format!("episodes/{}/trajectory.jsonl", r.episode_id);
        assert_eq!(
            fs::read_to_string(out.join(&rel)).unwrap(),
            fs::read_to_string(replayed_out.join(&rel)).unwrap()
        );
    }
}

#[test]
fn rejects_bad_suites() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, r#"{"schema": 1, "name": "e", "episodes": []}"#).unwrap();
    let opts = RunOptions::default();
    assert!(run_benchmark(&empty, &BackendChoice::Oracle, &dir.path().join("o"), &opts).is_err());

    let future = dir.path().join("future.json");
    fs::write(&future, r#"{"schema": 99, "name": "f", "episodes": ["x.json"]}"#).unwrap();
    assert!(run_benchmark(&future, &BackendChoice::Oracle, &dir.path().join("o"), &opts).is_err());

    assert!(run_benchmark(&dir.path().join("nope.json"), &BackendChoice::Oracle, &dir.path().join("o"), &opts).is_err());
}

fn wmnav(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_wmnav"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "wmnav {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cli_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();

    let suite = wmnav(&["gen-suite", "--dir", &p("gen"), "--count", "2", "--seed", "7"]);
    assert!(Path::new(suite.trim()).is_file());

    let summary = wmnav(&["run", "--suite", suite.trim(), "--out", &p("out"), "--max-steps", "6", "--threads", "1"]);
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["episodes"], 2);

    let spl = wmnav(&["spl", "--results", &p("out/results.jsonl")]);
    let spl: serde_json::Value = serde_json::from_str(&spl).unwrap();
    assert_eq!(spl["spl"], summary["spl"]);
    assert_eq!(spl["sr"], summary["sr"]);

    let snap = wmnav(&["snapshot", "--episode", &p("out/episodes/ep_00/trajectory.jsonl"), "--out", &p("s.ppm")]);
    assert_eq!(
        read_ppm(Path::new(snap.trim())).unwrap(),
        read_ppm(&dir.path().join("out/episodes/ep_00/snapshot.ppm")).unwrap()
    );

    let status = Command::new(env!("CARGO_BIN_EXE_wmnav"))
        .args(["run", "--suite", suite.trim(), "--backend", "replay", "--out", &p("r")])
        .output()
        .unwrap()
        .status;
    assert!(!status.success(), "replay without --replay must fail");
}
