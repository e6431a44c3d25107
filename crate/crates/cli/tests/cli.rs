use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 6] = [
    "--override",
    "generation.scenes=2",
    "--override",
    "generation.episodes_per_difficulty=2",
    "--override",
    "run.max_steps=120",
];

fn lastmile(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lastmile")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, per_difficulty: usize) {
    let n = format!("generation.episodes_per_difficulty={per_difficulty}");
    let out = lastmile(&["generate", "--seed", "4", "--out", path(dir), "--override", "generation.scenes=2", "--override", &n]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_is_deterministic_and_fills_each_bucket() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, 5);
    generate(&b, 5);
    let ep_a = fs::read_to_string(a.join("episodes.jsonl")).unwrap();
    assert_eq!(ep_a, fs::read_to_string(b.join("episodes.jsonl")).unwrap());
    for name in ["scene_000.json", "scene_001.json"] {
        assert_eq!(fs::read(a.join("scenes").join(name)).unwrap(), fs::read(b.join("scenes").join(name)).unwrap());
    }
    for d in ["easy", "medium", "hard"] {
        let count = ep_a
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|v| v["difficulty"] == d)
            .count();
        assert_eq!(count, 5, "{d}");
    }
}

#[test]
fn run_outputs_are_identical_across_repeats_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 2);
    let mut files = Vec::new();
    for (name, workers) in [("r1", "1"), ("r2", "1"), ("r3", "3")] {
        let out_dir = tmp.path().join(name);
        let mut args = vec!["run", "--data", path(&data), "--out", path(&out_dir), "--workers", workers];
        args.extend(SMALL);
        let out = lastmile(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push((fs::read(out_dir.join("results.jsonl")).unwrap(), fs::read(out_dir.join("summary.csv")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
    let summary = String::from_utf8(files[0].1.clone()).unwrap();
    assert!(summary.starts_with("fold,difficulty,success,spl,final_dist,n_episodes\n"));
    assert_eq!(String::from_utf8(files[0].0.clone()).unwrap().lines().count(), 6);
}

#[test]
fn effective_config_records_flags_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let mut args = vec!["run", "--out", path(&out_dir), "--explorer", "oracle", "--sling", "off", "--seed", "9"];
    args.extend(SMALL);
    let out = lastmile(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("effective_config.toml")).unwrap();
    let cfg = lastmile::config::Config::from_toml_with_overrides(Some(&text), &[]).unwrap();
    assert_eq!(cfg.seed, 9);
    assert!(!cfg.run.sling);
    assert_eq!(cfg.explorer.kind, lastmile::explorers::ExplorerKind::Oracle);
    for section in ["[matcher]", "[ransac]", "[switch]", "[policy]", "[noise]", "[explorer]", "[studies]"] {
        assert!(text.contains(section), "{section}");
    }

    let again = tmp.path().join("again");
    let effective = out_dir.join("effective_config.toml");
    let mut args = vec!["run", "--config", path(&effective), "--out", path(&again)];
    args.extend(SMALL);
    assert!(lastmile(&args).status.success());
    assert_eq!(fs::read(out_dir.join("results.jsonl")).unwrap(), fs::read(again.join("results.jsonl")).unwrap());
}

#[test]
fn stop_budget_study_writes_nine_monotone_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("s");
    let mut args =
        vec!["study", "stop_budget", "--out", path(&out_dir), "--explorer", "oracle", "--sling", "off"];
    args.extend(SMALL);
    let out = lastmile(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("stop_budget.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 9);
    let success: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(success.windows(2).all(|w| w[1] >= w[0]), "{success:?}");
}

#[test]
fn switch_heading_and_noise_studies_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("sw");
    let mut args = vec!["study", "switch_accuracy", "--out", path(&out_dir), "--override", "studies.pairs.pairs_per_scene=20"];
    args.extend(SMALL);
    let out = lastmile(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("switch_accuracy.csv")).unwrap();
    assert!(csv.starts_with("direction,accuracy,pairs,reference_accuracy\n"));
    assert!(csv.contains("explore_to_exploit,") && csv.contains(",40,92"));

    let out_dir = tmp.path().join("hb");
    let mut args = vec!["study", "heading_bias", "--out", path(&out_dir)];
    args.extend(SMALL);
    let out = lastmile(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(out_dir.join("heading_bias.csv")).unwrap().lines().count(), 4);
    assert!(out_dir.join("heading_histogram.csv").exists());

    let out_dir = tmp.path().join("ns");
    let mut args =
        vec!["study", "noise_sweep", "--out", path(&out_dir), "--override", "studies.noise_scales=[0.0, 2.0]", "--sling", "off"];
    args.extend(SMALL);
    let out = lastmile(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("noise_sweep.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["none", "pose", "pose+depth", "x0", "x2"]);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("x");
    let o = path(&out_dir);
    assert_eq!(lastmile(&["study", "bogus"]).status.code(), Some(1));
    assert_eq!(lastmile(&["run", "--out", o, "--override", "switch.nth=3"]).status.code(), Some(1));
    assert_eq!(lastmile(&["run", "--out", o, "--workers", "0"]).status.code(), Some(1));
    assert_eq!(lastmile(&["generate", "--out", o, "--override", "generation.rooms_x=[0, 0]"]).status.code(), Some(1));
    let infeasible = lastmile(&["generate", "--out", o, "--override", "generation.min_goal_landmarks=100000"]);
    assert_eq!(infeasible.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("easy"));

    let data = tmp.path().join("data");
    generate(&data, 1);
    fs::write(data.join("episodes.jsonl"), "{\"scene_id\": \"scene_000\"}\n").unwrap();
    let bad = lastmile(&["run", "--data", path(&data), "--out", o]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("episodes.jsonl:1"));
    assert_eq!(lastmile(&["--help"]).status.code(), Some(0));
}
