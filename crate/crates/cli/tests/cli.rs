use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ivsnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivsnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small, fast experiment: few clips, two videos, a handful of iterations.
fn write_small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{
  "dataset": {"clips_per_class": 4, "background_clips": 4, "held_out_per_class": 1},
  "videos": {"n_videos": 2},
  "train": {"iterations": 4}
}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn staged_verbs_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let o = ivsnet(&["gen-data", "--config", &cfg, "--out", out_s, "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("dataset/manifest.json").exists());
    assert!(out.join("videos/ground_truth.jsonl").exists());

    let o = ivsnet(&["train", "--config", &cfg, "--out", out_s, "--seed", "5", "--lambda", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("held-out identification accuracy"));
    let log = fs::read_to_string(out.join("training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);

    let o = ivsnet(&["detect", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("detections.jsonl").exists());

    let o = ivsnet(&["eval", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("class,0.5,0.4,0.3,0.2,0.1\n"));
    assert!(stdout(&o).contains("\nmAP,"));
    assert_eq!(stdout(&o), fs::read_to_string(out.join("eval.csv")).unwrap());
}

#[test]
fn contrastive_training_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(ivsnet(&["gen-data", "--config", &cfg, "--out", out_s]).status.success());
    let o = ivsnet(&["train", "--config", &cfg, "--out", out_s, "--loss", "contrastive", "--margin", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_and_detects_a_corrupted_conv() {
    let o = ivsnet(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().all(|l| l.ends_with("PASS")));

    let o = ivsnet(&["gradcheck", "--inject-fault", "conv-backward"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).lines().any(|l| l.starts_with("conv3d") && l.ends_with("FAIL")));
}

#[test]
fn run_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = ivsnet(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "dataset/manifest.json",
        "videos/manifest.json",
        "training_log.csv",
        "detections.jsonl",
        "eval.csv",
        "summary.csv",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_lambda_emits_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = ivsnet(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--sweep-lambda", "--iterations", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("lambda_sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "lambda,0.5,0.4,0.3,0.2,0.1");
    assert_eq!(lines.len(), 5);
}

#[test]
fn report_merges_runs_and_names_bad_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let mut runs = Vec::new();
    for (name, seed) in [("r1", "1"), ("r2", "2")] {
        let out = dir.path().join(name);
        let o = ivsnet(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(out);
    }
    let rep = dir.path().join("rep");
    let o = ivsnet(&[
        "report",
        runs[0].to_str().unwrap(),
        runs[1].to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(rep.join("report.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "run,0.5,0.4,0.3,0.2,0.1");
    for name in ["map_vs_threshold.svg", "training_curves.svg"] {
        let svg = fs::read_to_string(rep.join(name)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    // A single-run report repeats that run's own mAP row.
    let single = dir.path().join("single");
    let o = ivsnet(&["report", runs[0].to_str().unwrap(), "--out", single.to_str().unwrap()]);
    assert!(o.status.success());
    let own = fs::read_to_string(runs[0].join("eval.csv")).unwrap();
    let own_map = own.lines().last().unwrap().trim_start_matches("mAP");
    let merged = fs::read_to_string(single.join("report.csv")).unwrap();
    assert_eq!(merged.lines().nth(1).unwrap(), format!("r1{own_map}"));

    let missing = dir.path().join("nothing-here");
    fs::create_dir_all(&missing).unwrap();
    let o = ivsnet(&["report", missing.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("nothing-here"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"learning_rate": -1}}"#).unwrap();
    let out = dir.path().join("o");
    let o = ivsnet(&["run", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    fs::write(&bad, "{not json").unwrap();
    let o = ivsnet(&["gen-data", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = ivsnet(&["gen-data", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let o = ivsnet(&["train", "--out", dir.path().join("empty").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    let o = ivsnet(&["run", "--lambda", "-2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = ivsnet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}
