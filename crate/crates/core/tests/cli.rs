use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facegps::flow::read_field_csv;
use facegps::model::Vec2;

fn facegps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facegps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, size: usize, frames: usize) -> PathBuf {
    let input = dir.join("in");
    let out = facegps(&[
        "synth",
        "--out",
        p(&input),
        "--size",
        &size.to_string(),
        "--frame-count",
        &frames.to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    input
}

fn pipeline(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let (frames, landmarks, canonical) =
        (input.join("frames"), input.join("landmarks.json"), input.join("canonical.json"));
    let mut args = vec![
        "pipeline",
        "--frames",
        p(&frames),
        "--landmarks",
        p(&landmarks),
        "--canonical",
        p(&canonical),
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    facegps(&args)
}

fn files(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
        .collect();
    v.sort();
    v
}

fn assert_same_files(a: &Path, b: &Path, prefix: &str) {
    let fa = files(a, prefix);
    let fb = files(b, prefix);
    assert!(!fa.is_empty(), "no {prefix} files in {}", a.display());
    assert_eq!(fa.len(), fb.len(), "{prefix} file counts");
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(fs::read(x).unwrap() == fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn two_frame_clip_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 128, 2);
    let out = tmp.path().join("out");
    let o = pipeline(&input, &out, &["--uniform-descriptors", "7", "--emit-canonical"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out, "raw_").len(), 1);
    assert_eq!(files(&out, "smoothed_").len(), 1);
    assert_eq!(files(&out, "overlay_").len(), 1);
    assert_eq!(files(&out.join("canonical"), "canonical_").len(), 2);
    let features = fs::read_to_string(out.join("features.csv")).unwrap();
    let header = features.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split(',').count(), 1 + 7 * 5 + 2 + 1);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["dense_landmark_count"], 3964);
    assert_eq!(meta["descriptor_count"], 7);
    assert_eq!(meta["skipped_points"].as_array().unwrap().len(), 1);
    assert!(meta["config_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn corrupt_landmarks_exit_2_in_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 64, 2);
    fs::write(input.join("landmarks.json"), "{\"version\": 1, \"frames\": [").unwrap();
    let o = pipeline(&input, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[ingest]"));
}

#[test]
fn missing_frames_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 64, 2);
    fs::remove_file(input.join("frames").join("frame_000001.pfm")).unwrap();
    let o = pipeline(&input, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[ingest]"));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(facegps(&["bogus"]).status.code(), Some(64));
    assert_eq!(facegps(&["pipeline"]).status.code(), Some(64));
    assert_eq!(facegps(&["--help"]).status.code(), Some(0));
}

#[test]
fn staged_run_matches_one_shot_run() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 128, 3);
    let one = tmp.path().join("one");
    let o = pipeline(&input, &one, &["--subdivision", "2", "--spectral-k", "40", "--y4m"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let tuning = ["--subdivision", "2", "--spectral-k", "40"];
    let canonical = p(&input.join("canonical.json")).to_string();
    let frames = p(&input.join("frames")).to_string();
    let landmarks = p(&input.join("landmarks.json")).to_string();
    let run = |args: Vec<&str>| {
        let mut all = args;
        all.extend_from_slice(&tuning);
        let o = facegps(&all);
        assert!(o.status.success(), "{:?}: {}", all, String::from_utf8_lossy(&o.stderr));
    };
    let warped = tmp.path().join("warped");
    let raw = tmp.path().join("raw");
    let smooth = tmp.path().join("smooth");
    let overlay = tmp.path().join("overlay");
    let features = tmp.path().join("features.csv");
    run(vec!["warp", "--frames", &frames, "--landmarks", &landmarks, "--canonical", &canonical, "--out", p(&warped)]);
    run(vec!["flow", "--frames", p(&warped), "--canonical", &canonical, "--out", p(&raw)]);
    run(vec!["smooth", "--fields", p(&raw), "--canonical", &canonical, "--out", p(&smooth)]);
    run(vec![
        "overlay", "--frames", &frames, "--landmarks", &landmarks, "--canonical", &canonical, "--fields", p(&smooth),
        "--out", p(&overlay), "--y4m",
    ]);
    run(vec!["features", "--fields", p(&smooth), "--canonical", &canonical, "--out", p(&features)]);

    assert_same_files(&one, &raw, "raw_");
    assert_same_files(&one, &smooth, "smoothed_");
    assert_same_files(&one, &overlay, "overlay");
    assert_eq!(fs::read(one.join("features.csv")).unwrap(), fs::read(&features).unwrap());
}

#[test]
fn anchor_first_accumulates_motion() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 128, 3);
    let consecutive = tmp.path().join("c");
    let first = tmp.path().join("f");
    for (dir, anchor) in [(&consecutive, "consecutive"), (&first, "first")] {
        let o = pipeline(&input, dir, &["--subdivision", "1", "--anchor", anchor]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |path: PathBuf| read_field_csv(fs::File::open(path).unwrap()).unwrap();
    let c0 = read(consecutive.join("raw_000000.csv"));
    let c1 = read(consecutive.join("raw_000001.csv"));
    let f0 = read(first.join("raw_000000.csv"));
    let f1 = read(first.join("raw_000001.csv"));
    assert_eq!(c0, f0);
    assert_eq!(f1.frame_pair, (0, 2));
    // canonical-space motion composes approximately additively for small smooth fields
    let mut err: Vec<f64> = (0..f1.len())
        .filter(|&j| c0.valid[j] && c1.valid[j] && f1.valid[j])
        .map(|j| {
            let sum: Vec2 = c0.displacements[j] + c1.displacements[j];
            (f1.displacements[j] - sum).norm()
        })
        .collect();
    assert!(err.len() > f1.len() * 9 / 10);
    err.sort_by(f64::total_cmp);
    assert!(err[err.len() / 2] < 0.1, "median {}", err[err.len() / 2]);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 128, 3);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "8")] {
        let o = pipeline(&input, dir, &["--threads", threads, "--y4m", "--emit-canonical", "--heat"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for prefix in ["raw_", "smoothed_", "overlay", "features", "run"] {
        assert_same_files(&a, &b, prefix);
    }
    assert_same_files(&a.join("canonical"), &b.join("canonical"), "canonical_");
}

#[test]
fn classify_cross_validates_feature_table() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("features.csv");
    let mut text = String::from("# test table\nsequence,a,b,label\n");
    for i in 0..30 {
        let (cls, x) = if i % 2 == 0 { ("smile", 1.0) } else { ("frown", -1.0) };
        text.push_str(&format!("s{i},{},{},{cls}\n", x + 0.01 * i as f64, (i % 7) as f64));
    }
    fs::write(&table, text).unwrap();
    let out = tmp.path().join("cls");
    let o = facegps(&["classify", "--features", p(&table), "--folds", "5", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next().unwrap(), "sequence,predicted,score_frown,score_smile");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    for (i, r) in rows.iter().enumerate() {
        let want = if i % 2 == 0 { "smile" } else { "frown" };
        assert_eq!(r.split(',').nth(1).unwrap(), want);
    }
}
