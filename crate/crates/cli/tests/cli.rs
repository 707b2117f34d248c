use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lsd2_core::dataset;
use lsd2_core::gyro::GyroTrack;
use lsd2_core::io::{read_image, read_json, write_image};
use lsd2_core::metrics::MetricReport;
use lsd2_core::scene::procedural_scene;
use lsd2_core::Image;
use serde_json::Value;

fn lsd2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsd2")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = lsd2(args);
    assert!(
        out.status.success(),
        "lsd2 {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(dir: &Path, count: usize, extra: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let n = count.to_string();
    let mut args = vec!["gen", "--out", s(&out), "--count", &n, "--width", "32", "--height", "32"];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 3, "gen": {"count": 3, "width": 24, "height": 16}}"#).unwrap();

    let a = tmp.path().join("a");
    ok(&["gen", "--config", s(&cfg), "--out", s(&a)]);
    let m = dataset::read_manifest(&a).unwrap();
    assert_eq!((m.seed, m.count, m.width, m.height), (3, 3, 24, 16));

    let b = tmp.path().join("b");
    ok(&["--seed", "4", "gen", "--config", s(&cfg), "--out", s(&b), "--count", "2"]);
    let m = dataset::read_manifest(&b).unwrap();
    assert_eq!((m.seed, m.count, m.width, m.height), (4, 2, 24, 16));
}

#[test]
fn config_file_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"gen": {"cuont": 3}}"#).unwrap();
    let out = lsd2(&["gen", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cuont"));
}

#[test]
fn gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = gen_small(&tmp.path().join("1"), 10, &["--seed", "7"]);
    let b = gen_small(&tmp.path().join("2"), 10, &["--seed", "7"]);
    assert_eq!(files(&a), files(&b));
    let c = gen_small(&tmp.path().join("3"), 10, &["--seed", "8"]);
    assert_ne!(files(&a), files(&c));
}

#[test]
fn gen_records_shutter_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = gen_small(tmp.path(), 2, &["--exposure-ms", "210", "--readout-ms", "30"]);
    let m = dataset::read_manifest(&d).unwrap();
    let motion = m.motion.unwrap();
    assert!((motion.exposure_s - 0.21).abs() < 1e-12);
    assert!((motion.readout_s - 0.03).abs() < 1e-12);
    let meta: Value = read_json(&dataset::meta_path(&d, 1)).unwrap();
    assert!((meta["t_e"].as_f64().unwrap() - 0.21).abs() < 1e-12);
    assert!((meta["t_r"].as_f64().unwrap() - 0.03).abs() < 1e-12);
}

#[test]
fn fusion_mode_switches_scale_range_and_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let d = gen_small(tmp.path(), 2, &["--fusion-mode", "--raw-f32"]);
    let (m, entries) = dataset::load(&d).unwrap();
    assert!(m.fusion_mode);
    assert!((m.params.s_range.0 - 1.0 / 3.0).abs() < 1e-6 && m.params.s_range.1 == 3.0);
    let source = procedural_scene(0, 0, 32, 32);
    let diff = entries[0]
        .target
        .data()
        .iter()
        .zip(source.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    assert!(diff < 1e-4, "{diff}");
}

fn write_log(path: &Path, track: &GyroTrack) {
    std::fs::write(path, track.to_log()).unwrap();
}

fn blur_stderr(input: &Path, log: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["blur", "--input", s(input), "--gyro", s(log), "--out", s(out)];
    args.extend_from_slice(extra);
    String::from_utf8_lossy(&ok(&args).stderr).into_owned()
}

#[test]
fn blur_without_motion_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.png");
    write_image(&input, &procedural_scene(1, 0, 40, 30)).unwrap();
    let log = tmp.path().join("still.csv");
    write_log(&log, &GyroTrack::constant([0.0; 3], 1.0, 200.0).unwrap());
    let out = tmp.path().join("out.png");
    blur_stderr(&input, &log, &out, &[]);
    assert_eq!(read_image(&out).unwrap(), read_image(&input).unwrap());
}

#[test]
fn readout_time_changes_the_blur() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.png");
    write_image(&input, &procedural_scene(2, 0, 48, 48)).unwrap();
    let log = tmp.path().join("shake.csv");
    write_log(&log, &GyroTrack::synthetic_shake(5, 1.0, 500.0, 1.5).unwrap());
    let a = tmp.path().join("global.png");
    let b = tmp.path().join("rolling.png");
    blur_stderr(&input, &log, &a, &["--readout-ms", "0", "--tile-size", "8"]);
    blur_stderr(&input, &log, &b, &["--readout-ms", "30", "--tile-size", "8"]);
    assert_ne!(read_image(&a).unwrap(), read_image(&b).unwrap());
}

fn max_trail(stderr: &str) -> f64 {
    let rest = stderr.split("max trail ").nth(1).unwrap();
    rest.split(' ').next().unwrap().parse().unwrap()
}

#[test]
fn longer_exposure_never_shortens_the_trail() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.png");
    write_image(&input, &procedural_scene(3, 0, 32, 32)).unwrap();
    let log = tmp.path().join("shake.csv");
    write_log(&log, &GyroTrack::synthetic_shake(6, 1.0, 500.0, 0.5).unwrap());
    let out = tmp.path().join("out.png");
    let grid = tmp.path().join("psfs.png");
    let mut prev = 0.0;
    for te in ["25", "50", "100", "200"] {
        let err = blur_stderr(&input, &log, &out, &["--te-ms", te, "--dump-psfs", s(&grid)]);
        let trail = max_trail(&err);
        assert!(trail >= prev, "{te} ms: {trail} < {prev}");
        prev = trail;
    }
    assert!(read_image(&grid).is_ok());
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_small(tmp.path(), 3, &["--seed", "2"]);
    let common = ["--data", s(&data), "--depth", "1", "--base", "4", "--lr", "0.001"];
    let full = tmp.path().join("full");
    let mut args = vec!["train", "--out", s(&full), "--epochs", "3"];
    args.extend_from_slice(&common);
    ok(&args);

    let part = tmp.path().join("part");
    let mut args = vec!["train", "--out", s(&part), "--epochs", "1"];
    args.extend_from_slice(&common);
    ok(&args);
    let ckpt = part.join("model.ckpt");
    ok(&["train", "--data", s(&data), "--out", s(&part), "--epochs", "3", "--resume", s(&ckpt)]);

    assert_eq!(files(&full), files(&part));
    let csv = std::fs::read_to_string(full.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epoch,loss\n1,"));
}

#[test]
fn train_rejects_mismatched_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_small(tmp.path(), 1, &["--fusion-mode"]);
    let out = lsd2(&["train", "--data", s(&data), "--out", s(&tmp.path().join("m"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fusion-mode"));
}

fn eval(pred: &Path, reference: &Path, extra: &[&str]) -> MetricReport {
    let mut args = vec!["eval", "--pred", s(pred), "--ref", s(reference)];
    args.extend_from_slice(extra);
    serde_json::from_slice(&ok(&args).stdout).unwrap()
}

#[test]
fn eval_scores_self_and_color_matched_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = tmp.path().join("ref");
    let shifted = tmp.path().join("pred");
    std::fs::create_dir_all(&reference).unwrap();
    std::fs::create_dir_all(&shifted).unwrap();
    for i in 0..3 {
        let img = procedural_scene(4, i, 32, 32).map(|v, _| 0.1 + 0.8 * v);
        let gains = [0.7f32, 0.9, 0.6];
        write_image(&reference.join(format!("{i}.png")), &img).unwrap();
        write_image(&shifted.join(format!("{i}.png")), &img.map(|v, c| v * gains[c])).unwrap();
    }
    let same = eval(&reference, &reference, &[]);
    assert_eq!(same.count, 3);
    assert!((same.mean_ssim - 1.0).abs() < 1e-12);
    assert!(same.images.iter().all(|s| s.exact));

    let raw = eval(&shifted, &reference, &[]);
    let matched = eval(&shifted, &reference, &["--color-match"]);
    assert!(matched.normalized && !raw.normalized);
    assert!(matched.mean_psnr_db > raw.mean_psnr_db + 3.0, "{} vs {}", matched.mean_psnr_db, raw.mean_psnr_db);
}

#[test]
fn eval_lists_unmatched_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let img = Image::filled(16, 16, 0.5);
    write_image(&a.join("x.png"), &img).unwrap();
    write_image(&b.join("y.png"), &img).unwrap();
    let out = lsd2(&["eval", "--pred", s(&a), "--ref", s(&b)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("x.png") && err.contains("y.png"), "{err}");
}

#[test]
fn fuse_and_restore_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_small(&tmp.path().join("f"), 2, &["--fusion-mode"]);
    let model = tmp.path().join("fusion");
    ok(&["train", "--arch", "fusion", "--data", s(&data), "--out", s(&model), "--epochs", "1"]);
    let ckpt = model.join("model.ckpt");

    // equal inputs come back unchanged whatever the weights
    let img_path = tmp.path().join("img.png");
    write_image(&img_path, &procedural_scene(5, 0, 32, 32)).unwrap();
    let fused = tmp.path().join("fused.png");
    let weights = tmp.path().join("w.png");
    ok(&[
        "fuse", "--short", s(&img_path), "--long", s(&img_path), "--checkpoint", s(&ckpt), "--out", s(&fused),
        "--dump-weights", s(&weights),
    ]);
    assert_eq!(read_image(&fused).unwrap(), read_image(&img_path).unwrap());
    assert!(read_image(&weights).is_ok());

    // fused output stays between the inputs
    let short = dataset::entry_path(&data, 0, dataset::Role::Short, "png");
    let long = dataset::entry_path(&data, 0, dataset::Role::Long, "png");
    ok(&["fuse", "--short", s(&short), "--long", s(&long), "--checkpoint", s(&ckpt), "--out", s(&fused)]);
    let (f, a, b) = (read_image(&fused).unwrap(), read_image(&short).unwrap(), read_image(&long).unwrap());
    for ((&f, &a), &b) in f.data().iter().zip(a.data()).zip(b.data()) {
        assert!(f >= a.min(b) - 0.5 / 255.0 - 1e-6 && f <= a.max(b) + 0.5 / 255.0 + 1e-6);
    }

    // a fusion checkpoint is refused by restore, and the reverse
    let out = lsd2(&["restore", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&tmp.path().join("r"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected `lsd2`"));

    let lsd_data = gen_small(&tmp.path().join("l"), 2, &[]);
    let lsd_model = tmp.path().join("lsd2");
    ok(&["train", "--data", s(&lsd_data), "--out", s(&lsd_model), "--epochs", "1", "--depth", "1", "--base", "4"]);
    let lsd_ckpt = lsd_model.join("model.ckpt");
    let restored = tmp.path().join("restored");
    ok(&["restore", "--checkpoint", s(&lsd_ckpt), "--data", s(&lsd_data), "--out", s(&restored)]);
    let report = eval(&restored, &lsd_data, &[]);
    assert_eq!(report.count, 2);
    let out = lsd2(&["fuse", "--short", s(&img_path), "--long", s(&img_path), "--checkpoint", s(&lsd_ckpt), "--out", s(&fused)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected `fusion`"));
}
