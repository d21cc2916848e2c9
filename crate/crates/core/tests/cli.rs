use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use irb_motion::checkpoint::{Checkpoint, Preprocessing};
use irb_motion::data::{load_pose_csv, synth_motion, write_pose_csv, MotionKind};
use irb_motion::model::{Model, ModelConfig};
use irb_motion::training::{zero_velocity_baseline, EvalTable};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irb-motion"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("IRB_MOTION_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn zero_checkpoint(dir: &Path, joints: usize, output_frames: usize) -> std::path::PathBuf {
    let config = ModelConfig::reference(joints, 10, output_frames).unwrap();
    let path = dir.join("zero.bin");
    Checkpoint { model: Model::zeros(config).unwrap(), preprocessing: Preprocessing::default() }
        .save(&path)
        .unwrap();
    path
}

#[test]
fn synth_writes_expected_columns_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = bin(&["synth", "--kind", "gait", "--joints", "16", "--frames", "200", "--seed", "7", "--out", s(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 201);
    assert!(lines.iter().all(|l| l.split(',').count() == 49));
    assert_eq!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn synth_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    let zero = bin(&["synth", "--kind", "gait", "--frames", "0", "--out", s(&p)]);
    assert_eq!(zero.status.code(), Some(2));
    let kind = bin(&["synth", "--kind", "dance", "--frames", "5", "--out", s(&p)]);
    assert!(!kind.status.success());
    assert!(String::from_utf8_lossy(&kind.stderr).contains("dance"));
    let unwritable = bin(&["synth", "--kind", "gait", "--frames", "5", "--out", "/proc/nope/x.csv"]);
    assert!(!unwritable.status.success());
}

#[test]
fn missing_config_names_the_path() {
    let out = bin(&["train", "--config", "/definitely/missing.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/missing.toml"));
}

#[test]
fn bad_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[train]\nepoch = 3\n[data.synthetic]\nkind = \"gait\"\nsequences = 2\njoints = 4\nframes = 30\n").unwrap();
    let out = bin(&["train", "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

#[test]
fn train_then_predict_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[model]\ngcn_layers = 2\noutput_frames = 2\n\
         [train]\nepochs = 2\n\
         [data]\n[data.synthetic]\nkind = \"one_limb\"\nsequences = 3\njoints = 4\nframes = 16\n\
         [paths]\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let out = bin(&["train", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("out");
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(run.join("timing.csv").exists());
    let ckpt = run.join("checkpoint.bin");

    // environment override of the output directory
    let env_dir = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_irb-motion"))
        .args(["train", "--config", s(&cfg)])
        .env("IRB_MOTION_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(env_dir.join("history.csv")).unwrap(), history);

    let input = dir.path().join("in.csv");
    write_pose_csv(&synth_motion(MotionKind::OneLimb, 4, 12, 1, 25).unwrap(), &input).unwrap();
    let pred = dir.path().join("pred.csv");
    let out = bin(&["predict", "--checkpoint", s(&ckpt), "--input-csv", s(&input), "--out", s(&pred)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_pose_csv(&pred).unwrap().frame_count(), 2);

    let table = dir.path().join("eval.csv");
    let out = bin(&["eval", "--checkpoint", s(&ckpt), "--data", s(&input), "--horizons", "40,80", "--out", s(&table)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = EvalTable::read_csv(fs::File::open(&table).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 2);
    let beyond = bin(&["eval", "--checkpoint", s(&ckpt), "--data", s(&input), "--horizons", "400", "--out", s(&table)]);
    assert!(!beyond.status.success());
}

#[test]
fn zero_checkpoint_predicts_a_frozen_pose() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = zero_checkpoint(dir.path(), 4, 10);
    let input = dir.path().join("in.csv");
    let seq = synth_motion(MotionKind::Gait, 4, 10, 3, 25).unwrap();
    write_pose_csv(&seq, &input).unwrap();
    let pred = dir.path().join("p.csv");
    let out = bin(&["predict", "--checkpoint", s(&ckpt), "--input-csv", s(&input), "--out", s(&pred)]);
    assert!(out.status.success());
    let p = load_pose_csv(&pred).unwrap();
    assert_eq!(p.frame_count(), 10);
    for t in 0..10 {
        assert_eq!(p.frame(t), seq.frame(9));
    }

    let short = dir.path().join("short.csv");
    write_pose_csv(&synth_motion(MotionKind::Gait, 4, 9, 3, 25).unwrap(), &short).unwrap();
    let out = bin(&["predict", "--checkpoint", s(&ckpt), "--input-csv", s(&short), "--out", s(&pred)]);
    assert!(!out.status.success());
}

#[test]
fn eval_of_zero_checkpoint_matches_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = zero_checkpoint(dir.path(), 4, 25);
    let data = dir.path().join("seq.csv");
    let seq = synth_motion(MotionKind::OneLimb, 4, 60, 2, 25).unwrap();
    write_pose_csv(&seq, &data).unwrap();
    let table = dir.path().join("t.csv");
    let out = bin(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&table)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = EvalTable::read_csv(fs::File::open(&table).unwrap()).unwrap();
    let horizons: Vec<u32> = t.rows.iter().map(|r| r.horizon_ms).collect();
    assert_eq!(horizons, vec![560, 1000]);
    let samples = irb_motion::data::window(&seq, 10, 25, 1);
    let zv = zero_velocity_baseline(&samples, &horizons, 25).unwrap();
    for (r, z) in t.rows.iter().zip(zv) {
        assert!((r.mpjpe_mm - z).abs() <= 1e-12);
        assert!((r.zero_velocity_mm - z).abs() <= 1e-12);
    }

    let wrong = dir.path().join("wrong.csv");
    write_pose_csv(&synth_motion(MotionKind::OneLimb, 5, 60, 2, 25).unwrap(), &wrong).unwrap();
    let out = bin(&["eval", "--checkpoint", s(&ckpt), "--data", s(&wrong), "--out", s(&table)]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains('4') && msg.contains('5'), "{msg}");
}

#[test]
fn gradcheck_exit_codes() {
    let ok = bin(&["gradcheck", "--scale", "tiny"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("model") && text.contains("conv1d_valid"));
    let bad = bin(&["gradcheck", "--scale", "tiny", "--inject-fault", "tanh"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("tanh"));
}
