//! One PASS/FAIL line per acceptance criterion. Runs without the test
//! harness so the lines always print; exits nonzero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use irb_motion::checkpoint::{Checkpoint, Preprocessing};
use irb_motion::data::{center_root, synth_motion, window, write_pose_csv, MotionKind, SamplePair};
use irb_motion::gradcheck::{run_suite, CheckScale, GRADCHECK_TOLERANCE};
use irb_motion::irb::{default_config, irb_forward, sweep_configs, IrbParams, SWEEP_TOTALS};
use irb_motion::model::{LossKind, Model, ModelConfig};
use irb_motion::training::{evaluate, lr_schedule, mean_loss, mpjpe, run_sweep, train, EvalTable, SweepReport, TrainConfig};
use irb_motion::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn line(&mut self, name: &'static str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name);
        }
    }
}

fn gradient_correctness(r: &mut Report) {
    let start = Instant::now();
    let results = run_suite(CheckScale::Tiny, None, 0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    let pass = results.iter().all(|c| c.passed(GRADCHECK_TOLERANCE)) && secs < 60.0;
    r.line(
        "gradient correctness",
        pass,
        format!("{} checks, worst {} {:.2e} <= 1e-4, {secs:.1} s < 60 s", results.len(), worst.name, worst.max_rel_error),
    );
}

fn feature_arithmetic(r: &mut Report) {
    let config = default_config();
    let per_branch: Vec<usize> = config.branches().iter().map(|b| b.out_features()).collect();
    let realized = |c: &irb_motion::irb::IrbConfig| {
        let params = IrbParams::init(c, &mut ChaCha8Rng::seed_from_u64(0));
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let x = tape.leaf(Tensor::ones(vec![10]));
        let e = irb_forward(&mut tape, x, c, &vars).unwrap();
        tape.value(e).numel()
    };
    let sweep: Vec<usize> = sweep_configs().iter().map(realized).collect();
    let pass = per_branch == [68, 48, 112, 78, 44]
        && config.passthrough_len() == 10
        && realized(&config) == 360
        && sweep == SWEEP_TOTALS;
    r.line(
        "feature arithmetic",
        pass,
        format!("branches {per_branch:?} + {} passthrough = {}; presets realize {sweep:?}", config.passthrough_len(), realized(&config)),
    );
}

/// Zero-velocity error computed straight from the samples.
fn baseline_by_hand(samples: &[SamplePair], frame: usize) -> f64 {
    let mut total = 0.0;
    for s in samples {
        let (t_n, k) = (s.past.shape()[0], s.past.shape()[1]);
        let mut sum = 0.0;
        for j in 0..k {
            let d: f64 = (0..3)
                .map(|c| (s.future.get(&[frame - 1, j, c]) - s.past.get(&[t_n - 1, j, c])).powi(2))
                .sum();
            sum += d.sqrt();
        }
        total += sum / k as f64;
    }
    total / samples.len() as f64
}

fn zero_velocity_equivalence(r: &mut Report) {
    let config = ModelConfig::reference(5, 10, 25).unwrap();
    let model = Model::zeros(config.clone()).unwrap();
    let seq = synth_motion(MotionKind::Gait, 5, 60, 4, 25).unwrap();
    let samples = window(&seq, 10, 25, 1);
    let refs: Vec<&SamplePair> = samples.iter().collect();
    let frozen = model
        .predict(&refs)
        .unwrap()
        .iter()
        .zip(&samples)
        .all(|(p, s)| p.data().chunks(15).all(|f| f == s.last_observed()));

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.bin");
    Checkpoint { model, preprocessing: Preprocessing::default() }.save(&ckpt).unwrap();
    let data = dir.path().join("seq.csv");
    write_pose_csv(&seq, &data).unwrap();
    let out = dir.path().join("eval.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_irb-motion"))
        .args(["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()])
        .args(["--horizons", "80,160,320,400,560,1000", "--out", out.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    let table = EvalTable::read_csv(fs::File::open(&out).unwrap()).unwrap();
    let worst = table
        .rows
        .iter()
        .map(|row| {
            let b = baseline_by_hand(&samples, row.frame);
            (row.mpjpe_mm - b).abs().max((row.zero_velocity_mm - b).abs())
        })
        .fold(0.0, f64::max);
    let pass = frozen && status.success() && table.rows.len() == 6 && worst <= 1e-12;
    r.line(
        "zero-velocity equivalence",
        pass,
        format!("forecast == last pose bit-exact: {frozen}; eval vs hand baseline max diff {worst:.1e} mm over 6 horizons"),
    );
}

fn lr_schedule_values(r: &mut Report) {
    let got = [0, 2, 4].map(|e| lr_schedule(e, 0.0005, 0.96, 2));
    r.line("learning-rate schedule", got == [0.0005, 0.00048, 0.0004608], format!("epochs 0/2/4 -> {got:?}"));
}

fn overfit_capacity(r: &mut Report) {
    let start = Instant::now();
    let mut samples = Vec::new();
    for seed in 0..16 {
        samples.extend(window(&synth_motion(MotionKind::OneLimb, 4, 40, seed, 25).unwrap(), 10, 10, 1));
    }
    let config = ModelConfig::reference(4, 10, 10).unwrap().with_stable_init();
    let tc = TrainConfig::default();
    let outcome = train(tc.initial_model(config).unwrap(), &samples, &[], &tc).unwrap();
    let first = outcome.history.epochs[0].train_loss;
    let last = outcome.history.epochs.last().unwrap().train_loss;
    let fitted = mean_loss(&outcome.last, &samples, LossKind::Mpjpe).unwrap();
    let baseline = mean_loss(&Model::zeros(outcome.last.config.clone()).unwrap(), &samples, LossKind::Mpjpe).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = last < 0.1 * first && baseline >= 2.0 * fitted && secs < 900.0;
    r.line(
        "overfit capacity",
        pass,
        format!(
            "{} windows from 16 one_limb sequences, 50 epochs: epoch 1 {first:.2} mm -> epoch 50 {last:.2} mm ({:.1}% < 10%); held-in {fitted:.2} mm vs zero-velocity {baseline:.2} mm ({:.1}x >= 2x); {secs:.0} s",
            samples.len(),
            100.0 * last / first,
            baseline / fitted
        ),
    );
}

fn gait_generalization(r: &mut Report) {
    let (mut train_set, mut val_set) = (Vec::new(), Vec::new());
    for i in 0..20u64 {
        let seq = center_root(&synth_motion(MotionKind::Gait, 4, 60, 100 + i, 25).unwrap(), 0).unwrap();
        let w = window(&seq, 10, 10, 1);
        if i < 16 { train_set.extend(w) } else { val_set.extend(w) }
    }
    let config = ModelConfig::reference(4, 10, 10).unwrap().with_stable_init();
    let tc = TrainConfig::default();
    let outcome = train(tc.initial_model(config).unwrap(), &train_set, &val_set, &tc).unwrap();
    let row = &evaluate(&outcome.best, &val_set, &[400], 25).unwrap().rows[0];
    r.line(
        "gait generalization",
        row.mpjpe_mm < row.zero_velocity_mm,
        format!(
            "validation MPJPE at 400 ms {:.2} mm < zero-velocity {:.2} mm ({} train / {} val windows, best epoch {})",
            row.mpjpe_mm,
            row.zero_velocity_mm,
            train_set.len(),
            val_set.len(),
            outcome.best_epoch
        ),
    );
}

fn mpjpe_oracle(r: &mut Report) {
    let t = |v: Vec<f64>, f: usize| Tensor::new(vec![f, 1, 3], v).unwrap();
    let zero = mpjpe(&t(vec![1.0, 2.0, 3.0], 1), &t(vec![1.0, 2.0, 3.0], 1)).unwrap();
    let five = mpjpe(&t(vec![3.0, 4.0, 0.0], 1), &t(vec![0.0; 3], 1)).unwrap();
    let avg = mpjpe(&t(vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0], 2), &t(vec![0.0; 6], 2)).unwrap();
    let pass = zero.abs() <= 1e-12 && (five - 5.0).abs() <= 1e-12 && (avg - 2.5).abs() <= 1e-12;
    r.line("MPJPE oracle", pass, format!("{zero} / {five} / {avg} vs 0 / 5.0 / 2.5 (tol 1e-12)"));
}

fn determinism(r: &mut Report) {
    let mut samples = Vec::new();
    for seed in 0..4 {
        samples.extend(window(&synth_motion(MotionKind::Gait, 4, 24, seed, 25).unwrap(), 10, 10, 1));
    }
    let (train_set, val_set) = samples.split_at(15);
    let run = || {
        let config = ModelConfig::reference(4, 10, 10).unwrap().with_stable_init();
        let tc = TrainConfig { epochs: 3, batch_size: 4, seed: 9, ..Default::default() };
        let o = train(tc.initial_model(config).unwrap(), train_set, val_set, &tc).unwrap();
        let mut history = Vec::new();
        o.history.write_csv(&mut history).unwrap();
        let ckpt = Checkpoint { model: o.best, preprocessing: Preprocessing::default() }.to_bytes();
        (history, ckpt)
    };
    let (a, b) = (run(), run());
    r.line(
        "determinism",
        a == b,
        format!("two seeded runs: history {} bytes identical {}, checkpoint {} bytes identical {}", a.0.len(), a.0 == b.0, a.1.len(), a.1 == b.1),
    );
}

fn sweep_structure(r: &mut Report) {
    let mut samples = Vec::new();
    for seed in 0..3 {
        samples.extend(window(&synth_motion(MotionKind::Gait, 4, 24, seed, 25).unwrap(), 10, 10, 1));
    }
    let (train_set, val_set) = samples.split_at(10);
    let base = ModelConfig::reference(4, 10, 10).unwrap().with_stable_init();
    let tc = TrainConfig { epochs: 5, ..Default::default() };
    let rows = run_sweep(&base, &sweep_configs(), train_set, val_set, &tc, 2, |_| Ok(())).unwrap();
    let report = SweepReport { rows };
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let back = SweepReport::read_csv(csv.as_slice()).unwrap();
    let totals: Vec<usize> = back.rows.iter().map(|x| x.features).collect();
    let complete = back.rows.iter().all(|x| x.is_ok() && x.avg_train_loss.is_some() && x.avg_val_loss.is_some());
    let r360 = back.rows.iter().find(|x| x.features == 360).unwrap();
    let header = String::from_utf8_lossy(&csv).lines().next().unwrap().to_string();
    let pass = totals == SWEEP_TOTALS
        && complete
        && back == report
        && r360.reference_train_loss == Some(21.1)
        && r360.reference_val_loss == Some(18.6)
        && header.contains("avg_train_loss")
        && header.contains("avg_val_loss");
    r.line(
        "sweep report structure",
        pass,
        format!(
            "rows {totals:?} x (train, val) all present: {complete}; 360 annotated {:?}/{:?}; measured 360 train {:.2} val {:.2}",
            r360.reference_train_loss,
            r360.reference_val_loss,
            r360.avg_train_loss.unwrap_or(f64::NAN),
            r360.avg_val_loss.unwrap_or(f64::NAN)
        ),
    );
}

fn main() -> ExitCode {
    let mut r = Report { failed: Vec::new() };
    gradient_correctness(&mut r);
    feature_arithmetic(&mut r);
    zero_velocity_equivalence(&mut r);
    lr_schedule_values(&mut r);
    overfit_capacity(&mut r);
    gait_generalization(&mut r);
    mpjpe_oracle(&mut r);
    determinism(&mut r);
    sweep_structure(&mut r);
    if r.failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {:?}", r.failed);
        ExitCode::FAILURE
    }
}
