//! Train on synthetic gait, then report MPJPE per horizon on held-out
//! sequences next to the zero-velocity baseline.
//!
//! Run with `cargo run --release --example evaluate_horizons`.

use irb_motion::data::{center_root, synth_motion, window, MotionKind};
use irb_motion::model::ModelConfig;
use irb_motion::training::{evaluate, train, TrainConfig};

fn main() -> irb_motion::Result<()> {
    let (mut train_set, mut test_set) = (Vec::new(), Vec::new());
    for i in 0..12u64 {
        let seq = center_root(&synth_motion(MotionKind::Gait, 4, 50, 100 + i, 25)?, 0)?;
        let pairs = window(&seq, 10, 10, 1);
        if i < 10 { train_set.extend(pairs) } else { test_set.extend(pairs) }
    }
    let config = ModelConfig::reference(4, 10, 10)?.with_stable_init();
    let tc = TrainConfig { epochs: 15, ..Default::default() };
    let outcome = train(tc.initial_model(config)?, &train_set, &test_set, &tc)?;

    let table = evaluate(&outcome.best, &test_set, &[80, 160, 320, 400], 25)?;
    println!("{:>6} {:>6} {:>10} {:>14}", "ms", "frame", "model mm", "zero-vel mm");
    for r in &table.rows {
        println!("{:>6} {:>6} {:>10.2} {:>14.2}", r.horizon_ms, r.frame, r.mpjpe_mm, r.zero_velocity_mm);
    }
    table.write_csv(std::io::stdout())
}
