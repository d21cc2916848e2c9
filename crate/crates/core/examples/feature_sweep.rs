//! Train one model per temporal-feature preset and print the table, with
//! the bundled reference numbers alongside.
//!
//! Run with `cargo run --release --example feature_sweep -- [epochs] [jobs]`.

use irb_motion::data::{synth_motion, window, MotionKind};
use irb_motion::irb::sweep_configs;
use irb_motion::model::ModelConfig;
use irb_motion::training::{run_sweep, SweepReport, TrainConfig};

fn main() -> irb_motion::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let epochs = args.next().flatten().unwrap_or(6);
    let jobs = args.next().flatten().unwrap_or(1);

    let mut samples = Vec::new();
    for seed in 0..5 {
        samples.extend(window(&synth_motion(MotionKind::Gait, 4, 30, seed, 25)?, 10, 10, 1));
    }
    let (train_set, val_set) = samples.split_at(44);
    let base = ModelConfig::reference(4, 10, 10)?.with_stable_init();
    let tc = TrainConfig { epochs, ..Default::default() };
    let rows = run_sweep(&base, &sweep_configs(), train_set, val_set, &tc, jobs, |row| {
        println!(
            "{:>4} features [{}]: train {:.2} val {:.2} (reference {:?} / {:?})",
            row.features,
            row.kernel_counts,
            row.avg_train_loss.unwrap_or(f64::NAN),
            row.avg_val_loss.unwrap_or(f64::NAN),
            row.reference_train_loss,
            row.reference_val_loss
        );
        Ok(())
    })?;
    SweepReport { rows }.write_csv(std::io::stdout())
}
