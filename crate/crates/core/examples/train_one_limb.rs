//! Train on synthetic single-limb motion, save a checkpoint, reload it and
//! forecast.
//!
//! Run with `cargo run --release --example train_one_limb -- [epochs]`.

use irb_motion::checkpoint::{Checkpoint, Preprocessing};
use irb_motion::data::{synth_motion, window, MotionKind, SamplePair};
use irb_motion::model::{LossKind, Model, ModelConfig};
use irb_motion::training::{mean_loss, train, TrainConfig};

fn main() -> irb_motion::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);

    let mut samples = Vec::new();
    for seed in 0..16 {
        samples.extend(window(&synth_motion(MotionKind::OneLimb, 4, 40, seed, 25)?, 10, 10, 1));
    }
    let config = ModelConfig::reference(4, 10, 10)?.with_stable_init();
    let train_config = TrainConfig { epochs, ..Default::default() };
    let outcome = train(train_config.initial_model(config.clone())?, &samples, &[], &train_config)?;

    let baseline = mean_loss(&Model::zeros(config)?, &samples, LossKind::Mpjpe)?;
    let fitted = mean_loss(&outcome.last, &samples, LossKind::Mpjpe)?;
    println!("zero-velocity {baseline:.2} mm, trained {fitted:.2} mm after {epochs} epochs");

    let path = std::env::temp_dir().join("one_limb.ckpt");
    Checkpoint { model: outcome.last, preprocessing: Preprocessing::default() }.save(&path)?;
    let restored = Checkpoint::load(&path)?;
    let sample: &SamplePair = &samples[0];
    let forecast = restored.model.predict(&[sample])?.remove(0);
    println!("checkpoint {} reloaded; first forecast frame {:.1?}", path.display(), &forecast.data()[..12]);
    println!("ground truth                     {:.1?}", &sample.future.data()[..12]);
    Ok(())
}
