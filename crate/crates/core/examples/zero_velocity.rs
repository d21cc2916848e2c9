//! With every parameter at zero the model repeats the last observed pose,
//! which makes it exactly the zero-velocity baseline.
//!
//! Run with `cargo run --example zero_velocity`.

use irb_motion::data::{synth_motion, window, MotionKind, SamplePair};
use irb_motion::model::{Model, ModelConfig};
use irb_motion::training::{evaluate, zero_velocity_baseline};

fn main() -> irb_motion::Result<()> {
    let seq = synth_motion(MotionKind::OneLimb, 6, 40, 3, 25)?;
    let samples = window(&seq, 10, 10, 1);
    let model = Model::zeros(ModelConfig::reference(6, 10, 10)?)?;

    let refs: Vec<&SamplePair> = samples.iter().collect();
    let preds = model.predict(&refs)?;
    let frozen = preds
        .iter()
        .zip(&samples)
        .all(|(p, s)| p.data().chunks(18).all(|frame| frame == s.last_observed()));
    println!("every forecast frame equals the last observed pose: {frozen}");

    let horizons = [80, 160, 320, 400];
    let table = evaluate(&model, &samples, &horizons, 25)?;
    let baseline = zero_velocity_baseline(&samples, &horizons, 25)?;
    for (row, b) in table.rows.iter().zip(baseline) {
        println!("{:>4} ms  model {:>8.3} mm  baseline {b:>8.3} mm", row.horizon_ms, row.mpjpe_mm);
    }
    Ok(())
}
