//! Generate synthetic motion, remove the root translation, cut training
//! windows and write the sequence as pose CSV.
//!
//! Run with `cargo run --example synth_windows -- /tmp/gait.csv`.

use irb_motion::data::{center_root, load_pose_csv, synth_motion, window, write_pose_csv, MotionKind, SynthSpec};

fn main() -> irb_motion::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "gait.csv".into());
    for kind in [MotionKind::Gait, MotionKind::OneLimb, MotionKind::StillPlusNoise] {
        let spec = SynthSpec::draw(kind, 8, 42)?;
        println!("{kind:?}: period {} frames, moving joint {}", spec.period_frames, spec.moving_joint);
    }

    let seq = synth_motion(MotionKind::Gait, 8, 60, 42, 25)?;
    let centered = center_root(&seq, 0)?;
    println!("frame 5 root after centering: {:?}", centered.joint(5, 0));

    for (past, future, stride) in [(10, 10, 1), (10, 25, 1), (10, 10, 5)] {
        let pairs = window(&centered, past, future, stride);
        println!("{past}+{future} frames, stride {stride}: {} windows", pairs.len());
    }

    write_pose_csv(&seq, &out)?;
    let back = load_pose_csv(&out)?;
    println!("wrote {out}: {} frames x {} joints, round trip exact: {}", back.frame_count(), back.joint_count(), back == seq);
    Ok(())
}
