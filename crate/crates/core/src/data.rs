//! Pose sequences: CSV ingestion, windowing into training pairs, root
//! centering and synthetic skeleton motion.
//!
//! Pose CSV layout: a header `frame,j0_x,j0_y,j0_z,j1_x,...` followed by one
//! row per frame. Positions are millimeters, comma separated, unquoted.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_FRAME_RATE: u32 = 25;

/// Frames of `K` joints × 3 coordinates, stored flat as `[T][K][3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    positions: Vec<f64>,
    frame_count: usize,
    joint_count: usize,
    frame_rate: u32,
}

impl PoseSequence {
    pub fn new(positions: Vec<f64>, joint_count: usize, frame_rate: u32) -> Result<Self> {
        if joint_count == 0 {
            return Err(Error::InvalidTensor("a pose needs at least one joint".into()));
        }
        let width = joint_count * 3;
        if positions.is_empty() || positions.len() % width != 0 {
            return Err(Error::InvalidTensor(format!(
                "{} values do not form whole frames of {width}",
                positions.len()
            )));
        }
        if let Some(bad) = positions.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!("non-finite position {bad}")));
        }
        Ok(Self {
            frame_count: positions.len() / width,
            positions,
            joint_count,
            frame_rate,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn frame_rate(&self) -> u32 {
        self.frame_rate
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// The `K·3` values of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.joint_count * 3;
        &self.positions[t * w..(t + 1) * w]
    }

    pub fn joint(&self, t: usize, k: usize) -> [f64; 3] {
        let f = self.frame(t);
        [f[3 * k], f[3 * k + 1], f[3 * k + 2]]
    }

    /// Frames `start..start + len` as a `[len, K, 3]` tensor.
    pub fn slice(&self, start: usize, len: usize) -> Tensor {
        let w = self.joint_count * 3;
        Tensor::new(
            vec![len, self.joint_count, 3],
            self.positions[start * w..(start + len) * w].to_vec(),
        )
        .expect("slice inside the sequence")
    }

    pub fn from_tensor(frames: &Tensor, frame_rate: u32) -> Result<Self> {
        match frames.shape() {
            [_, k, 3] => Self::new(frames.data().to_vec(), *k, frame_rate),
            s => Err(Error::shape("PoseSequence::from_tensor", s, &[0, 0, 3])),
        }
    }
}

/// Consecutive observed and future frames cut from one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    /// `[T_N, K, 3]`
    pub past: Tensor,
    /// `[T_f, K, 3]`
    pub future: Tensor,
}

impl SamplePair {
    pub fn joint_count(&self) -> usize {
        self.past.shape()[1]
    }

    pub fn past_len(&self) -> usize {
        self.past.shape()[0]
    }

    pub fn future_len(&self) -> usize {
        self.future.shape()[0]
    }

    /// The most recent observed frame, `K·3` values.
    pub fn last_observed(&self) -> &[f64] {
        let w = self.joint_count() * 3;
        let d = self.past.data();
        &d[d.len() - w..]
    }
}

fn header_for(joints: usize) -> String {
    let mut h = String::from("frame");
    for k in 0..joints {
        for axis in ["x", "y", "z"] {
            let _ = write!(h, ",j{k}_{axis}");
        }
    }
    h
}

/// Parses pose CSV text; `origin` is only used in error messages.
pub fn parse_pose_csv(text: &str, origin: &Path, frame_rate: u32) -> Result<PoseSequence> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 4 || (columns.len() - 1) % 3 != 0 {
        return Err(err(1, format!("expected frame plus 3 columns per joint, got {} columns", columns.len())));
    }
    let joints = (columns.len() - 1) / 3;
    if header_for(joints).split(',').ne(columns.iter().copied()) {
        return Err(err(1, format!("malformed header, expected `{}`", header_for(joints))));
    }
    let mut positions = Vec::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(err(line, format!("expected {} cells, found {}", columns.len(), cells.len())));
        }
        u64::from_str(cells[0]).map_err(|_| err(line, format!("frame index `{}` is not an integer", cells[0])))?;
        for cell in &cells[1..] {
            let v = f64::from_str(cell).map_err(|_| err(line, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("`{cell}` is not finite")));
            }
            positions.push(v);
        }
    }
    if positions.is_empty() {
        return Err(err(2, "no frames".into()));
    }
    PoseSequence::new(positions, joints, frame_rate)
}

pub fn load_pose_csv(path: impl AsRef<Path>) -> Result<PoseSequence> {
    load_pose_csv_at(path, DEFAULT_FRAME_RATE)
}

pub fn load_pose_csv_at(path: impl AsRef<Path>, frame_rate: u32) -> Result<PoseSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose_csv(&text, path, frame_rate)
}

/// Renders a sequence as pose CSV, numbering frames from `first_frame`.
pub fn pose_csv_string(seq: &PoseSequence, first_frame: usize) -> String {
    let mut out = header_for(seq.joint_count);
    out.push('\n');
    for t in 0..seq.frame_count {
        let _ = write!(out, "{}", first_frame + t);
        for v in seq.frame(t) {
            // `{}` on f64 prints the shortest text that parses back to the same value
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_pose_csv(seq: &PoseSequence, path: impl AsRef<Path>) -> Result<()> {
    write_pose_csv_from(seq, path, 0)
}

pub fn write_pose_csv_from(seq: &PoseSequence, path: impl AsRef<Path>, first_frame: usize) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, pose_csv_string(seq, first_frame)).map_err(|e| Error::io(path, e))
}

/// Cuts `(past, future)` pairs of `past_len` and `future_len` frames every
/// `stride` frames. Sequences shorter than one pair yield nothing.
pub fn window(seq: &PoseSequence, past_len: usize, future_len: usize, stride: usize) -> Vec<SamplePair> {
    assert!(past_len > 0 && future_len > 0 && stride > 0, "window extents must be positive");
    let span = past_len + future_len;
    if seq.frame_count < span {
        log::warn!(
            "sequence of {} frames is shorter than one {past_len}+{future_len} window",
            seq.frame_count
        );
        return Vec::new();
    }
    (0..=seq.frame_count - span)
        .step_by(stride)
        .map(|start| SamplePair {
            past: seq.slice(start, past_len),
            future: seq.slice(start + past_len, future_len),
        })
        .collect()
}

/// Translates every frame so that `root_joint` sits at the origin.
pub fn center_root(seq: &PoseSequence, root_joint: usize) -> Result<PoseSequence> {
    if root_joint >= seq.joint_count {
        return Err(Error::Config(format!(
            "root joint {root_joint} outside {} joints",
            seq.joint_count
        )));
    }
    let w = seq.joint_count * 3;
    let mut positions = seq.positions.clone();
    for frame in positions.chunks_mut(w) {
        let root = [frame[3 * root_joint], frame[3 * root_joint + 1], frame[3 * root_joint + 2]];
        for joint in frame.chunks_mut(3) {
            for (v, r) in joint.iter_mut().zip(root) {
                *v -= r;
            }
        }
    }
    PoseSequence::new(positions, seq.joint_count, seq.frame_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    /// Every non-root joint swings on a shared period with left/right phase offsets.
    Gait,
    /// A single joint oscillates; the rest of the body is static.
    OneLimb,
    /// A static pose with bounded jitter.
    StillPlusNoise,
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gait" => Ok(Self::Gait),
            "one_limb" | "one-limb" => Ok(Self::OneLimb),
            "still_plus_noise" | "still-plus-noise" => Ok(Self::StillPlusNoise),
            other => Err(Error::Config(format!(
                "unknown motion kind `{other}` (expected gait, one_limb or still_plus_noise)"
            ))),
        }
    }
}

/// Peak jitter of [`MotionKind::StillPlusNoise`], millimeters.
pub const NOISE_AMPLITUDE_MM: f64 = 5.0;

/// Parameters drawn for a synthetic sequence; exposed so tests can check
/// periodicity and which joint moves.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub kind: MotionKind,
    pub period_frames: usize,
    pub moving_joint: usize,
    rest: Vec<f64>,
    amplitude: Vec<[f64; 3]>,
    phase: Vec<f64>,
}

impl SynthSpec {
    pub fn draw(kind: MotionKind, joints: usize, seed: u64) -> Result<Self> {
        if joints < 4 {
            return Err(Error::Config(format!("synthetic skeletons need at least 4 joints, got {joints}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // root at the origin, the others spread over a body-sized box
        let mut rest = vec![0.0; joints * 3];
        for v in &mut rest[3..] {
            *v = rng.random_range(-400.0..400.0);
        }
        let period_frames = rng.random_range(16..=32);
        let moving_joint = rng.random_range(1..joints);
        let mut amplitude = vec![[0.0; 3]; joints];
        let mut phase = vec![0.0; joints];
        for k in 1..joints {
            let side = if k % 2 == 0 { 0.0 } else { PI };
            phase[k] = side + rng.random_range(-0.3..0.3);
            amplitude[k] = [
                rng.random_range(40.0..120.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(10.0..40.0),
            ];
        }
        Ok(Self {
            kind,
            period_frames,
            moving_joint,
            rest,
            amplitude,
            phase,
        })
    }
}

/// Deterministic synthetic motion of `joints` joints over `frames` frames.
pub fn synth_motion(kind: MotionKind, joints: usize, frames: usize, seed: u64, frame_rate: u32) -> Result<PoseSequence> {
    let spec = SynthSpec::draw(kind, joints, seed)?;
    synth_from_spec(&spec, frames, seed, frame_rate)
}

pub fn synth_from_spec(spec: &SynthSpec, frames: usize, seed: u64, frame_rate: u32) -> Result<PoseSequence> {
    if frames == 0 {
        return Err(Error::Config("synthetic sequences need at least one frame".into()));
    }
    let joints = spec.rest.len() / 3;
    let omega = 2.0 * PI / spec.period_frames as f64;
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut positions = Vec::with_capacity(frames * joints * 3);
    for t in 0..frames {
        let theta = omega * t as f64;
        for k in 0..joints {
            let rest = &spec.rest[3 * k..3 * k + 3];
            let amp = spec.amplitude[k];
            let ph = spec.phase[k];
            let offset = match spec.kind {
                MotionKind::Gait if k > 0 => [
                    amp[0] * (theta + ph).sin(),
                    amp[1] * (theta + ph).sin(),
                    // vertical bob at twice the stride frequency keeps the period
                    amp[2] * (2.0 * (theta + ph)).sin(),
                ],
                MotionKind::OneLimb if k == spec.moving_joint => [
                    amp[0] * (theta + ph).sin(),
                    amp[1] * (theta + ph).cos(),
                    amp[2] * (theta + ph).cos(),
                ],
                MotionKind::StillPlusNoise => [(); 3].map(|_| noise.random_range(-NOISE_AMPLITUDE_MM..=NOISE_AMPLITUDE_MM)),
                _ => [0.0; 3],
            };
            positions.extend(rest.iter().zip(offset).map(|(r, o)| r + o));
        }
    }
    PoseSequence::new(positions, joints, frame_rate)
}
