use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::csv_error;
use super::metrics::joint_distance;
use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// One-based future frame index of a horizon, e.g. 80 ms → 2 at 25 fps.
pub fn horizon_frame(ms: u32, frame_rate: u32, output_frames: usize) -> Result<usize> {
    let scaled = u64::from(ms) * u64::from(frame_rate);
    if ms == 0 || scaled % 1000 != 0 {
        return Err(Error::Config(format!(
            "{ms} ms is not a whole number of frames at {frame_rate} fps"
        )));
    }
    let frame = (scaled / 1000) as usize;
    if frame > output_frames {
        return Err(Error::Config(format!(
            "{ms} ms is frame {frame}, beyond the {output_frames} predicted frames"
        )));
    }
    Ok(frame)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub horizon_ms: u32,
    pub frame: usize,
    pub mpjpe_mm: f64,
    pub zero_velocity_mm: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

impl EvalTable {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("evaluation", e))
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_error)?;
        Ok(Self { rows })
    }
}

/// Mean joint error at one future frame (zero-based), averaged over samples.
fn frame_error(preds: &[Tensor], samples: &[SamplePair], frame: usize) -> f64 {
    let total: f64 = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| {
            let w = s.joint_count() * 3;
            let pf = &p.data()[frame * w..(frame + 1) * w];
            let gf = &s.future.data()[frame * w..(frame + 1) * w];
            let sum: f64 = pf.chunks(3).zip(gf.chunks(3)).map(|(a, b)| joint_distance(a, b)).sum();
            sum / s.joint_count() as f64
        })
        .sum();
    total / samples.len() as f64
}

fn repeat_last(s: &SamplePair) -> Tensor {
    let frames = s.future_len();
    let data = s.last_observed().repeat(frames);
    Tensor::new(s.future.shape().to_vec(), data).expect("future shape")
}

/// Error of repeating the last observed frame, per horizon.
pub fn zero_velocity_baseline(samples: &[SamplePair], horizons_ms: &[u32], frame_rate: u32) -> Result<Vec<f64>> {
    let Some(first) = samples.first() else {
        return Err(Error::Config("no samples to evaluate".into()));
    };
    let preds: Vec<Tensor> = samples.iter().map(repeat_last).collect();
    horizons_ms
        .iter()
        .map(|&ms| Ok(frame_error(&preds, samples, horizon_frame(ms, frame_rate, first.future_len())? - 1)))
        .collect()
}

/// Per-horizon MPJPE of `model` on `samples`, next to the zero-velocity baseline.
pub fn evaluate(model: &Model, samples: &[SamplePair], horizons_ms: &[u32], frame_rate: u32) -> Result<EvalTable> {
    for s in samples {
        model.config.check_sample(s)?;
    }
    let mut preds = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(128) {
        let refs: Vec<&SamplePair> = chunk.iter().collect();
        preds.extend(model.predict(&refs)?);
    }
    evaluate_predictions(&preds, samples, horizons_ms, frame_rate)
}

/// Scores precomputed forecasts `[T_f, K, 3]`, one per sample.
pub fn evaluate_predictions(preds: &[Tensor], samples: &[SamplePair], horizons_ms: &[u32], frame_rate: u32) -> Result<EvalTable> {
    let Some(first) = samples.first() else {
        return Err(Error::Config("no samples to evaluate".into()));
    };
    if preds.len() != samples.len() {
        return Err(Error::Config(format!("{} predictions for {} samples", preds.len(), samples.len())));
    }
    for (p, s) in preds.iter().zip(samples) {
        if p.shape() != s.future.shape() || s.future.shape() != first.future.shape() {
            return Err(Error::shape("evaluate", p.shape(), s.future.shape()));
        }
    }
    let frames = horizons_ms
        .iter()
        .map(|&ms| horizon_frame(ms, frame_rate, first.future_len()))
        .collect::<Result<Vec<_>>>()?;
    let baseline = zero_velocity_baseline(samples, horizons_ms, frame_rate)?;
    let rows = horizons_ms
        .iter()
        .zip(frames)
        .zip(baseline)
        .map(|((&ms, frame), zv)| EvalRow {
            horizon_ms: ms,
            frame,
            mpjpe_mm: frame_error(preds, samples, frame - 1),
            zero_velocity_mm: zv,
            samples: samples.len(),
        })
        .collect();
    Ok(EvalTable { rows })
}
