use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{csv_error, train, TrainConfig};
use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::irb::IrbConfig;
use crate::model::ModelConfig;
use crate::reference::sweep_reference;

/// Number of final epochs averaged for the reported losses.
pub const TAIL_EPOCHS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub features: usize,
    /// Kernels per branch, `;`-separated.
    pub kernel_counts: String,
    pub config_hash: String,
    pub avg_train_loss: Option<f64>,
    pub avg_val_loss: Option<f64>,
    pub reference_train_loss: Option<f64>,
    pub reference_val_loss: Option<f64>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Short stable digest of everything that determines a run.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let json = serde_json::to_string(&(model, train)).expect("configs serialize");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

fn run_one(model: &ModelConfig, train_set: &[SamplePair], val_set: &[SamplePair], config: &TrainConfig) -> SweepRow {
    let features = model.irb.total_features();
    let reference = sweep_reference(features);
    let mut row = SweepRow {
        features,
        kernel_counts: model
            .irb
            .branches()
            .iter()
            .map(|b| b.num_kernels.to_string())
            .collect::<Vec<_>>()
            .join(";"),
        config_hash: config_hash(model, config),
        avg_train_loss: None,
        avg_val_loss: None,
        reference_train_loss: reference.map(|r| r.train_loss),
        reference_val_loss: reference.map(|r| r.val_loss),
        status: "ok".into(),
    };
    let outcome = config
        .initial_model(model.clone())
        .and_then(|m| train(m, train_set, val_set, config));
    match outcome {
        Ok(o) => {
            let (t, v) = o.history.tail_means(TAIL_EPOCHS);
            row.avg_train_loss = Some(t);
            row.avg_val_loss = v;
        }
        Err(e) => {
            log::warn!("sweep entry with {features} features failed: {e}");
            row.status = format!("failed: {e}");
        }
    }
    row
}

/// Trains one model per encoder configuration, `jobs` at a time.
///
/// `on_row` sees rows in configuration order as soon as each is known, so
/// callers can flush partial results. A failing entry is reported in its
/// row and does not stop the others.
pub fn run_sweep(
    base: &ModelConfig,
    encoders: &[IrbConfig],
    train_set: &[SamplePair],
    val_set: &[SamplePair],
    config: &TrainConfig,
    jobs: usize,
    mut on_row: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let models = encoders
        .iter()
        .map(|irb| {
            let mut m = base.clone();
            m.irb = irb.clone();
            m.validate().map(|_| m)
        })
        .collect::<Result<Vec<_>>>()?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let mut rows: Vec<Option<SweepRow>> = vec![None; models.len()];
    std::thread::scope(|s| -> Result<()> {
        for _ in 0..jobs.clamp(1, models.len().max(1)) {
            let tx = tx.clone();
            let (next, models) = (&next, &models);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(m) = models.get(i) else { break };
                if tx.send((i, run_one(m, train_set, val_set, config))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut emitted = 0;
        for (i, row) in rx {
            rows[i] = Some(row);
            while let Some(Some(r)) = rows.get(emitted) {
                on_row(r)?;
                emitted += 1;
            }
        }
        Ok(())
    })?;
    Ok(rows.into_iter().map(|r| r.expect("every entry reports")).collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("sweep report", e))
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_error)?;
        Ok(Self { rows })
    }
}
