//! End-to-end optimization of the encoder and graph stack.

mod eval;
mod metrics;
mod optim;
mod sweep;

use std::io::{Read, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use eval::{evaluate, evaluate_predictions, horizon_frame, zero_velocity_baseline, EvalRow, EvalTable};
pub use metrics::{mpjpe, mpjpe_squared};
pub use optim::{lr_schedule, Adam, AdamState};
pub use sweep::{config_hash, run_sweep, SweepReport, SweepRow, TAIL_EPOCHS};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::model::{Batch, LossKind, Model, ModelConfig, ModelParams};

/// How parameters start out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Random,
    /// Every parameter zero: the untrained model is the zero-velocity baseline.
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub init: InitKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            decay_factor: 0.96,
            decay_every: 2,
            batch_size: 16,
            epochs: 50,
            seed: 0,
            loss: LossKind::Mpjpe,
            init: InitKind::Random,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay_factor must lie in (0, 1], got {}", self.decay_factor)));
        }
        if self.decay_every == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("decay_every, batch_size and epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_schedule(epoch, self.learning_rate, self.decay_factor, self.decay_every)
    }

    pub fn initial_model(&self, config: ModelConfig) -> Result<Model> {
        match self.init {
            InitKind::Random => Model::init(config, self.seed),
            InitKind::Zeros => Model::zeros(config),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub learning_rate: f64,
    /// Not part of the CSV, so that reruns produce identical files.
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.epochs {
            w.serialize(e).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("history", e))
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let epochs = r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_error)?;
        Ok(Self { epochs })
    }

    /// Mean of the last `n` epochs' training and validation losses.
    pub fn tail_means(&self, n: usize) -> (f64, Option<f64>) {
        let tail = &self.epochs[self.epochs.len().saturating_sub(n)..];
        let count = tail.len() as f64;
        let train = tail.iter().map(|e| e.train_loss).sum::<f64>() / count;
        let val = tail
            .iter()
            .map(|e| e.val_loss)
            .sum::<Option<f64>>()
            .map(|v| v / count);
        (train, val)
    }
}

pub fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub struct TrainOutcome {
    pub history: TrainHistory,
    /// Parameters of the epoch with the lowest validation loss (training
    /// loss when there is no validation set).
    pub best: Model,
    pub best_epoch: usize,
    pub last: Model,
}

/// Mean loss over `samples`, evaluated in chunks without gradients.
pub fn mean_loss(model: &Model, samples: &[SamplePair], kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(128) {
        let refs: Vec<&SamplePair> = chunk.iter().collect();
        let batch = Batch::new(&model.config, &refs)?;
        let mut pass = model.forward(&batch, None)?;
        let loss = model.loss(&mut pass, &batch, kind)?;
        total += pass.tape.value(loss).item().unwrap() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Trains `model` on shuffled mini-batches with Adam and the step-decay schedule.
pub fn train(mut model: Model, train_set: &[SamplePair], val_set: &[SamplePair], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        model.config.check_sample(s)?;
    }
    let mut adam = Adam::new(model.params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let start = Instant::now();

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&SamplePair> = idx.iter().map(|&i| &train_set[i]).collect();
            let batch = Batch::new(&model.config, &refs)?;
            let (loss, grads) = model.loss_and_grads(&batch, config.loss, None)?;
            if !loss.is_finite() || !grads.iter().all(|g| g.is_finite()) {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: bi,
                    loss,
                });
            }
            sum += loss * refs.len() as f64;
            adam.step(model.params.tensors_mut(), &grads, lr)?;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(mean_loss(&model, val_set, config.loss)?)
        };
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                batch: 0,
                loss: score,
            });
        }
        log::info!(
            "epoch {:>3}  lr {lr:.3e}  train {train_loss:.4}  val {}",
            epoch + 1,
            val_loss.map_or("-".into(), |v| format!("{v:.4}"))
        );
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch + 1, model.params.clone()));
        }
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            learning_rate: lr,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best: Model::new(model.config.clone(), best_params)?,
        best_epoch,
        last: model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 0.0005);
        assert_eq!(c.decay_factor, 0.96);
        assert_eq!(c.decay_every, 2);
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.epochs, 50);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { decay_factor: 1.5, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn history_csv_roundtrip() {
        let h = TrainHistory {
            epochs: vec![
                EpochRecord { epoch: 1, train_loss: 12.5, val_loss: Some(0.1 + 0.2), learning_rate: 0.0005, wall_seconds: 0.0 },
                EpochRecord { epoch: 2, train_loss: 1.0 / 3.0, val_loss: None, learning_rate: 0.00048, wall_seconds: 0.0 },
            ],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss,learning_rate\n"), "{text}");
        assert_eq!(TrainHistory::read_csv(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn tail_means_average_last_epochs() {
        let epochs = (1..=7)
            .map(|e| EpochRecord { epoch: e, train_loss: e as f64, val_loss: Some(2.0 * e as f64), learning_rate: 1.0, wall_seconds: 0.0 })
            .collect();
        let h = TrainHistory { epochs };
        assert_eq!(h.tail_means(5), (5.0, Some(10.0)));
        assert_eq!(h.tail_means(50), (4.0, Some(8.0)));
    }
}
