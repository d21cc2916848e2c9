//! The end-to-end predictor: one inception residual block per joint
//! coordinate, whose embeddings become the node features of the graph stack.
//!
//! All `K·3` coordinate trajectories share one set of block parameters.
//! Node `n` corresponds to joint `n / 3`, coordinate `n % 3`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Fault, Tape, Var};
use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, layer_leaves, GcnConfig, GcnInit, GcnParams};
use crate::irb::{irb_forward, IrbConfig, IrbParams};
use crate::tensor::Tensor;

/// Frames the loss is computed over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWindow {
    /// Only the `T_f` forecast frames; the head emits `T_f` frames.
    #[default]
    Future,
    /// Observed plus forecast frames; the head emits `T_N + T_f` frames.
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean Euclidean distance per joint per frame.
    #[default]
    Mpjpe,
    /// Mean squared Euclidean distance per joint per frame.
    SquaredMpjpe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub joints: usize,
    pub input_frames: usize,
    pub output_frames: usize,
    pub irb: IrbConfig,
    pub gcn_layers: usize,
    #[serde(default)]
    pub loss_window: LossWindow,
    #[serde(default)]
    pub gcn_init: GcnInit,
    /// Trajectories are multiplied by this before encoding and the stack
    /// output divided by it, so predictions stay in input units.
    #[serde(default = "one")]
    pub input_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Input scale used by [`ModelConfig::with_stable_init`].
pub const STABLE_INPUT_SCALE: f64 = 0.01;

impl ModelConfig {
    pub fn new(joints: usize, input_frames: usize, output_frames: usize, irb: IrbConfig, gcn_layers: usize) -> Result<Self> {
        let c = Self {
            joints,
            input_frames,
            output_frames,
            irb,
            gcn_layers,
            loss_window: LossWindow::Future,
            gcn_init: GcnInit::default(),
            input_scale: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    /// Default block and a 12-layer stack.
    pub fn reference(joints: usize, input_frames: usize, output_frames: usize) -> Result<Self> {
        Self::new(
            joints,
            input_frames,
            output_frames,
            IrbConfig::default_for(input_frames)?,
            crate::gcn::DEFAULT_LAYERS,
        )
    }

    /// [`GcnInit::stable`] with millimeter inputs scaled to decimeters; the
    /// setting that trains the twelve-layer stack at the default learning rate.
    pub fn with_stable_init(mut self) -> Self {
        self.gcn_init = GcnInit::stable();
        self.input_scale = STABLE_INPUT_SCALE;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.output_frames == 0 {
            return Err(Error::Config("joints and output frames must be positive".into()));
        }
        if self.irb.input_len() != self.input_frames {
            return Err(Error::Config(format!(
                "inception block expects {} frames but the model observes {}",
                self.irb.input_len(),
                self.input_frames
            )));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::Config(format!("input_scale must be positive, got {}", self.input_scale)));
        }
        if !(self.gcn_init.weight_gain >= 0.0 && self.gcn_init.weight_gain.is_finite()) {
            return Err(Error::Config(format!("weight_gain must be non-negative, got {}", self.gcn_init.weight_gain)));
        }
        self.gcn().validate()
    }

    pub fn node_count(&self) -> usize {
        self.joints * 3
    }

    /// Frames emitted by the output layer.
    pub fn head_frames(&self) -> usize {
        match self.loss_window {
            LossWindow::Future => self.output_frames,
            LossWindow::Full => self.input_frames + self.output_frames,
        }
    }

    pub fn gcn(&self) -> GcnConfig {
        GcnConfig {
            num_layers: self.gcn_layers,
            node_count: self.node_count(),
            hidden_features: self.irb.total_features(),
            output_features: self.head_frames(),
            output_scale: 1.0 / self.input_scale,
        }
    }

    pub fn check_sample(&self, s: &SamplePair) -> Result<()> {
        let expected = [self.input_frames, self.joints, 3];
        if s.past.shape() != expected {
            return Err(Error::shape("model input", s.past.shape(), &expected));
        }
        Ok(())
    }
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub irb: IrbParams,
    pub gcn: GcnParams,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let irb = IrbParams::init(&config.irb, &mut rng);
        let gcn = GcnParams::init(&config.gcn(), &config.gcn_init, &mut rng);
        Self { irb, gcn }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            irb: IrbParams::zeros(&config.irb),
            gcn: GcnParams::zeros(&config.gcn()),
        }
    }

    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        self.irb.check(&config.irb)?;
        self.gcn.check(&config.gcn())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.irb.tensors().chain(self.gcn.tensors())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.irb.tensors_mut().chain(self.gcn.tensors_mut())
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = self.irb.names();
        names.extend(self.gcn.names());
        names
    }

    pub fn count(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    /// Rebuilds parameters from tensors in [`Self::tensors`] order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let mut params = Self::zeros(config);
        let expected = params.tensors().count();
        if tensors.len() != expected {
            return Err(Error::Config(format!("expected {expected} parameter tensors, got {}", tensors.len())));
        }
        for (slot, t) in params.tensors_mut().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::shape("parameters", slot.shape(), t.shape()));
            }
            *slot = t;
        }
        Ok(params)
    }
}

/// Samples rearranged into the node-major layout the model consumes.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    /// `[N·B, T_N]`, row `n·B + b` is node `n` of sample `b`.
    pub trajectories: Tensor,
    /// `[N·B]`, last observed value per row.
    pub last: Tensor,
    /// `[B, head_frames, K, 3]`
    pub target: Tensor,
}

impl Batch {
    pub fn new(config: &ModelConfig, samples: &[&SamplePair]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let b = samples.len();
        let (t_n, k) = (config.input_frames, config.joints);
        let n_nodes = config.node_count();
        let mut traj = vec![0.0; n_nodes * b * t_n];
        let mut last = vec![0.0; n_nodes * b];
        let mut target = Vec::with_capacity(b * config.head_frames() * k * 3);
        for (bi, s) in samples.iter().enumerate() {
            config.check_sample(s)?;
            if s.future.shape() != [config.output_frames, k, 3] {
                return Err(Error::shape("model target", s.future.shape(), &[config.output_frames, k, 3]));
            }
            let past = s.past.data();
            for n in 0..n_nodes {
                let row = n * b + bi;
                for t in 0..t_n {
                    traj[row * t_n + t] = past[t * n_nodes + n];
                }
                last[row] = past[(t_n - 1) * n_nodes + n];
            }
            if config.loss_window == LossWindow::Full {
                target.extend_from_slice(past);
            }
            target.extend_from_slice(s.future.data());
        }
        Ok(Self {
            size: b,
            trajectories: Tensor::new(vec![n_nodes * b, t_n], traj)?,
            last: Tensor::new(vec![n_nodes * b], last)?,
            target: Tensor::new(vec![b, config.head_frames(), k, 3], target)?,
        })
    }
}

/// Configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// A recorded forward pass.
pub struct Pass {
    pub tape: Tape,
    /// Parameter leaves in [`ModelParams::tensors`] order.
    pub leaves: Vec<Var>,
    /// Trajectory leaf `[N·B, T_N]`.
    pub input: Var,
    /// Head output plus residual, `[N·B, head_frames]`.
    pub output: Var,
    /// Output rearranged to `[B, head_frames, K, 3]`.
    pub frames: Var,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Self { config, params })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed);
        Self::new(config, params)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::zeros(&config);
        Self::new(config, params)
    }

    pub fn forward(&self, batch: &Batch, fault: Option<Fault>) -> Result<Pass> {
        let mut tape = Tape::with_fault(fault);
        let irb_vars = self.params.irb.register(&mut tape);
        let gcn_vars = self.params.gcn.register(&mut tape);
        let mut leaves = irb_vars.leaves();
        leaves.extend(layer_leaves(&gcn_vars));

        let n = self.config.node_count();
        let b = batch.size;
        let features = self.config.irb.total_features();
        let input = tape.leaf(batch.trajectories.clone());
        let last = tape.leaf(batch.last.clone());
        let scaled = if self.config.input_scale == 1.0 {
            input
        } else {
            tape.scale(input, self.config.input_scale)
        };
        let emb = irb_forward(&mut tape, scaled, &self.config.irb, &irb_vars)?;
        let nodes = tape.reshape(emb, &[n, b * features])?;
        let output = gcn_forward(&mut tape, nodes, last, &self.config.gcn(), &gcn_vars, b)?;

        let h = self.config.head_frames();
        let k = self.config.joints;
        let mut idx = Vec::with_capacity(b * h * n);
        for bi in 0..b {
            for t in 0..h {
                for node in 0..n {
                    idx.push((node * b + bi) * h + t);
                }
            }
        }
        let frames = tape.gather(output, idx, &[b, h, k, 3])?;
        Ok(Pass {
            tape,
            leaves,
            input,
            output,
            frames,
        })
    }

    /// Records the loss of a batch on its forward pass.
    pub fn loss(&self, pass: &mut Pass, batch: &Batch, kind: LossKind) -> Result<Var> {
        let target = pass.tape.leaf(batch.target.clone());
        let diff = pass.tape.sub(pass.frames, target)?;
        Ok(pass.tape.mean_norm(diff, kind == LossKind::SquaredMpjpe))
    }

    /// Loss value and gradients for every parameter tensor.
    pub fn loss_and_grads(&self, batch: &Batch, kind: LossKind, fault: Option<Fault>) -> Result<(f64, Vec<Tensor>)> {
        let mut pass = self.forward(batch, fault)?;
        let loss = self.loss(&mut pass, batch, kind)?;
        let value = pass.tape.value(loss).item().expect("scalar loss");
        let grads = pass.tape.backward(loss, &pass.leaves)?;
        Ok((value, grads.into_grads()))
    }

    /// Forecast frames `[T_f, K, 3]` for each sample.
    pub fn predict(&self, samples: &[&SamplePair]) -> Result<Vec<Tensor>> {
        let batch = Batch::new_unlabeled(&self.config, samples)?;
        let pass = self.forward(&batch, None)?;
        let frames = pass.tape.value(pass.frames);
        let frame_len = self.config.joints * 3;
        let h = self.config.head_frames();
        let skip = h - self.config.output_frames;
        Ok((0..samples.len())
            .map(|bi| {
                let start = (bi * h + skip) * frame_len;
                let data = frames.data()[start..start + self.config.output_frames * frame_len].to_vec();
                Tensor::new(vec![self.config.output_frames, self.config.joints, 3], data).expect("frame shape")
            })
            .collect())
    }
}

impl Batch {
    /// A batch without ground truth; the target is filled with zeros.
    pub fn new_unlabeled(config: &ModelConfig, samples: &[&SamplePair]) -> Result<Self> {
        let padded: Vec<SamplePair> = samples
            .iter()
            .map(|s| SamplePair {
                past: s.past.clone(),
                future: Tensor::zeros(vec![config.output_frames, config.joints, 3]),
            })
            .collect();
        let refs: Vec<&SamplePair> = padded.iter().collect();
        Self::new(config, &refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_motion, window, MotionKind};
    use crate::irb::BranchSpec;

    fn tiny() -> ModelConfig {
        let irb = IrbConfig::new(4, vec![BranchSpec::new(3, 2, 2), BranchSpec::new(4, 1, 3)], 2).unwrap();
        ModelConfig::new(4, 4, 2, irb, 2).unwrap()
    }

    #[test]
    fn zero_model_repeats_last_pose() {
        let config = ModelConfig::reference(4, 10, 10).unwrap();
        let model = Model::zeros(config).unwrap();
        let seq = synth_motion(MotionKind::Gait, 4, 25, 2, 25).unwrap();
        let pairs = window(&seq, 10, 10, 3);
        let refs: Vec<&SamplePair> = pairs.iter().collect();
        let preds = model.predict(&refs).unwrap();
        for (p, s) in preds.iter().zip(&pairs) {
            for t in 0..10 {
                assert_eq!(&p.data()[t * 12..(t + 1) * 12], s.last_observed());
            }
        }
    }

    #[test]
    fn batching_matches_single_samples() {
        let config = tiny();
        let model = Model::init(config, 5).unwrap();
        let seq = synth_motion(MotionKind::Gait, 4, 12, 8, 25).unwrap();
        let pairs = window(&seq, 4, 2, 2);
        let all: Vec<&SamplePair> = pairs.iter().collect();
        let together = model.predict(&all).unwrap();
        for (i, p) in pairs.iter().enumerate() {
            let alone = model.predict(&[p]).unwrap();
            assert!(alone[0].max_abs_diff(&together[i]) < 1e-12);
        }
    }

    #[test]
    fn full_window_head_predicts_past_and_future() {
        let mut config = tiny();
        config.loss_window = LossWindow::Full;
        assert_eq!(config.gcn().output_features, 6);
        let model = Model::init(config, 1).unwrap();
        let seq = synth_motion(MotionKind::OneLimb, 4, 8, 3, 25).unwrap();
        let pairs = window(&seq, 4, 2, 1);
        let batch = Batch::new(&model.config, &[&pairs[0]]).unwrap();
        assert_eq!(batch.target.shape(), &[1, 6, 4, 3]);
        let preds = model.predict(&[&pairs[0]]).unwrap();
        assert_eq!(preds[0].shape(), &[2, 4, 3]);
    }

    #[test]
    fn rejects_mismatched_samples() {
        let model = Model::zeros(tiny()).unwrap();
        let seq = synth_motion(MotionKind::Gait, 5, 10, 3, 25).unwrap();
        let pairs = window(&seq, 4, 2, 1);
        assert!(model.predict(&[&pairs[0]]).is_err());
    }

    #[test]
    fn block_length_must_match_observation() {
        let irb = IrbConfig::default_for(10).unwrap();
        assert!(ModelConfig::new(4, 12, 10, irb, 2).is_err());
    }
}
