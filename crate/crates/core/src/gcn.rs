//! Graph convolution stack with a learnable adjacency per layer.
//!
//! Each layer computes `σ(A·H·W + b)` over `N` nodes, one node per joint
//! coordinate. Hidden layers use tanh; the last layer is linear and maps the
//! features to `T_f` future frames. The most recent observed value of each
//! node is added to every predicted frame, so a stack that outputs zero
//! predicts a frozen pose.
//!
//! Batches are laid out node-major: a batch of `B` samples is an `[N, B·F]`
//! matrix whose row `n` holds the features of node `n` for every sample in
//! turn. The same buffer read as `[N·B, F]` has one row per (node, sample),
//! so both `A·H` and `H·W` are plain matrix products.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LAYERS: usize = 12;
pub const ADJACENCY_INIT_BOUND: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcnConfig {
    pub num_layers: usize,
    pub node_count: usize,
    pub hidden_features: usize,
    pub output_features: usize,
    /// Multiplies the stack output before the last observed values are added.
    #[serde(default = "one")]
    pub output_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Starting point of the adjacency matrices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyInit {
    /// Every entry uniform in `±0.05`.
    #[default]
    Uniform,
    /// The identity plus uniform `±0.05` noise, so each node starts out
    /// mostly reading its own features.
    NearIdentity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnInit {
    pub adjacency: AdjacencyInit,
    /// Weights are uniform in `±gain/√F_in`.
    pub weight_gain: f64,
}

impl GcnInit {
    /// Near-identity adjacency and variance-preserving weights (`±√3/√F_in`).
    ///
    /// With the default init every layer scales its input by roughly
    /// `0.03·√N · 0.58`, so twelve layers shrink both the signal and the
    /// weight gradients by about 1e-14 and Adam cannot move them. This
    /// scheme keeps each layer's gain near one.
    pub fn stable() -> Self {
        Self {
            adjacency: AdjacencyInit::NearIdentity,
            weight_gain: 3f64.sqrt(),
        }
    }
}

impl Default for GcnInit {
    fn default() -> Self {
        Self {
            adjacency: AdjacencyInit::Uniform,
            weight_gain: 1.0,
        }
    }
}

impl GcnConfig {
    pub fn new(num_layers: usize, node_count: usize, hidden_features: usize, output_features: usize) -> Result<Self> {
        let c = Self {
            num_layers,
            node_count,
            hidden_features,
            output_features,
            output_scale: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Config("the graph stack needs at least one layer".into()));
        }
        if self.node_count == 0 || self.hidden_features == 0 || self.output_features == 0 {
            return Err(Error::Config("graph stack extents must be positive".into()));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::Config(format!("output scale must be positive, got {}", self.output_scale)));
        }
        Ok(())
    }

    /// `(F_in, F_out)` of layer `p`.
    pub fn layer_dims(&self, p: usize) -> (usize, usize) {
        let out = if p + 1 == self.num_layers {
            self.output_features
        } else {
            self.hidden_features
        };
        (self.hidden_features, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayerParams {
    pub adjacency: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct GcnLayerVars {
    pub adjacency: Var,
    pub weights: Var,
    pub bias: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    pub layers: Vec<GcnLayerParams>,
}

impl GcnParams {
    /// With the default [`GcnInit`]: adjacency uniform in `±0.05`, weights
    /// uniform in `±1/√F_in`, zero biases.
    pub fn init(config: &GcnConfig, init: &GcnInit, rng: &mut impl Rng) -> Self {
        let n = config.node_count;
        let layers = (0..config.num_layers)
            .map(|p| {
                let (fi, fo) = config.layer_dims(p);
                let mut adjacency = Tensor::uniform(vec![n, n], ADJACENCY_INIT_BOUND, rng);
                if init.adjacency == AdjacencyInit::NearIdentity {
                    for i in 0..n {
                        adjacency.data_mut()[i * n + i] += 1.0;
                    }
                }
                GcnLayerParams {
                    adjacency,
                    weights: Tensor::uniform(vec![fi, fo], init.weight_gain / (fi as f64).sqrt(), rng),
                    bias: Tensor::zeros(vec![fo]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(config: &GcnConfig) -> Self {
        let n = config.node_count;
        let layers = (0..config.num_layers)
            .map(|p| {
                let (fi, fo) = config.layer_dims(p);
                GcnLayerParams {
                    adjacency: Tensor::zeros(vec![n, n]),
                    weights: Tensor::zeros(vec![fi, fo]),
                    bias: Tensor::zeros(vec![fo]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn check(&self, config: &GcnConfig) -> Result<()> {
        let expected = Self::zeros(config);
        let ok = self.layers.len() == expected.layers.len()
            && self.tensors().zip(expected.tensors()).all(|(a, b)| a.shape() == b.shape());
        if ok {
            Ok(())
        } else {
            Err(Error::Config("graph stack parameters do not match the configuration".into()))
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.adjacency, &l.weights, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.adjacency, &mut l.weights, &mut l.bias])
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|p| {
                ["adjacency", "weights", "bias"].map(|k| format!("gcn.layer{p}.{k}"))
            })
            .collect()
    }

    pub fn register(&self, tape: &mut Tape) -> Vec<GcnLayerVars> {
        self.layers
            .iter()
            .map(|l| GcnLayerVars {
                adjacency: tape.leaf(l.adjacency.clone()),
                weights: tape.leaf(l.weights.clone()),
                bias: tape.leaf(l.bias.clone()),
            })
            .collect()
    }
}

pub fn layer_leaves(vars: &[GcnLayerVars]) -> Vec<Var> {
    vars.iter()
        .flat_map(|l| [l.adjacency, l.weights, l.bias])
        .collect()
}

/// One graph convolution `σ(A·H·W + b)` over a node-major batch
/// `h: [N, batch·F_in]`, returning `[N, batch·F_out]`.
pub fn gc_layer(
    tape: &mut Tape,
    h: Var,
    layer: &GcnLayerVars,
    activation: Activation,
    batch: usize,
) -> Result<Var> {
    let hs = tape.value(h).shape().to_vec();
    let ws = tape.value(layer.weights).shape().to_vec();
    let (f_in, f_out) = (ws[0], ws[1]);
    let n = hs[0];
    if hs.len() != 2 || hs[1] != batch * f_in {
        return Err(Error::shape("gc_layer", &hs, &ws));
    }
    let mixed = tape.matmul(layer.adjacency, h)?;
    let rows = tape.reshape(mixed, &[n * batch, f_in])?;
    let projected = tape.matmul(rows, layer.weights)?;
    let mut out = tape.add_row_bias(projected, layer.bias)?;
    if activation == Activation::Tanh {
        out = tape.tanh(out);
    }
    tape.reshape(out, &[n, batch * f_out])
}

/// Runs the stack on embeddings `e: [N, batch·F]` and adds the last observed
/// values `last: [N·batch]` (node-major) to every predicted frame.
///
/// Returns `[N·batch, T_f]` with one row per (node, sample).
pub fn gcn_forward(
    tape: &mut Tape,
    e: Var,
    last: Var,
    config: &GcnConfig,
    layers: &[GcnLayerVars],
    batch: usize,
) -> Result<Var> {
    let es = tape.value(e).shape().to_vec();
    let n = config.node_count;
    if es != [n, batch * config.hidden_features] {
        return Err(Error::shape("gcn_forward", &es, &[n, batch * config.hidden_features]));
    }
    let ls = tape.value(last).shape().to_vec();
    if ls != [n * batch] {
        return Err(Error::shape("gcn_forward", &es, &ls));
    }
    if layers.len() != config.num_layers {
        return Err(Error::Config(format!(
            "expected {} graph layers, got {}",
            config.num_layers,
            layers.len()
        )));
    }
    let mut h = e;
    for (p, layer) in layers.iter().enumerate() {
        let act = if p + 1 == layers.len() {
            Activation::None
        } else {
            Activation::Tanh
        };
        h = gc_layer(tape, h, layer, act, batch)?;
    }
    let mut out = tape.reshape(h, &[n * batch, config.output_features])?;
    if config.output_scale != 1.0 {
        out = tape.scale(out, config.output_scale);
    }
    tape.add_column(out, last)
}
