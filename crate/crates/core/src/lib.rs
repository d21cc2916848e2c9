//! Human motion prediction from 3-D joint positions.
//!
//! Each joint coordinate trajectory is encoded by an inception residual
//! block ([`irb`]), the embeddings become node features of a graph
//! convolution stack with learnable adjacency ([`gcn`]), and the stack's
//! output is added to the last observed pose. Everything runs on a small
//! reverse-mode differentiation tape ([`autodiff`]) over `f64` tensors.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod cli;
pub mod data;
pub mod error;
pub mod gcn;
pub mod gradcheck;
pub mod irb;
pub mod model;
pub mod reference;
pub mod tensor;
pub mod training;

pub use autodiff::{GradientStore, Tape, Var};
pub use error::{Error, Result};
pub use model::{Model, ModelConfig, ModelParams};
pub use tensor::Tensor;
