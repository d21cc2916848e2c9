//! Mean per-joint position error.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(pred: &Tensor, gt: &Tensor) -> Result<()> {
    if pred.shape() != gt.shape() || pred.shape().last() != Some(&3) {
        return Err(Error::shape("mpjpe", pred.shape(), gt.shape()));
    }
    Ok(())
}

/// Mean over frames and joints of `‖pred − gt‖₂`, in the input's units.
///
/// Both tensors are `[..., 3]`, typically `[T, K, 3]`.
pub fn mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check(pred, gt)?;
    let groups = pred.numel() / 3;
    let total: f64 = pred
        .data()
        .chunks(3)
        .zip(gt.data().chunks(3))
        .map(|(p, g)| joint_distance(p, g))
        .sum();
    Ok(total / groups as f64)
}

/// Like [`mpjpe`] but averaging squared distances.
pub fn mpjpe_squared(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check(pred, gt)?;
    let groups = pred.numel() / 3;
    let total: f64 = pred
        .data()
        .chunks(3)
        .zip(gt.data().chunks(3))
        .map(|(p, g)| joint_distance(p, g).powi(2))
        .sum();
    Ok(total / groups as f64)
}

pub(crate) fn joint_distance(p: &[f64], g: &[f64]) -> f64 {
    p.iter()
        .zip(g)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
