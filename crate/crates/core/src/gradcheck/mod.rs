//! Central finite differences, the independent oracle for [`Tape::backward`].
//!
//! [`Tape::backward`]: crate::Tape::backward

mod suite;

pub use suite::{run_suite, CheckResult, CheckScale};

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error threshold a backward rule must stay under.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every element of every leaf.
pub fn finite_diff_gradient<F>(mut f: F, leaves: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work = leaves.to_vec();
    let mut out = Vec::with_capacity(leaves.len());
    for li in 0..leaves.len() {
        let mut grad = Tensor::zeros(leaves[li].shape().to_vec());
        for i in 0..leaves[li].numel() {
            grad.data_mut()[i] = central_diff(&mut f, &mut work, li, i, h)?;
        }
        out.push(grad);
    }
    Ok(out)
}

/// Finite differences at selected `(leaf, flat index)` coordinates only.
pub fn finite_diff_probe<F>(
    mut f: F,
    leaves: &[Tensor],
    coords: &[(usize, usize)],
    h: f64,
) -> Result<Vec<f64>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work = leaves.to_vec();
    coords
        .iter()
        .map(|&(li, i)| central_diff(&mut f, &mut work, li, i, h))
        .collect()
}

fn central_diff<F>(f: &mut F, work: &mut [Tensor], leaf: usize, i: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let x0 = work[leaf].data()[i];
    work[leaf].data_mut()[i] = x0 + h;
    let plus = f(work)?;
    work[leaf].data_mut()[i] = x0 - h;
    let minus = f(work)?;
    work[leaf].data_mut()[i] = x0;
    Ok((plus - minus) / (2.0 * h))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_all_ones() {
        let x = Tensor::new(vec![2, 2], vec![0.3, -0.1, 2.0, 5.0]).unwrap();
        let g = finite_diff_gradient(|l| Ok(l[0].data().iter().sum()), &[x], DEFAULT_STEP).unwrap();
        for v in g[0].data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        let g = finite_diff_gradient(
            |l| Ok(l[0].data().iter().map(|v| v * v).sum()),
            &[x],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!((g[0].data()[0] - 2.0).abs() < 1e-6);
        assert!((g[0].data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn probe_matches_full_gradient() {
        let x = Tensor::from_vec(vec![0.5, -0.25, 1.5]).unwrap();
        let f = |l: &[Tensor]| Ok(l[0].data().iter().map(|v| v.sin()).sum());
        let full = finite_diff_gradient(f, std::slice::from_ref(&x), DEFAULT_STEP).unwrap();
        let probe = finite_diff_probe(f, &[x], &[(0, 2), (0, 0)], DEFAULT_STEP).unwrap();
        assert_eq!(probe, vec![full[0].data()[2], full[0].data()[0]]);
    }

    #[test]
    fn relative_error_edges() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[3.0, 4.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
