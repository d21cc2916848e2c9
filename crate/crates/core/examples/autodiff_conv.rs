//! Record a tiny computation on the tape and read its gradients back.
//!
//! Run with `cargo run --example autodiff_conv`.

use irb_motion::{Tape, Tensor};

fn main() -> irb_motion::Result<()> {
    let mut tape = Tape::new();

    // a 4-frame signal through one identity kernel and one differencing kernel
    let signal = tape.leaf(Tensor::from_vec(vec![1.0, 3.0, 6.0, 10.0])?);
    let kernels = tape.leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 1.0]])?);
    let bias = tape.leaf(Tensor::zeros(vec![2]));
    let features = tape.conv1d_valid(signal, kernels, bias)?;
    println!("conv output {:?}: {:?}", tape.value(features).shape(), tape.value(features).data());

    let squashed = tape.tanh(features);
    let loss = tape.sum_all(squashed);
    println!("loss = {:.6}", tape.value(loss).item().unwrap());

    let grads = tape.backward(loss, &[signal, kernels, bias])?;
    for (name, var) in [("signal", signal), ("kernels", kernels), ("bias", bias)] {
        println!("d loss / d {name:<8} {:?}", grads.get(var).unwrap().data());
    }
    Ok(())
}
