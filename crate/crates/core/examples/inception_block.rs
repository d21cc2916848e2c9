//! Inspect the inception residual block: per-branch feature counts, the
//! residual projection, and the feature-count presets.
//!
//! Run with `cargo run --example inception_block`.

use irb_motion::irb::{default_config, irb_forward, search_kernel_counts, sweep_configs, IrbParams};
use irb_motion::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> irb_motion::Result<()> {
    let config = default_config();
    println!("branch  window  kernels  size  features");
    for (i, b) in config.branches().iter().enumerate() {
        println!("{i:>6} {:>7} {:>8} {:>5} {:>9}", b.input_len, b.num_kernels, b.kernel_size, b.out_features());
    }
    println!("passthrough {} frames, residual {} size-1 kernels", config.passthrough_len(), config.residual_kernels());
    println!("total {}", config.total_features());

    let params = IrbParams::init(&config, &mut ChaCha8Rng::seed_from_u64(0));
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let trajectory: Vec<f64> = (0..10).map(|t| (t as f64 * 0.4).sin()).collect();
    let x = tape.leaf(Tensor::from_vec(trajectory)?);
    let embedding = irb_forward(&mut tape, x, &config, &vars)?;
    let e = tape.value(embedding);
    println!("embedding {:?}, first values {:.3?}", e.shape(), &e.data()[..4]);

    println!("\npresets:");
    for c in sweep_configs() {
        let counts: Vec<usize> = c.branches().iter().map(|b| b.num_kernels).collect();
        println!("{:>4} features  kernels {counts:?}", c.total_features());
    }
    println!("search for 250 features: {:?}", search_kernel_counts(250, 40));
    Ok(())
}
