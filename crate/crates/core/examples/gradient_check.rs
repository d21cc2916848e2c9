//! Compare every backward rule against central finite differences, then
//! show that a deliberately broken rule is caught.
//!
//! Run with `cargo run --release --example gradient_check`.

use irb_motion::autodiff::Fault;
use irb_motion::gradcheck::{run_suite, CheckScale, GRADCHECK_TOLERANCE};

fn main() -> irb_motion::Result<()> {
    for (label, fault) in [("intact", None), ("corrupted tanh", Some(Fault::TanhBackward))] {
        println!("== {label}");
        for r in run_suite(CheckScale::Tiny, fault, 0)? {
            let mark = if r.passed(GRADCHECK_TOLERANCE) { "ok" } else { "FAIL" };
            println!("{:<20} {:>10.2e} {mark}", r.name, r.max_rel_error);
        }
    }
    Ok(())
}
