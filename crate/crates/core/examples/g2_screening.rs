//! Classifies synthetic autocorrelation traces of one to three emitters.
//!
//! ```text
//! cargo run --example g2_screening
//! ```

use pillarsim::analysis::g2::synthetic_trace;
use pillarsim::analysis::is_single_emitter;

fn main() -> pillarsim::Result<()> {
    for n in 1..=3 {
        let trace = synthetic_trace(n, 12.0, 150.0, 301);
        let v = is_single_emitter(&trace)?;
        println!(
            "{n} emitter(s): g2(0) = {:.3}, plateau {:.3} -> {}",
            v.g2_zero,
            v.plateau,
            if v.single { "single" } else { "not single" }
        );
    }
    Ok(())
}
