//! Linear calibration of simulated efficiency against saturated count rates.
//!
//! ```text
//! cargo run --example calibration
//! ```

use pillarsim::analysis::{eta_vs_iinf_fit, CalibrationPoint};

fn main() -> pillarsim::Result<()> {
    // (I∞ kcts/s, η̄) for cylinders, cones and multicones
    let data = [(14.5, 0.12), (20.1, 0.18), (30.2, 0.25), (35.9, 0.31), (43.0, 0.36)];
    let points: Vec<CalibrationPoint> = data
        .iter()
        .map(|&(i, eta)| CalibrationPoint {
            eta_bar: eta,
            i_inf_kcts: i,
            sigma: None,
        })
        .collect();
    for with_intercept in [false, true] {
        let f = eta_vs_iinf_fit(&points, with_intercept)?;
        println!(
            "intercept {:5}: slope {:.3e} ± {:.1e} s/kct, intercept {:.4}, residual {:.4}",
            with_intercept,
            f.slope,
            f.slope_sigma.unwrap_or(f64::NAN),
            f.intercept,
            f.residual_norm
        );
    }
    Ok(())
}
