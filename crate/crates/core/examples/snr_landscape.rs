//! Spin-readout SNR at the reference operating point, the photon numbers
//! needed for other SNR values, and a coarse landscape.
//!
//! ```text
//! cargo run --example snr_landscape
//! ```

use pillarsim::analysis::snr::log_space;
use pillarsim::analysis::{alpha0_for_snr, scale_alpha0, snr, snr_landscape};

fn main() -> pillarsim::Result<()> {
    let (alpha0, contrast) = (0.154, 0.347);
    println!("SNR(α₀ = {alpha0}, C = {contrast}) = {:.4}", snr(alpha0, contrast)?);
    for target in [0.064, 0.073, 0.095] {
        let a = alpha0_for_snr(target, contrast)?;
        println!("SNR {target}: α₀ = {a:.4}, count-rate ratio {:.3}", a / alpha0);
    }
    // a device collecting twice as many photons
    let doubled = scale_alpha0(alpha0, 2.0)?;
    println!("α₀ × 2 → SNR {:.4}", snr(doubled, contrast)?);

    let alphas = log_space(0.01, 1.0, 5);
    let grid = snr_landscape(&alphas, &[0.1, 0.2, 0.3, 0.4])?;
    print!("   C \\ α₀");
    for a in &alphas {
        print!("{a:8.3}");
    }
    println!();
    for (c, row) in grid.contrast.iter().zip(&grid.snr) {
        print!("{c:9.2}");
        for s in row {
            print!("{s:8.4}");
        }
        println!();
    }
    Ok(())
}
