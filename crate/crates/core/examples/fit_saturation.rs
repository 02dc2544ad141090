//! Fits the saturation model to noisy synthetic data and checks the quoted
//! uncertainties with a Monte-Carlo coverage run.
//!
//! ```text
//! cargo run --release --example fit_saturation
//! ```

use pillarsim::analysis::saturation::{monte_carlo_coverage, power_ramp};
use pillarsim::analysis::{fit_saturation, saturation_model, SaturationData};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> pillarsim::Result<()> {
    let truth = [1464.9, 59.0, 0.4];
    let powers = power_ramp(400.0, 20);
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let pairs: Vec<(f64, f64)> = powers
        .iter()
        .map(|&p| {
            let clean = saturation_model(p, truth[0], truth[1], truth[2]);
            let z: f64 = StandardNormal.sample(&mut rng);
            (p, clean * (1.0 + 0.01 * z))
        })
        .collect();
    let fit = fit_saturation(&SaturationData::from_pairs(&pairs)?)?;
    println!("I_inf = {:.1} ± {:.1} kcts/s (truth {})", fit.i_inf, fit.sigma_i_inf, truth[0]);
    println!("P_sat = {:.2} ± {:.2} µW (truth {})", fit.p_sat, fit.sigma_p_sat, truth[1]);
    println!("c_bg  = {:.3} ± {:.3} kcts/s/µW (truth {})", fit.c_bg, fit.sigma_c_bg, truth[2]);
    println!("{} evaluations, residual norm {:.2}", fit.evaluations, fit.residual_norm);

    let cov = monte_carlo_coverage(truth, &powers, 0.01, 200, 3.0, 2)?;
    println!(
        "3σ coverage of I_inf: {}/{} ({:.1}%), mean fitted I_inf {:.1}",
        cov.covered,
        cov.trials,
        100.0 * cov.fraction(),
        cov.mean_i_inf
    );
    Ok(())
}
