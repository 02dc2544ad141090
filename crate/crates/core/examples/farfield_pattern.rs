//! Collection curves of analytic far fields: an isotropic emitter and
//! dipoles along and across the collection axis.
//!
//! ```text
//! cargo run --example farfield_pattern
//! ```

use std::f64::consts::PI;

use pillarsim::collection::{na_080, CollectionResult, EmissionSpectrum};
use pillarsim::farfield::{AngularGrid, FarField, Hemisphere};

fn main() -> pillarsim::Result<()> {
    let band = [650.0, 800.0];
    let grid = AngularGrid::default();
    let spectrum = EmissionSpectrum::nv_default();
    let patterns: [(&str, fn([f64; 3]) -> f64); 3] = [
        ("isotropic", |_| 1.0 / (4.0 * PI)),
        ("axial dipole", |r| 3.0 / (8.0 * PI) * (1.0 - r[2] * r[2])),
        ("in-plane dipole", |r| 3.0 / (8.0 * PI) * (1.0 - r[0] * r[0])),
    ];
    for (name, f) in patterns {
        let fields: Vec<FarField> = [650.0, 700.0, 750.0, 800.0]
            .iter()
            .map(|&wl| FarField::from_fn(wl, 1.0, Hemisphere::Lower, &grid, f))
            .collect::<pillarsim::Result<_>>()?;
        // 1 W emitted in total, half of it into the collection hemisphere
        let res = CollectionResult::from_far_fields(&fields, &[1.0; 4], &spectrum, band, 0.75, name)?;
        println!(
            "{name:16} eta_bar(0.75) = {:.4}, hemisphere {:.4}, NA_0.80 = {:.4}",
            res.eta_bar,
            fields[0].total_flux(),
            na_080(&res.na_curve())?
        );
    }
    Ok(())
}
