//! Simulates one pillar at the coarse tier and prints its collection figures.
//!
//! ```text
//! cargo run --release --example simulate_device -- cylinder 150 1
//! cargo run --release --example simulate_device -- cone 150 5
//! cargo run --release --example simulate_device -- multicone 150 5
//! ```

use pillarsim::device::{simulate_device, DeviceConfig, Tier};
use pillarsim::geometry::PillarGeometry;

fn main() -> pillarsim::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("cylinder");
    let r_top: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(150.0);
    let h_um: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let geom = match kind {
        "cylinder" => PillarGeometry::cylinder(r_top, h_um)?,
        "cone" => PillarGeometry::single_cone(r_top, h_um, 80.0)?,
        "multicone" => PillarGeometry::multicone(r_top, 0.5, 51.0, h_um - 0.5, 80.0)?,
        other => panic!("unknown geometry `{other}`"),
    };
    let cfg = DeviceConfig::new(geom, Tier::Coarse);
    let est = cfg.estimate()?;
    println!("grid {:?} ({} cells), ~{} steps per dipole", est.dims, est.cells, est.steps_estimate);
    let res = simulate_device(&cfg)?;
    let c = &res.collection;
    for (w, e) in c.wavelengths_nm.iter().zip(&c.eta) {
        println!("  {w:6.1} nm  eta = {e:.4}");
    }
    for r in &res.runs {
        println!("  dipole {:?}: {} steps, plane/source {:?}", r.orientation, r.steps, r.plane_fraction);
    }
    println!("eta_bar(NA={}) = {:.4}, NA_0.80 = {:.3}", c.na, c.eta_bar, c.na_080);
    Ok(())
}
