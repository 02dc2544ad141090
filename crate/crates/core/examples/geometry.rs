//! Builds the three pillar families, prints their expansion factors and
//! writes a rasterised cross-section.
//!
//! ```text
//! cargo run --example geometry
//! ```

use pillarsim::geometry::{critical_angle_deg, rasterize, rmid_from_angle, PillarGeometry};

fn main() -> pillarsim::Result<()> {
    let pillars = [
        ("cylinder", PillarGeometry::cylinder(150.0, 1.0)?),
        ("cone 1 µm", PillarGeometry::single_cone(150.0, 1.0, 80.0)?),
        ("cone 5 µm", PillarGeometry::single_cone(150.0, 5.0, 80.0)?),
        ("multicone", PillarGeometry::multicone(150.0, 0.5, 51.0, 4.5, 80.0)?),
    ];
    for (name, g) in &pillars {
        println!(
            "{name:10} H = {:.1} µm, R_base = {:7.1} nm, R_mid = {:>7}, Δ = {:.3}",
            g.total_height_nm() / 1000.0,
            g.base_radius_nm(),
            g.mid_radius_nm().map_or("-".into(), |r| format!("{r:.1}")),
            g.expansion_factor()
        );
    }
    println!("R_mid for φ = 51°: {:.1} nm", rmid_from_angle(150.0, 0.5, 51.0)?);
    println!("diamond/air critical angle: {:.2}°", critical_angle_deg(2.4, 1.0)?);

    let grid = rasterize(&pillars[1].1, 20.0)?;
    let dims = grid.dims();
    println!("cone 1 µm on 20 nm cells: grid {:?}", dims);
    let mid = dims[1] / 2;
    // one character per cell of the x-z mid-plane, top of the domain first
    for k in (0..dims[2]).rev().step_by(4) {
        let row: String = (0..dims[0])
            .map(|i| {
                let e = grid.get(i, mid, k);
                if e > 3.0 { '#' } else if e > 1.0 { '+' } else { '.' }
            })
            .collect();
        println!("{row}");
    }
    Ok(())
}
