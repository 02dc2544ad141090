//! Radiated power of a point dipole in a vacuum box and of a 2D line
//! current, against their closed forms.
//!
//! ```text
//! cargo run --release --example dipole_benchmark
//! ```

use std::f64::consts::PI;

use pillarsim::fdtd::twod::{Grid2d, Polarization, Simulation2d};
use pillarsim::fdtd::{init_simulation, omega_of, DipoleSource, Pulse, StopCondition, C0, ETA0};
use pillarsim::geometry::PermittivityGrid;

const WAVELENGTHS: [f64; 4] = [650.0, 700.0, 750.0, 800.0];

fn main() -> pillarsim::Result<()> {
    let pulse = Pulse::covering(650.0, 800.0)?;

    let (cell, n) = (30.0, 48);
    let half = n as f64 * cell / 2.0;
    let grid = PermittivityGrid::uniform([n; 3], cell, [-half; 3], 1.0);
    let mut sim = init_simulation(&grid, 0.9, 10)?;
    sim.set_wavelengths(&WAVELENGTHS)?;
    sim.add_dipole(&DipoleSource::new([0.5 * cell, 0.0, 0.0], [1.0, 0.0, 0.0], pulse)?)?;
    let inner = sim.add_box_monitor_nm([-6.0 * cell; 3], [6.0 * cell; 3])?;
    let outer = sim.add_box_monitor_nm([-14.0 * cell; 3], [14.0 * cell; 3])?;
    let res = sim.run(&StopCondition::default())?;
    let (p_in, p_out) = (res.source_power(inner)?, res.source_power(outer)?);
    println!("3D dipole, {cell} nm cells, {} steps", res.steps);
    for (f, wl) in WAVELENGTHS.iter().enumerate() {
        let il = res.source_moments[0][f].norm();
        let k = omega_of(*wl) / C0;
        let exact = ETA0 * k * k * il * il / (12.0 * PI);
        println!(
            "  {wl} nm: box/exact {:.4}, outer/inner box {:.2e}",
            p_in[f] / exact,
            p_out[f] / p_in[f] - 1.0
        );
    }

    let g = Grid2d::centred([200, 200], 20.0, |_| 1.0);
    let mut sim = Simulation2d::new(&g, Polarization::Tm, 0.95, 12)?;
    sim.set_wavelengths(&WAVELENGTHS)?;
    sim.add_line_source([0.0, 0.0], [0.0, 0.0], pulse)?;
    let s = sim.node_at([0.0, 0.0])?;
    let contour = sim.add_contour_monitor([s[0] - 4, s[1] - 4], [s[0] + 4, s[1] + 4])?;
    let res = sim.run(&StopCondition::default())?;
    let p = res.source_power(contour)?;
    println!("2D TM line current, 20 nm cells, {} steps", res.steps);
    for (f, wl) in WAVELENGTHS.iter().enumerate() {
        let i = res.source_currents[0][f].norm();
        let exact = ETA0 * omega_of(*wl) / C0 * i * i / 8.0;
        println!("  {wl} nm: contour/exact {:.4}", p[f] / exact);
    }
    Ok(())
}
