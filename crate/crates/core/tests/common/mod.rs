#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use pillarsim::fdtd::twod::{Grid2d, Polarization, Simulation2d};
use pillarsim::fdtd::{
    init_simulation, omega_of, Boundary, DipoleSource, FaceSpectrum, MonitorResults, Pulse,
    SampleSet, Simulation, SolverOptions, StopCondition, SurfaceKind, SurfaceSpectrum, C0, ETA0,
};
use pillarsim::device::{SolverSettings, Tier};
use pillarsim::geometry::PermittivityGrid;
use pillarsim::sweep::SweepPlan;

pub const BAND: [f64; 2] = [650.0, 800.0];
pub const WAVELENGTHS: [f64; 4] = [650.0, 700.0, 750.0, 800.0];

/// Radiated power of a Hertzian dipole with current moment `il` in a medium of index `n`.
pub fn hertzian_power(il: f64, wavelength_nm: f64, n: f64) -> f64 {
    let k = n * omega_of(wavelength_nm) / C0;
    (ETA0 / n) * k * k * il * il / (12.0 * PI)
}

/// Radiated power per unit length of a TM line current in vacuum.
pub fn line_current_power(i: f64, wavelength_nm: f64) -> f64 {
    ETA0 * omega_of(wavelength_nm) / C0 * i * i / 8.0
}

/// Dipole at the centre of a homogeneous cube with box monitors at ±6 and ±14 cells.
pub fn run_box(
    n_index: f64,
    cell_nm: f64,
    cells: usize,
    orientation: [f64; 3],
    amp: f64,
) -> MonitorResults {
    let half = cells as f64 * cell_nm / 2.0;
    let grid = PermittivityGrid::uniform([cells; 3], cell_nm, [-half; 3], n_index * n_index);
    let mut sim = init_simulation(&grid, 0.9, 10).unwrap();
    sim.set_wavelengths(&WAVELENGTHS).unwrap();
    let pulse = Pulse::covering(BAND[0], BAND[1]).unwrap().with_amplitude(amp);
    // half a cell off the lattice puts the source on an Ex or Ey node
    let pos = [0.5 * cell_nm, 0.0, 0.0];
    let pos = if orientation[1] != 0.0 { [0.0, 0.5 * cell_nm, 0.0] } else { pos };
    sim.add_dipole(&DipoleSource::new(pos, orientation, pulse).unwrap())
        .unwrap();
    let c = cell_nm;
    sim.add_box_monitor_nm([-6.0 * c; 3], [6.0 * c; 3]).unwrap();
    sim.add_box_monitor_nm([-14.0 * c; 3], [14.0 * c; 3]).unwrap();
    sim.run(&StopCondition::default()).unwrap()
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn pml_trace(nz: usize, src_k: usize, probe_k: usize, steps: usize) -> (Vec<f64>, f64) {
    let dx = 10.0;
    let grid = PermittivityGrid::uniform([1, 1, nz], dx, [0.0; 3], 1.0);
    let opts = SolverOptions {
        courant_factor: 0.95,
        boundaries: [Boundary::Periodic, Boundary::Periodic, Boundary::Pml],
        ..Default::default()
    };
    let mut sim = Simulation::new(&grid, &opts).unwrap();
    sim.set_wavelengths(&WAVELENGTHS).unwrap();
    let pulse = Pulse::covering(BAND[0], BAND[1]).unwrap();
    let pos = [0.5 * dx, 0.0, src_k as f64 * dx];
    sim.add_dipole(&DipoleSource::new(pos, [1.0, 0.0, 0.0], pulse).unwrap())
        .unwrap();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        sim.step();
        out.push(sim.e_field(0)[probe_k] as f64);
    }
    (out, sim.dt())
}

/// Amplitude reflection of a normally incident plane wave from the 10-cell
/// CPML, per wavelength. A periodic 1×1 column carries the plane wave; the
/// reflected part is the probe signal minus that of a column long enough
/// that nothing returns within the recording window.
pub fn pml_reflection(wavelengths_nm: &[f64]) -> Vec<f64> {
    let (nz, src, probe, steps, ext) = (120, 60, 80, 4700, 1400);
    let (a, dt) = pml_trace(nz, src, probe, steps);
    let (b, _) = pml_trace(nz + 2 * ext, src + ext, probe + ext, steps);
    let dft = |x: &[f64], wl: f64| -> f64 {
        let w = omega_of(wl);
        x.iter()
            .enumerate()
            .map(|(n, v)| Complex64::from_polar(*v, -w * (n as f64 + 1.0) * dt))
            .sum::<Complex64>()
            .norm()
    };
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    wavelengths_nm.iter().map(|&wl| dft(&diff, wl) / dft(&b, wl)).collect()
}

/// Fraction of a TM line source's power crossing a horizontal line 20 nm
/// above `y = 0`, for a source `depth_nm` below it in diamond (`n = 2.4`).
/// With `interface` the upper half plane is air, otherwise diamond. The line
/// spans `x` in [−2560, 2550] nm.
pub fn escape_fraction(interface: bool, depth_nm: f64) -> Vec<f64> {
    let dims = [540, 220];
    let n2 = 2.4f64 * 2.4;
    let g = Grid2d::from_fn(dims, 10.0, [-2700.0, -1600.0], |p| {
        if !interface || p[1] < 0.0 {
            n2
        } else {
            1.0
        }
    });
    let mut sim = Simulation2d::new(&g, Polarization::Tm, 0.95, 12).unwrap();
    sim.set_wavelengths(&WAVELENGTHS).unwrap();
    let pulse = Pulse::covering(BAND[0], BAND[1]).unwrap();
    sim.add_line_source([0.0, -depth_nm], [0.0, 0.0], pulse).unwrap();
    let s = sim.node_at([0.0, -depth_nm]).unwrap();
    let contour = sim
        .add_contour_monitor([s[0] - 3, s[1] - 3], [s[0] + 3, s[1] + 3])
        .unwrap();
    let top = sim.node_at([0.0, 20.0]).unwrap()[1];
    let line = sim.add_line_monitor(1, top, 14, dims[0] - 15, true).unwrap();
    let stop = StopCondition {
        decay_threshold: 1e-6,
        max_steps: 200_000,
    };
    let r = sim.run(&stop).unwrap();
    let p = r.source_power(contour).unwrap();
    r.fluxes(line).iter().zip(&p).map(|(f, p)| f / p).collect()
}

/// Ray-optic escape fraction of an isotropic line source through a planar
/// interface into air: `(1/2π) ∫ T_s(θ) dθ` over `|θ| < θc`.
pub fn ray_escape_fraction(n: f64) -> f64 {
    let tc = (1.0 / n).asin();
    let steps = 20_000;
    let h = 2.0 * tc / steps as f64;
    let t_s = |ti: f64| {
        let st = n * ti.sin();
        if st >= 1.0 {
            return 0.0;
        }
        let (ci, ct) = (ti.cos(), (1.0 - st * st).sqrt());
        let r = (n * ci - ct) / (n * ci + ct);
        1.0 - r * r
    };
    // midpoint rule
    (0..steps)
        .map(|i| t_s(-tc + (i as f64 + 0.5) * h) * h)
        .sum::<f64>()
        / (2.0 * PI)
}

/// Share of an isotropic line source's power crossing the escape line in a
/// homogeneous medium.
pub fn geometric_fraction(depth_nm: f64) -> f64 {
    let h = depth_nm + 20.0;
    ((2560.0 / h).atan() + (2550.0 / h).atan()) / (2.0 * PI)
}

/// Downward-propagating x-polarised Gaussian beam with waist `w0_nm` sampled
/// on a z-plane in air, with the analytic plane flux.
pub fn gaussian_beam_plane(wavelength_nm: f64, w0_nm: f64, pitch_nm: f64) -> (SurfaceSpectrum, f64) {
    let half = (4.0 * w0_nm / pitch_nm).ceil() as i64;
    let coords: Vec<f64> = (-half..=half).map(|i| i as f64 * pitch_nm * 1e-9).collect();
    let w = vec![pitch_nm * 1e-9; coords.len()];
    let w0 = w0_nm * 1e-9;
    let mut a = SampleSet::zeros(coords.clone(), coords.clone(), w.clone(), w.clone(), 1);
    let nu = coords.len();
    for (iv, y) in coords.iter().enumerate() {
        for (iu, x) in coords.iter().enumerate() {
            let ex = (-(x * x + y * y) / (w0 * w0)).exp();
            let p = iv * nu + iu;
            a.e[p] = Complex64::new(ex, 0.0);
            // H = (−ẑ × x̂) E / η₀ = −ŷ E / η₀
            a.h[p] = Complex64::new(-ex / ETA0, 0.0);
        }
    }
    let b = SampleSet::zeros(coords.clone(), coords, w.clone(), w, 1);
    let face = FaceSpectrum {
        axis: 2,
        outward: -1.0,
        plane_m: 0.0,
        medium_index: Some(1.0),
        n_freq: 1,
        a,
        b,
    };
    let zero = vec![Complex64::new(0.0, 0.0)];
    let surface = SurfaceSpectrum {
        kind: SurfaceKind::Plane,
        wavelengths_nm: vec![wavelength_nm],
        faces: vec![face],
        touches_pml: false,
        probe: std::array::from_fn(|_| zero.clone()),
    };
    let exact = PI * w0 * w0 / 4.0 / ETA0;
    (surface, exact)
}

/// Relative error of the 2D TM line-source power against the closed form,
/// per wavelength, on a 4 µm vacuum square.
pub fn line_source_power_errors(cell_nm: f64) -> Vec<f64> {
    let n = (4000.0 / cell_nm) as usize;
    let g = Grid2d::centred([n, n], cell_nm, |_| 1.0);
    let mut sim = Simulation2d::new(&g, Polarization::Tm, 0.95, 12).unwrap();
    sim.set_wavelengths(&WAVELENGTHS).unwrap();
    let pulse = Pulse::covering(BAND[0], BAND[1]).unwrap();
    sim.add_line_source([0.0, 0.0], [0.0, 0.0], pulse).unwrap();
    let s = sim.node_at([0.0, 0.0]).unwrap();
    let m = sim
        .add_contour_monitor([s[0] - 4, s[1] - 4], [s[0] + 4, s[1] + 4])
        .unwrap();
    let r = sim.run(&StopCondition::default()).unwrap();
    let p = r.source_power(m).unwrap();
    (0..WAVELENGTHS.len())
        .map(|f| p[f] / line_current_power(r.source_currents[0][f].norm(), WAVELENGTHS[f]) - 1.0)
        .collect()
}

/// Two short cylinders on a 40 nm grid; cheap enough for store tests that
/// need real simulations.
pub fn tiny_sweep_plan() -> SweepPlan {
    let mut solver = SolverSettings::for_tier(Tier::Coarse);
    solver.cell_nm = 40.0;
    solver.lateral_margin_nm = 200.0;
    solver.air_above_nm = 120.0;
    solver.gap_below_nm = 80.0;
    solver.substrate_um = 0.2;
    SweepPlan::from_json(
        &serde_json::json!({
            "name": "tiny",
            "family": "cylinder",
            "base": { "r_top_nm": 100.0, "h_um": 0.3, "d_nm": 100.0 },
            "axes": { "h_um": [0.3, 0.4] },
            "solver": solver,
            "wavelength_samples": 3,
        })
        .to_string(),
    )
    .unwrap()
}

/// Store contents keyed by relative path, with wall-clock timestamps removed
/// from records.
pub fn store_fingerprint(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&p).unwrap();
            if rel.starts_with("records") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                let prov = v["provenance"].as_object_mut().unwrap();
                prov.remove("started_unix_s");
                prov.remove("finished_unix_s");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(rel, bytes);
        }
    }
    out
}
