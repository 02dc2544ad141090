//! Yee-lattice FDTD solver.
//!
//! Fields are stored in normalised form: `E` in V/m and `H̃ = η₀·H`, so both
//! curl updates carry the same Courant number `S = c₀·dt/dx`. Node `(i, j, k)`
//! is the lower corner of permittivity cell `(i, j, k)`; components sit at
//!
//! ```text
//! Ex (i+½, j, k)   Hx (i, j+½, k+½)
//! Ey (i, j+½, k)   Hy (i+½, j, k+½)
//! Ez (i, j, k+½)   Hz (i+½, j+½, k)
//! ```
//!
//! and every array is indexed `i + nx·(j + ny·k)`.

mod cpml;
pub mod dump;
pub mod monitor;
pub mod source;
pub mod twod;

use log::{debug, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cpml::CpmlParams;
use cpml::PmlAxis;
pub use dump::SliceDump;
pub use monitor::{source_power, FaceSpectrum, SampleSet, Surface, SurfaceKind, SurfaceSpectrum};
pub use source::{DipoleSource, Pulse, SourceHandle};

use crate::error::{validation, Error, Result};
use crate::geometry::PermittivityGrid;
use monitor::{node_weights, FaceDef};

pub const C0: f64 = 299_792_458.0;
pub const MU0: f64 = 1.256_637_062_12e-6;
pub const EPS0: f64 = 1.0 / (MU0 * C0 * C0);
pub const ETA0: f64 = MU0 * C0;

/// Outer boundary treatment along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Pml,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub courant_factor: f64,
    pub pml_cells: usize,
    pub boundaries: [Boundary; 3],
    pub cpml: CpmlParams,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            courant_factor: 0.5,
            pml_cells: 10,
            boundaries: [Boundary::Pml; 3],
            cpml: CpmlParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopCondition {
    /// Stop once total field energy drops below this fraction of its peak.
    pub decay_threshold: f64,
    pub max_steps: usize,
}

impl Default for StopCondition {
    fn default() -> Self {
        Self {
            decay_threshold: 1e-5,
            max_steps: 500_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Decayed,
    MaxSteps,
}

/// Steps between energy checks.
pub const ENERGY_CHECK_INTERVAL: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MonitorHandle(pub usize);

/// Phasors accumulated during a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorResults {
    pub wavelengths_nm: Vec<f64>,
    pub cell_m: f64,
    pub dt_s: f64,
    pub steps: usize,
    pub termination: Termination,
    pub surfaces: Vec<SurfaceSpectrum>,
    /// Current moment `Il(ω)` of each source (A·m·s), same DFT convention
    /// as the field phasors.
    pub source_moments: Vec<Vec<Complex64>>,
    pub peak_energy_j: f64,
    pub final_energy_j: f64,
}

impl MonitorResults {
    pub fn surface(&self, handle: MonitorHandle) -> &SurfaceSpectrum {
        &self.surfaces[handle.0]
    }

    /// Net outward power through a closed box monitor.
    pub fn source_power(&self, handle: MonitorHandle) -> Result<Vec<f64>> {
        source_power(self.surface(handle))
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.wavelengths_nm.iter().map(|&wl| omega_of(wl)).collect()
    }
}

pub fn omega_of(wavelength_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * C0 / (wavelength_nm * 1e-9)
}

struct Injection {
    component: usize,
    index: usize,
    /// Trilinear weight × orientation component / εr of the edge.
    weight: f32,
}

struct InjectedSource {
    pulse: Pulse,
    taps: Vec<Injection>,
    dft: Vec<Complex64>,
}

struct FaceAccum {
    spec: FaceSpectrum,
    /// Components (E_u, H_v) of set A and (E_v, H_u) of set B.
    comps: [(usize, usize); 2],
    e_idx: [Vec<usize>; 2],
    h_idx: [Vec<[usize; 2]>; 2],
}

struct MonitorAccum {
    kind: SurfaceKind,
    faces: Vec<FaceAccum>,
    touches_pml: bool,
    probe_idx: usize,
    probe: [Vec<Complex64>; 6],
}

/// Solver state: fields, material coefficients, boundaries, sources and monitors.
pub struct Simulation {
    dims: [usize; 3],
    dx: f64,
    dt: f64,
    s: f32,
    origin_nm: [f64; 3],
    periodic: [bool; 3],
    e: [Vec<f32>; 3],
    h: [Vec<f32>; 3],
    /// `S / εr` at each E edge.
    ce: [Vec<f32>; 3],
    pml: [PmlAxis; 3],
    psi_e: [[Vec<f32>; 2]; 3],
    psi_h: [[Vec<f32>; 2]; 3],
    sources: Vec<InjectedSource>,
    monitors: Vec<MonitorAccum>,
    dumps: Vec<SliceDump>,
    wavelengths_nm: Vec<f64>,
    omegas: Vec<f64>,
    step: usize,
}

/// Simulation on `grid` with CPML on all six faces.
pub fn init_simulation(
    grid: &PermittivityGrid,
    courant_factor: f64,
    pml_cells: usize,
) -> Result<Simulation> {
    Simulation::new(
        grid,
        &SolverOptions {
            courant_factor,
            pml_cells,
            ..SolverOptions::default()
        },
    )
}

impl Simulation {
    pub fn new(grid: &PermittivityGrid, opts: &SolverOptions) -> Result<Self> {
        if !(opts.courant_factor > 0.0) {
            return Err(validation("courant factor must be positive"));
        }
        if opts.courant_factor > 1.0 {
            return Err(Error::Stability(format!(
                "courant factor {} exceeds the 3D stability bound of 1",
                opts.courant_factor
            )));
        }
        let dims = grid.dims();
        let periodic = opts.boundaries.map(|b| b == Boundary::Periodic);
        for a in 0..3 {
            if !periodic[a] {
                if opts.pml_cells < 8 {
                    return Err(validation(format!(
                        "pml_cells = {} is below the minimum of 8",
                        opts.pml_cells
                    )));
                }
                if dims[a] < 2 * opts.pml_cells + 2 {
                    return Err(Error::Configuration(format!(
                        "axis {a} has {} cells, too few for two {}-cell PMLs",
                        dims[a], opts.pml_cells
                    )));
                }
            }
        }
        let dx = grid.cell_nm() * 1e-9;
        let dt = opts.courant_factor * dx / (C0 * 3f64.sqrt());
        let s = (C0 * dt / dx) as f32;
        let pml: [PmlAxis; 3] = std::array::from_fn(|a| {
            if periodic[a] {
                PmlAxis::none(dims[a])
            } else {
                PmlAxis::graded(dims[a], opts.pml_cells, dx, dt, &opts.cpml)
            }
        });
        let n: usize = dims.iter().product();
        let ce = edge_coefficients(grid, s, periodic);
        let psi = |a: usize| -> [Vec<f32>; 2] {
            let len = n / dims[a] * pml[a].slab.len();
            [vec![0.0; len], vec![0.0; len]]
        };
        Ok(Self {
            dims,
            dx,
            dt,
            s,
            origin_nm: grid.origin_nm(),
            periodic,
            e: std::array::from_fn(|_| vec![0.0; n]),
            h: std::array::from_fn(|_| vec![0.0; n]),
            ce,
            psi_e: std::array::from_fn(psi),
            psi_h: std::array::from_fn(psi),
            pml,
            sources: Vec::new(),
            monitors: Vec::new(),
            dumps: Vec::new(),
            wavelengths_nm: Vec::new(),
            omegas: Vec::new(),
            step: 0,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cell_m(&self) -> f64 {
        self.dx
    }

    pub fn origin_nm(&self) -> [f64; 3] {
        self.origin_nm
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Electric field component (V/m).
    pub fn e_field(&self, component: usize) -> &[f32] {
        &self.e[component]
    }

    /// Magnetic field component in normalised units (`η₀·H`, V/m).
    pub fn h_field_normalised(&self, component: usize) -> &[f32] {
        &self.h[component]
    }

    pub fn fields_finite(&self) -> bool {
        self.e.iter().chain(self.h.iter()).all(|f| f.iter().all(|v| v.is_finite()))
    }

    /// Fractional grid coordinate of a device position (nm).
    pub fn grid_coord(&self, position_nm: [f64; 3]) -> [f64; 3] {
        let cell = self.dx * 1e9;
        std::array::from_fn(|a| (position_nm[a] - self.origin_nm[a]) / cell)
    }

    /// Nearest grid node to a device position; rejects positions outside the grid.
    pub fn node_at(&self, position_nm: [f64; 3]) -> Result<[usize; 3]> {
        let g = self.grid_coord(position_nm);
        let mut out = [0; 3];
        for a in 0..3 {
            let r = g[a].round();
            if r < 0.0 || r as usize >= self.dims[a] + usize::from(self.periodic[a]) {
                return Err(validation(format!(
                    "position {position_nm:?} nm lies outside the grid"
                )));
            }
            out[a] = r as usize;
        }
        Ok(out)
    }

    pub fn in_pml(&self, grid_coord: [f64; 3]) -> bool {
        (0..3).any(|a| self.pml[a].in_layer(grid_coord[a]))
    }

    /// Sets the monitor wavelengths; must precede `add_monitor`.
    pub fn set_wavelengths(&mut self, wavelengths_nm: &[f64]) -> Result<()> {
        if !self.monitors.is_empty() {
            return Err(validation("wavelengths must be set before monitors are added"));
        }
        if wavelengths_nm.is_empty() || wavelengths_nm.iter().any(|w| !(*w > 0.0)) {
            return Err(validation("monitor wavelengths must be positive and non-empty"));
        }
        self.wavelengths_nm = wavelengths_nm.to_vec();
        self.omegas = wavelengths_nm.iter().map(|&w| omega_of(w)).collect();
        for src in &mut self.sources {
            src.dft = vec![Complex64::new(0.0, 0.0); wavelengths_nm.len()];
        }
        Ok(())
    }

    pub fn add_dipole(&mut self, src: &DipoleSource) -> Result<SourceHandle> {
        let g = self.grid_coord(src.position_nm);
        for a in 0..3 {
            let outside = !self.periodic[a] && (g[a] < 0.0 || g[a] > (self.dims[a] - 1) as f64);
            if outside || self.pml[a].in_layer(g[a]) {
                return Err(Error::Placement(format!(
                    "dipole at {:?} nm lies in the PML or outside the grid",
                    src.position_nm
                )));
            }
        }
        let mut taps = Vec::new();
        for c in 0..3 {
            let w_c = src.orientation[c];
            if w_c == 0.0 {
                continue;
            }
            // component c is offset by half a cell along its own axis
            let coords: [f64; 3] = std::array::from_fn(|a| if a == c { g[a] - 0.5 } else { g[a] });
            let wx = source::linear_weights(coords[0]);
            let wy = source::linear_weights(coords[1]);
            let wz = source::linear_weights(coords[2]);
            for &(i, a) in &wx {
                for &(j, b) in &wy {
                    for &(k, d) in &wz {
                        let w = a * b * d * w_c;
                        if w == 0.0 {
                            continue;
                        }
                        let index = self.wrap_index([i, j, k]).ok_or_else(|| {
                            Error::Placement("dipole stencil leaves the grid".into())
                        })?;
                        let inv_eps = self.ce[c][index] / self.s;
                        taps.push(Injection {
                            component: c,
                            index,
                            weight: (w as f32) * inv_eps,
                        });
                    }
                }
            }
        }
        self.sources.push(InjectedSource {
            pulse: src.pulse,
            taps,
            dft: vec![Complex64::new(0.0, 0.0); self.omegas.len()],
        });
        Ok(SourceHandle(self.sources.len() - 1))
    }

    /// Attaches a DFT monitor. Faces must lie at least one cell inside the
    /// grid along non-periodic axes.
    pub fn add_monitor(&mut self, surface: Surface) -> Result<MonitorHandle> {
        if self.omegas.is_empty() {
            return Err(validation("set_wavelengths must be called before add_monitor"));
        }
        let nf = self.omegas.len();
        let mut faces = Vec::new();
        let mut touches_pml = false;
        for def in surface.faces() {
            let (face, touches) = self.build_face(&def, nf)?;
            touches_pml |= touches;
            faces.push(face);
        }
        let probe_idx = self
            .wrap_index(surface.centroid().map(|c| c as isize))
            .ok_or_else(|| validation("monitor centroid outside the grid"))?;
        self.monitors.push(MonitorAccum {
            kind: surface.kind(),
            faces,
            touches_pml,
            probe_idx,
            probe: std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); nf]),
        });
        Ok(MonitorHandle(self.monitors.len() - 1))
    }

    /// Closed box with corners snapped to the nearest nodes.
    pub fn add_box_monitor_nm(&mut self, lo_nm: [f64; 3], hi_nm: [f64; 3]) -> Result<MonitorHandle> {
        let lo = self.node_at(lo_nm)?;
        let hi = self.node_at(hi_nm)?;
        if (0..3).any(|a| hi[a] <= lo[a]) {
            return Err(validation("box monitor has zero extent after snapping"));
        }
        self.add_monitor(Surface::Box { lo, hi })
    }

    pub fn add_dump(&mut self, dump: SliceDump) -> Result<()> {
        dump.validate(self.dims)?;
        self.dumps.push(dump);
        Ok(())
    }

    fn wrap_index(&self, c: [isize; 3]) -> Option<usize> {
        let mut w = [0usize; 3];
        for a in 0..3 {
            let n = self.dims[a] as isize;
            let v = if self.periodic[a] { c[a].rem_euclid(n) } else { c[a] };
            if v < 0 || v >= n {
                return None;
            }
            w[a] = v as usize;
        }
        Some(w[0] + self.dims[0] * (w[1] + self.dims[1] * w[2]))
    }

    fn build_face(&self, def: &FaceDef, nf: usize) -> Result<(FaceAccum, bool)> {
        let a = def.axis;
        let (u, v) = ((a + 1) % 3, (a + 2) % 3);
        let p = def.index as isize;
        let limit = |axis: usize, hi: usize| {
            if self.periodic[axis] {
                hi <= self.dims[axis]
            } else {
                hi < self.dims[axis]
            }
        };
        if !(self.periodic[a] || (p >= 1 && (p as usize) < self.dims[a]))
            || !limit(u, def.hi[0])
            || !limit(v, def.hi[1])
            || def.lo[0] > def.hi[0]
            || def.lo[1] > def.hi[1]
        {
            return Err(validation(format!(
                "monitor face on axis {a} at index {p} exceeds the grid"
            )));
        }
        let dx = self.dx;
        let org = self.origin_nm.map(|o| o * 1e-9);
        let centers = |lo: usize, hi: usize| -> Vec<usize> { (lo..hi).collect() };
        let nodes = |lo: usize, hi: usize| -> Vec<usize> { (lo..=hi).collect() };
        let pos_c = |axis: usize, xs: &[usize]| -> Vec<f64> {
            xs.iter().map(|&x| org[axis] + (x as f64 + 0.5) * dx).collect()
        };
        let pos_n = |axis: usize, xs: &[usize]| -> Vec<f64> {
            xs.iter().map(|&x| org[axis] + x as f64 * dx).collect()
        };
        // set A: u centres, v nodes; set B: u nodes, v centres
        let layouts = [
            (centers(def.lo[0], def.hi[0]), nodes(def.lo[1], def.hi[1]), true),
            (nodes(def.lo[0], def.hi[0]), centers(def.lo[1], def.hi[1]), false),
        ];
        let comps = [(u, v), (v, u)];
        let mut sets = Vec::with_capacity(2);
        let mut e_idx: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let mut h_idx: [Vec<[usize; 2]>; 2] = [Vec::new(), Vec::new()];
        let mut inv_eps = Vec::new();
        let mut touches = self.pml[a].in_layer(def.index as f64);
        for (s, (us, vs, u_centred)) in layouts.iter().enumerate() {
            let (pu, wu) = if *u_centred {
                (pos_c(u, us), vec![dx; us.len()])
            } else {
                (pos_n(u, us), node_weights(def.lo[0], def.hi[0], dx))
            };
            let (pv, wv) = if *u_centred {
                (pos_n(v, vs), node_weights(def.lo[1], def.hi[1], dx))
            } else {
                (pos_c(v, vs), vec![dx; vs.len()])
            };
            for &y in vs {
                for &x in us {
                    let mut c = [0isize; 3];
                    c[a] = p;
                    c[u] = x as isize;
                    c[v] = y as isize;
                    let ie = self.wrap_index(c).expect("validated face index");
                    let mut below = c;
                    below[a] -= 1;
                    let ib = self
                        .wrap_index(below)
                        .ok_or_else(|| validation("monitor face touches the grid edge"))?;
                    e_idx[s].push(ie);
                    h_idx[s].push([ib, ie]);
                    inv_eps.push(self.ce[comps[s].0][ie] / self.s);
                    let fu = x as f64 + if *u_centred { 0.5 } else { 0.0 };
                    let fv = y as f64 + if *u_centred { 0.0 } else { 0.5 };
                    touches |= self.pml[u].in_layer(fu) || self.pml[v].in_layer(fv);
                }
            }
            sets.push(SampleSet::zeros(pu, pv, wu, wv, nf));
        }
        let medium_index = match (
            inv_eps.iter().cloned().fold(f32::INFINITY, f32::min),
            inv_eps.iter().cloned().fold(f32::NEG_INFINITY, f32::max),
        ) {
            (lo, hi) if lo.is_finite() && hi - lo <= 1e-6 * hi => Some((1.0 / lo as f64).sqrt()),
            _ => None,
        };
        let b = sets.pop().expect("two sets");
        let a_set = sets.pop().expect("two sets");
        let spec = FaceSpectrum {
            axis: a,
            outward: def.outward,
            plane_m: org[a] + def.index as f64 * dx,
            medium_index,
            n_freq: nf,
            a: a_set,
            b,
        };
        Ok((
            FaceAccum {
                spec,
                comps,
                e_idx,
                h_idx,
            },
            touches,
        ))
    }

    /// Total electromagnetic energy in the grid (J).
    pub fn energy(&self) -> f64 {
        let nxy = self.dims[0] * self.dims[1];
        let s = self.s as f64;
        let per_plane: Vec<f64> = (0..self.dims[2])
            .into_par_iter()
            .map(|k| {
                let r = k * nxy..(k + 1) * nxy;
                let mut acc = 0.0f64;
                for c in 0..3 {
                    for ((e, ce), h) in self.e[c][r.clone()]
                        .iter()
                        .zip(&self.ce[c][r.clone()])
                        .zip(&self.h[c][r.clone()])
                    {
                        let e = *e as f64;
                        let h = *h as f64;
                        acc += e * e * s / *ce as f64 + h * h;
                    }
                }
                acc
            })
            .collect();
        0.5 * EPS0 * self.dx.powi(3) * per_plane.iter().sum::<f64>()
    }

    /// Advances the fields by one time step.
    pub fn step(&mut self) {
        let n = self.step;
        let t_h = (n as f64 + 0.5) * self.dt;
        let t_e = (n as f64 + 1.0) * self.dt;

        self.update_h();
        if !self.monitors.is_empty() {
            let ph = self.phases(t_h);
            for m in &mut self.monitors {
                accumulate(m, &self.h, &ph, true);
            }
        }

        self.update_e();
        for src in &mut self.sources {
            let g = src.pulse.value(t_h);
            if g != 0.0 {
                for tap in &src.taps {
                    self.e[tap.component][tap.index] -= g as f32 * tap.weight;
                }
                for (acc, &w) in src.dft.iter_mut().zip(&self.omegas) {
                    *acc += g * Complex64::from_polar(self.dt, -w * t_h);
                }
            }
        }
        if !self.monitors.is_empty() {
            let ph = self.phases(t_e);
            for m in &mut self.monitors {
                accumulate(m, &self.e, &ph, false);
            }
        }

        self.step += 1;
        for d in &self.dumps {
            if self.step % d.every == 0 {
                if let Err(err) = d.write(self.step, self.dims, self.field_of(d.component)) {
                    warn!("slice dump at step {} failed: {err}", self.step);
                }
            }
        }
    }

    fn field_of(&self, component: dump::Component) -> &[f32] {
        match component {
            dump::Component::E(c) => &self.e[c],
            dump::Component::H(c) => &self.h[c],
        }
    }

    fn phases(&self, t: f64) -> Vec<Complex64> {
        self.omegas
            .iter()
            .map(|&w| Complex64::from_polar(self.dt, -w * t))
            .collect()
    }

    fn update_e(&mut self) {
        let dims = self.dims;
        let periodic = self.periodic;
        let h = &self.h;
        for c in 0..3 {
            let (u, v) = ((c + 1) % 3, (c + 2) % 3);
            let iku = &self.pml[u].ik_e;
            let ikv = &self.pml[v].ik_e;
            curl_update(
                dims,
                periodic,
                &mut self.e[c],
                Some(&self.ce[c]),
                1.0,
                [(&h[v], u, iku), (&h[u], v, ikv)],
                false,
            );
        }
        for a in 0..3 {
            if !self.pml[a].has_layers() {
                continue;
            }
            let (u, v) = ((a + 1) % 3, (a + 2) % 3);
            let [psi_u, psi_v] = &mut self.psi_e[a];
            cpml::correct(dims, a, &self.pml[a], false, &h[v], &mut self.e[u], -1.0, Some(&self.ce[u]), psi_u);
            cpml::correct(dims, a, &self.pml[a], false, &h[u], &mut self.e[v], 1.0, Some(&self.ce[v]), psi_v);
        }
    }

    fn update_h(&mut self) {
        let dims = self.dims;
        let periodic = self.periodic;
        let e = &self.e;
        let s = self.s;
        for c in 0..3 {
            let (u, v) = ((c + 1) % 3, (c + 2) % 3);
            let iku = &self.pml[u].ik_h;
            let ikv = &self.pml[v].ik_h;
            curl_update(
                dims,
                periodic,
                &mut self.h[c],
                None,
                -s,
                [(&e[v], u, iku), (&e[u], v, ikv)],
                true,
            );
        }
        for a in 0..3 {
            if !self.pml[a].has_layers() {
                continue;
            }
            let (u, v) = ((a + 1) % 3, (a + 2) % 3);
            let [psi_u, psi_v] = &mut self.psi_h[a];
            cpml::correct(dims, a, &self.pml[a], true, &e[v], &mut self.h[u], s, None, psi_u);
            cpml::correct(dims, a, &self.pml[a], true, &e[u], &mut self.h[v], -s, None, psi_v);
        }
    }

    /// Runs until the energy decays below `stop.decay_threshold` × peak after
    /// every source has switched off, or `stop.max_steps` is reached.
    pub fn run(&mut self, stop: &StopCondition) -> Result<MonitorResults> {
        if self.sources.is_empty() || self.monitors.is_empty() {
            return Err(validation("run needs at least one source and one monitor"));
        }
        let off_time = self
            .sources
            .iter()
            .map(|s| s.pulse.end_time())
            .fold(0.0, f64::max);
        let off_step = (off_time / self.dt).ceil() as usize;
        let mut peak = 0.0f64;
        let mut reference: Option<f64> = None;
        let mut last = 0.0;
        let termination = loop {
            if self.step >= stop.max_steps {
                warn!("stopped at max_steps = {} before energy decayed", stop.max_steps);
                break Termination::MaxSteps;
            }
            self.step();
            let n = self.step;
            let first_after_off = n >= off_step && reference.is_none();
            if n % ENERGY_CHECK_INTERVAL != 0 && !first_after_off {
                continue;
            }
            let w = self.energy();
            last = w;
            if !w.is_finite() {
                return Err(Error::Instability(format!(
                    "non-finite field values at step {n}"
                )));
            }
            peak = peak.max(w);
            if n < off_step {
                continue;
            }
            let w_ref = *reference.get_or_insert(w);
            if w > 2.0 * w_ref && w_ref > 0.0 {
                return Err(Error::Instability(format!(
                    "field energy grew after source turn-off: {w:.3e} J at step {n} vs {w_ref:.3e} J at turn-off"
                )));
            }
            if w <= stop.decay_threshold * peak {
                break Termination::Decayed;
            }
        };
        debug!("run finished after {} steps ({termination:?})", self.step);
        Ok(self.results(termination, peak, last))
    }

    /// Snapshot of the accumulated phasors.
    pub fn results(&self, termination: Termination, peak: f64, last: f64) -> MonitorResults {
        let h_scale = 1.0 / ETA0;
        let surfaces = self
            .monitors
            .iter()
            .map(|m| {
                let faces = m
                    .faces
                    .iter()
                    .map(|f| {
                        let mut spec = f.spec.clone();
                        for set in [&mut spec.a, &mut spec.b] {
                            set.h.iter_mut().for_each(|z| *z *= h_scale);
                        }
                        spec
                    })
                    .collect();
                let mut probe = m.probe.clone();
                for comp in &mut probe[3..] {
                    comp.iter_mut().for_each(|z| *z *= h_scale);
                }
                SurfaceSpectrum {
                    kind: m.kind,
                    wavelengths_nm: self.wavelengths_nm.clone(),
                    faces,
                    touches_pml: m.touches_pml,
                    probe,
                }
            })
            .collect();
        let moment = EPS0 * self.dx.powi(3) / self.dt;
        MonitorResults {
            wavelengths_nm: self.wavelengths_nm.clone(),
            cell_m: self.dx,
            dt_s: self.dt,
            steps: self.step,
            termination,
            surfaces,
            source_moments: self
                .sources
                .iter()
                .map(|s| s.dft.iter().map(|z| z * moment).collect())
                .collect(),
            peak_energy_j: peak,
            final_energy_j: last,
        }
    }
}

/// `S/εr` on every E edge; edge permittivity is the mean of the cells sharing it.
fn edge_coefficients(grid: &PermittivityGrid, s: f32, periodic: [bool; 3]) -> [Vec<f32>; 3] {
    let dims = grid.dims();
    let eps = grid.values();
    let cell = |c: [isize; 3]| -> Option<f32> {
        let mut w = [0usize; 3];
        for a in 0..3 {
            let n = dims[a] as isize;
            let v = if periodic[a] { c[a].rem_euclid(n) } else { c[a] };
            if v < 0 || v >= n {
                return None;
            }
            w[a] = v as usize;
        }
        Some(eps[w[0] + dims[0] * (w[1] + dims[1] * w[2])])
    };
    std::array::from_fn(|c| {
        let (u, v) = ((c + 1) % 3, (c + 2) % 3);
        let n: usize = dims.iter().product();
        let mut out = vec![0.0f32; n];
        out.par_chunks_mut(dims[0] * dims[1])
            .enumerate()
            .for_each(|(k, plane)| {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let base = [i as isize, j as isize, k as isize];
                        let mut sum = 0.0f32;
                        let mut cnt = 0.0f32;
                        for du in [-1isize, 0] {
                            for dv in [-1isize, 0] {
                                let mut p = base;
                                p[u] += du;
                                p[v] += dv;
                                if let Some(e) = cell(p) {
                                    sum += e;
                                    cnt += 1.0;
                                }
                            }
                        }
                        plane[i + dims[0] * j] = s * cnt / sum;
                    }
                }
            });
        out
    })
}

/// `target += scale·coef·(ik_u ∂_u A − ik_v ∂_v B)` with backward (E) or
/// forward (H) differences, one z-plane per task.
fn curl_update(
    dims: [usize; 3],
    periodic: [bool; 3],
    target: &mut [f32],
    per_cell: Option<&[f32]>,
    coef: f32,
    terms: [(&[f32], usize, &[f32]); 2],
    forward: bool,
) {
    let [nx, ny, _] = dims;
    let nxy = nx * ny;
    target
        .par_chunks_mut(nxy)
        .enumerate()
        .for_each(|(k, plane)| {
            let mut d0 = vec![0.0f32; nx];
            let mut d1 = vec![0.0f32; nx];
            for j in 0..ny {
                diff_row(dims, periodic, terms[0].0, terms[0].1, j, k, forward, &mut d0);
                diff_row(dims, periodic, terms[1].0, terms[1].1, j, k, forward, &mut d1);
                let row = &mut plane[j * nx..(j + 1) * nx];
                let scale = |i: usize, axis: usize, tab: &[f32]| match axis {
                    0 => tab[i],
                    1 => tab[j],
                    _ => tab[k],
                };
                let off = k * nxy + j * nx;
                for i in 0..nx {
                    let ku = scale(i, terms[0].1, terms[0].2);
                    let kv = scale(i, terms[1].1, terms[1].2);
                    let c = per_cell.map_or(coef, |pc| coef * pc[off + i]);
                    row[i] += c * (ku * d0[i] - kv * d1[i]);
                }
            }
        });
}

/// Difference of `field` along `axis` for row `(j, k)`: backward
/// `f[x] − f[x−1]` or forward `f[x+1] − f[x]`. Out-of-grid neighbours are
/// zero unless the axis is periodic.
#[allow(clippy::too_many_arguments)]
fn diff_row(
    dims: [usize; 3],
    periodic: [bool; 3],
    field: &[f32],
    axis: usize,
    j: usize,
    k: usize,
    forward: bool,
    out: &mut [f32],
) {
    let [nx, ny, nz] = dims;
    let base = nx * (j + ny * k);
    let row = &field[base..base + nx];
    match axis {
        0 => {
            if forward {
                for i in 0..nx - 1 {
                    out[i] = row[i + 1] - row[i];
                }
                let wrap = if periodic[0] { row[0] } else { 0.0 };
                out[nx - 1] = wrap - row[nx - 1];
            } else {
                for i in 1..nx {
                    out[i] = row[i] - row[i - 1];
                }
                let wrap = if periodic[0] { row[nx - 1] } else { 0.0 };
                out[0] = row[0] - wrap;
            }
        }
        _ => {
            let (x, n) = if axis == 1 { (j, ny) } else { (k, nz) };
            let nb = if forward {
                if x + 1 < n {
                    Some(x + 1)
                } else if periodic[axis] {
                    Some(0)
                } else {
                    None
                }
            } else if x > 0 {
                Some(x - 1)
            } else if periodic[axis] {
                Some(n - 1)
            } else {
                None
            };
            let nb_row = nb.map(|y| {
                let b = if axis == 1 { nx * (y + ny * k) } else { nx * (j + ny * y) };
                &field[b..b + nx]
            });
            match (nb_row, forward) {
                (Some(r), true) => out.iter_mut().zip(r.iter().zip(row)).for_each(|(o, (n, c))| *o = n - c),
                (Some(r), false) => out.iter_mut().zip(row.iter().zip(r)).for_each(|(o, (c, p))| *o = c - p),
                (None, true) => out.iter_mut().zip(row).for_each(|(o, c)| *o = -c),
                (None, false) => out.copy_from_slice(row),
            }
        }
    }
}

fn accumulate(m: &mut MonitorAccum, fields: &[Vec<f32>; 3], ph: &[Complex64], magnetic: bool) {
    let nf = ph.len();
    for face in &mut m.faces {
        for s in 0..2 {
            let (ec, hc) = face.comps[s];
            let set = if s == 0 { &mut face.spec.a } else { &mut face.spec.b };
            if magnetic {
                let f = &fields[hc];
                set.h
                    .par_chunks_mut(nf)
                    .zip(face.h_idx[s].par_iter())
                    .for_each(|(acc, &[i0, i1])| {
                        let val = 0.5 * (f[i0] as f64 + f[i1] as f64);
                        acc.iter_mut().zip(ph).for_each(|(a, p)| *a += val * p);
                    });
            } else {
                let f = &fields[ec];
                set.e
                    .par_chunks_mut(nf)
                    .zip(face.e_idx[s].par_iter())
                    .for_each(|(acc, &i)| {
                        let val = f[i] as f64;
                        acc.iter_mut().zip(ph).for_each(|(a, p)| *a += val * p);
                    });
            }
        }
    }
    let off = if magnetic { 3 } else { 0 };
    for c in 0..3 {
        let val = fields[c][m.probe_idx] as f64;
        m.probe[off + c]
            .iter_mut()
            .zip(ph)
            .for_each(|(a, p)| *a += val * p);
    }
}
