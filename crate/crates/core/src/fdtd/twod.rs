//! Two-dimensional (translationally invariant along z) solver for fast
//! validation runs.
//!
//! TM carries `Ez, Hx, Hy`; TE carries `Hz, Ex, Ey`. Nodes follow the 3D
//! convention restricted to the x-y plane: `Ez (i, j)`, `Hx (i, j+½)`,
//! `Hy (i+½, j)`, `Hz (i+½, j+½)`, `Ex (i+½, j)`, `Ey (i, j+½)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cpml::{CpmlParams, PmlAxis};
use super::source::{linear_weights, Pulse};
use super::{omega_of, StopCondition, Termination, C0, ENERGY_CHECK_INTERVAL, EPS0, ETA0};
use crate::error::{validation, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    Tm,
    Te,
}

/// Cell-centred relative permittivity on an x-y grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2d {
    pub dims: [usize; 2],
    pub cell_nm: f64,
    pub origin_nm: [f64; 2],
    pub eps: Vec<f32>,
}

impl Grid2d {
    /// Grid filled from a function of the cell-centre position (nm).
    pub fn from_fn(
        dims: [usize; 2],
        cell_nm: f64,
        origin_nm: [f64; 2],
        f: impl Fn([f64; 2]) -> f64,
    ) -> Self {
        let mut eps = Vec::with_capacity(dims[0] * dims[1]);
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = [
                    origin_nm[0] + (i as f64 + 0.5) * cell_nm,
                    origin_nm[1] + (j as f64 + 0.5) * cell_nm,
                ];
                eps.push(f(p) as f32);
            }
        }
        Self {
            dims,
            cell_nm,
            origin_nm,
            eps,
        }
    }

    /// Grid centred on the origin.
    pub fn centred(dims: [usize; 2], cell_nm: f64, f: impl Fn([f64; 2]) -> f64) -> Self {
        let origin = [0, 1].map(|a| -(dims[a] as f64) * cell_nm / 2.0);
        Self::from_fn(dims, cell_nm, origin, f)
    }
}

/// Phasors on one straight monitor line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSpectrum {
    pub normal_axis: usize,
    pub outward: f64,
    /// Orientation factor mapping `Re(e·h*)` onto the normal Poynting component.
    pub sign: f64,
    pub plane_m: f64,
    pub positions_m: Vec<f64>,
    pub weights_m: Vec<f64>,
    pub n_freq: usize,
    pub e: Vec<Complex64>,
    /// A/m·s.
    pub h: Vec<Complex64>,
}

impl LineSpectrum {
    /// Outward power per unit length (W/m).
    pub fn flux(&self, f: usize) -> f64 {
        let acc: f64 = self
            .weights_m
            .iter()
            .enumerate()
            .map(|(p, w)| {
                let q = p * self.n_freq + f;
                w * (self.e[q] * self.h[q].conj()).re
            })
            .sum();
        self.outward * self.sign * 0.5 * acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monitor2dSpectrum {
    pub closed: bool,
    pub touches_pml: bool,
    pub lines: Vec<LineSpectrum>,
}

impl Monitor2dSpectrum {
    pub fn flux(&self, f: usize) -> f64 {
        self.lines.iter().map(|l| l.flux(f)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Results2d {
    pub wavelengths_nm: Vec<f64>,
    pub steps: usize,
    pub termination: Termination,
    pub monitors: Vec<Monitor2dSpectrum>,
    /// Line current `I(ω)` of each source (A·s).
    pub source_currents: Vec<Vec<Complex64>>,
}

impl Results2d {
    pub fn fluxes(&self, monitor: usize) -> Vec<f64> {
        (0..self.wavelengths_nm.len())
            .map(|f| self.monitors[monitor].flux(f))
            .collect()
    }

    /// Closed-contour power; rejects open lines and contours in the PML.
    pub fn source_power(&self, monitor: usize) -> Result<Vec<f64>> {
        let m = &self.monitors[monitor];
        if !m.closed || m.touches_pml {
            return Err(Error::Configuration(
                "source power needs a closed contour clear of the PML".into(),
            ));
        }
        Ok(self.fluxes(monitor))
    }
}

struct Tap {
    /// 0: out-of-plane scalar (Ez), 1: Ex, 2: Ey.
    field: usize,
    index: usize,
    weight: f32,
}

struct Source2d {
    pulse: Pulse,
    taps: Vec<Tap>,
    dft: Vec<Complex64>,
}

struct LineAccum {
    spec: LineSpectrum,
    e_field: usize,
    h_field: usize,
    e_idx: Vec<usize>,
    h_idx: Vec<[usize; 2]>,
}

struct MonitorAccum {
    closed: bool,
    touches_pml: bool,
    lines: Vec<LineAccum>,
}

/// Field slots: TM uses `[Ez]` and `[Hx, Hy]`, TE uses `[Ex, Ey]` and `[Hz]`.
pub struct Simulation2d {
    pol: Polarization,
    dims: [usize; 2],
    dx: f64,
    dt: f64,
    s: f32,
    origin_nm: [f64; 2],
    /// Electric slots: TM `[Ez]`, TE `[Ex, Ey]`.
    e: Vec<Vec<f32>>,
    /// Magnetic slots: TM `[Hx, Hy]`, TE `[Hz]`.
    h: Vec<Vec<f32>>,
    ce: Vec<Vec<f32>>,
    pml: [PmlAxis; 2],
    /// One auxiliary array per (component, derivative) pair.
    psi_e: Vec<Vec<f32>>,
    psi_h: Vec<Vec<f32>>,
    sources: Vec<Source2d>,
    monitors: Vec<MonitorAccum>,
    omegas: Vec<f64>,
    wavelengths_nm: Vec<f64>,
    step: usize,
}

impl Simulation2d {
    pub fn new(
        grid: &Grid2d,
        pol: Polarization,
        courant_factor: f64,
        pml_cells: usize,
    ) -> Result<Self> {
        if !(courant_factor > 0.0) {
            return Err(validation("courant factor must be positive"));
        }
        if courant_factor > 1.0 {
            return Err(Error::Stability(format!(
                "courant factor {courant_factor} exceeds the 2D stability bound of 1"
            )));
        }
        if pml_cells < 8 {
            return Err(validation(format!("pml_cells = {pml_cells} is below the minimum of 8")));
        }
        let dims = grid.dims;
        if dims.iter().any(|&n| n < 2 * pml_cells + 2) {
            return Err(Error::Configuration("grid too small for the PML".into()));
        }
        let dx = grid.cell_nm * 1e-9;
        let dt = courant_factor * dx / (C0 * 2f64.sqrt());
        let s = (C0 * dt / dx) as f32;
        let params = CpmlParams::default();
        let pml = [0, 1].map(|a| PmlAxis::graded(dims[a], pml_cells, dx, dt, &params));
        let n = dims[0] * dims[1];
        let cell = |i: isize, j: isize| -> Option<f32> {
            (i >= 0 && j >= 0 && (i as usize) < dims[0] && (j as usize) < dims[1])
                .then(|| grid.eps[i as usize + dims[0] * j as usize])
        };
        let coef = |cells: &[(isize, isize)], i: usize, j: usize| -> f32 {
            let (mut sum, mut cnt) = (0.0f32, 0.0f32);
            for &(di, dj) in cells {
                if let Some(e) = cell(i as isize + di, j as isize + dj) {
                    sum += e;
                    cnt += 1.0;
                }
            }
            s * cnt / sum
        };
        let table = |cells: &[(isize, isize)]| -> Vec<f32> {
            (0..n).map(|idx| coef(cells, idx % dims[0], idx / dims[0])).collect()
        };
        let (e, h, ce) = match pol {
            Polarization::Tm => (
                vec![vec![0.0; n]],
                vec![vec![0.0; n], vec![0.0; n]],
                vec![table(&[(-1, -1), (0, -1), (-1, 0), (0, 0)])],
            ),
            Polarization::Te => (
                vec![vec![0.0; n], vec![0.0; n]],
                vec![vec![0.0; n]],
                vec![table(&[(0, -1), (0, 0)]), table(&[(-1, 0), (0, 0)])],
            ),
        };
        Ok(Self {
            pol,
            dims,
            dx,
            dt,
            s,
            origin_nm: grid.origin_nm,
            e,
            h,
            ce,
            pml,
            psi_e: vec![vec![0.0; n]; 2],
            psi_h: vec![vec![0.0; n]; 2],
            sources: Vec::new(),
            monitors: Vec::new(),
            omegas: Vec::new(),
            wavelengths_nm: Vec::new(),
            step: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cell_m(&self) -> f64 {
        self.dx
    }

    pub fn set_wavelengths(&mut self, wavelengths_nm: &[f64]) -> Result<()> {
        if !self.monitors.is_empty() || !self.sources.is_empty() {
            return Err(validation("wavelengths must be set before sources and monitors"));
        }
        if wavelengths_nm.is_empty() || wavelengths_nm.iter().any(|w| !(*w > 0.0)) {
            return Err(validation("monitor wavelengths must be positive and non-empty"));
        }
        self.wavelengths_nm = wavelengths_nm.to_vec();
        self.omegas = wavelengths_nm.iter().map(|&w| omega_of(w)).collect();
        Ok(())
    }

    fn grid_coord(&self, p_nm: [f64; 2]) -> [f64; 2] {
        let cell = self.dx * 1e9;
        [0, 1].map(|a| (p_nm[a] - self.origin_nm[a]) / cell)
    }

    /// Nearest node to a position (nm).
    pub fn node_at(&self, p_nm: [f64; 2]) -> Result<[usize; 2]> {
        let g = self.grid_coord(p_nm);
        let mut out = [0; 2];
        for a in 0..2 {
            let r = g[a].round();
            if r < 0.0 || r as usize >= self.dims[a] {
                return Err(validation(format!("position {p_nm:?} nm lies outside the grid")));
            }
            out[a] = r as usize;
        }
        Ok(out)
    }

    /// Soft line current at `position_nm`. TM ignores `orientation`; TE
    /// uses it as the in-plane current direction.
    pub fn add_line_source(
        &mut self,
        position_nm: [f64; 2],
        orientation: [f64; 2],
        pulse: Pulse,
    ) -> Result<()> {
        let g = self.grid_coord(position_nm);
        if (0..2).any(|a| self.pml[a].in_layer(g[a]) || g[a] < 0.0 || g[a] > (self.dims[a] - 1) as f64) {
            return Err(Error::Placement(format!(
                "line source at {position_nm:?} nm lies in the PML or outside the grid"
            )));
        }
        let mut taps = Vec::new();
        let comps: Vec<(usize, [f64; 2], f64)> = match self.pol {
            Polarization::Tm => vec![(0, [0.0, 0.0], 1.0)],
            Polarization::Te => {
                let norm = orientation[0].hypot(orientation[1]);
                if !(norm > 0.0) {
                    return Err(validation("TE line source needs a non-zero orientation"));
                }
                vec![
                    (0, [0.5, 0.0], orientation[0] / norm),
                    (1, [0.0, 0.5], orientation[1] / norm),
                ]
            }
        };
        for (field, shift, w_c) in comps {
            if w_c == 0.0 {
                continue;
            }
            for &(i, a) in &linear_weights(g[0] - shift[0]) {
                for &(j, b) in &linear_weights(g[1] - shift[1]) {
                    let w = a * b * w_c;
                    if w == 0.0 {
                        continue;
                    }
                    let index = i as usize + self.dims[0] * j as usize;
                    let inv_eps = self.ce[field][index] / self.s;
                    taps.push(Tap {
                        field,
                        index,
                        weight: w as f32 * inv_eps,
                    });
                }
            }
        }
        self.sources.push(Source2d {
            pulse,
            taps,
            dft: vec![Complex64::new(0.0, 0.0); self.omegas.len()],
        });
        Ok(())
    }

    /// Straight line normal to `normal_axis` at node `index`, spanning nodes
    /// `lo..=hi` along the other axis.
    pub fn add_line_monitor(
        &mut self,
        normal_axis: usize,
        index: usize,
        lo: usize,
        hi: usize,
        positive: bool,
    ) -> Result<usize> {
        let line = self.build_line(normal_axis, index, lo, hi, if positive { 1.0 } else { -1.0 })?;
        let touches = line.1;
        self.monitors.push(MonitorAccum {
            closed: false,
            touches_pml: touches,
            lines: vec![line.0],
        });
        Ok(self.monitors.len() - 1)
    }

    /// Closed rectangle with node corners `lo`, `hi`.
    pub fn add_contour_monitor(&mut self, lo: [usize; 2], hi: [usize; 2]) -> Result<usize> {
        let mut lines = Vec::new();
        let mut touches = false;
        for a in 0..2 {
            let t = 1 - a;
            for (index, outward) in [(lo[a], -1.0), (hi[a], 1.0)] {
                let (l, tp) = self.build_line(a, index, lo[t], hi[t], outward)?;
                touches |= tp;
                lines.push(l);
            }
        }
        self.monitors.push(MonitorAccum {
            closed: true,
            touches_pml: touches,
            lines,
        });
        Ok(self.monitors.len() - 1)
    }

    fn build_line(
        &self,
        a: usize,
        index: usize,
        lo: usize,
        hi: usize,
        outward: f64,
    ) -> Result<(LineAccum, bool)> {
        if self.omegas.is_empty() {
            return Err(validation("set_wavelengths must be called before adding monitors"));
        }
        let t = 1 - a;
        if index < 1 || index >= self.dims[a] || hi >= self.dims[t] || lo > hi {
            return Err(validation("monitor line exceeds the grid"));
        }
        let nf = self.omegas.len();
        let dx = self.dx;
        let org = self.origin_nm.map(|o| o * 1e-9);
        let at = |along_a: usize, along_t: usize| -> usize {
            if a == 0 {
                along_a + self.dims[0] * along_t
            } else {
                along_t + self.dims[0] * along_a
            }
        };
        // (electric slot, magnetic slot, sign, samples on nodes?)
        let (e_field, h_field, sign, on_nodes) = match (self.pol, a) {
            (Polarization::Tm, 0) => (0, 1, -1.0, true),
            (Polarization::Tm, _) => (0, 0, 1.0, true),
            (Polarization::Te, 0) => (1, 0, 1.0, false),
            (Polarization::Te, _) => (0, 0, -1.0, false),
        };
        let samples: Vec<usize> = if on_nodes { (lo..=hi).collect() } else { (lo..hi).collect() };
        let offset = if on_nodes { 0.0 } else { 0.5 };
        let positions_m = samples
            .iter()
            .map(|&x| org[t] + (x as f64 + offset) * dx)
            .collect();
        let weights_m = if on_nodes {
            super::monitor::node_weights(lo, hi, dx)
        } else {
            vec![dx; samples.len()]
        };
        let e_idx: Vec<usize> = samples.iter().map(|&x| at(index, x)).collect();
        let h_idx = samples.iter().map(|&x| [at(index - 1, x), at(index, x)]).collect();
        let touches = self.pml[a].in_layer(index as f64)
            || samples.iter().any(|&x| self.pml[t].in_layer(x as f64 + offset));
        let n = samples.len() * nf;
        Ok((
            LineAccum {
                spec: LineSpectrum {
                    normal_axis: a,
                    outward,
                    sign,
                    plane_m: org[a] + index as f64 * dx,
                    positions_m,
                    weights_m,
                    n_freq: nf,
                    e: vec![Complex64::new(0.0, 0.0); n],
                    h: vec![Complex64::new(0.0, 0.0); n],
                },
                e_field,
                h_field,
                e_idx,
                h_idx,
            },
            touches,
        ))
    }

    pub fn energy(&self) -> f64 {
        let mut acc = 0.0;
        for (f, ce) in self.e.iter().zip(&self.ce) {
            for (v, c) in f.iter().zip(ce) {
                acc += (*v as f64).powi(2) * self.s as f64 / *c as f64;
            }
        }
        for f in &self.h {
            acc += f.iter().map(|v| (*v as f64).powi(2)).sum::<f64>();
        }
        0.5 * EPS0 * self.dx * self.dx * acc
    }

    pub fn step(&mut self) {
        let t_h = (self.step as f64 + 0.5) * self.dt;
        let t_e = t_h + 0.5 * self.dt;
        match self.pol {
            Polarization::Tm => self.update_h_tm(),
            Polarization::Te => self.update_h_te(),
        }
        let ph_h = self.phases(t_h);
        for m in &mut self.monitors {
            for l in &mut m.lines {
                let f = &self.h[l.h_field];
                for (p, &[i0, i1]) in l.h_idx.iter().enumerate() {
                    let val = 0.5 * (f[i0] as f64 + f[i1] as f64);
                    for (k, ph) in ph_h.iter().enumerate() {
                        l.spec.h[p * ph_h.len() + k] += val * ph;
                    }
                }
            }
        }
        match self.pol {
            Polarization::Tm => self.update_e_tm(),
            Polarization::Te => self.update_e_te(),
        }
        for src in &mut self.sources {
            let g = src.pulse.value(t_h);
            if g != 0.0 {
                for tap in &src.taps {
                    self.e[tap.field][tap.index] -= g as f32 * tap.weight;
                }
                for (acc, &w) in src.dft.iter_mut().zip(&self.omegas) {
                    *acc += g * Complex64::from_polar(self.dt, -w * t_h);
                }
            }
        }
        let ph_e = self.phases(t_e);
        for m in &mut self.monitors {
            for l in &mut m.lines {
                let f = &self.e[l.e_field];
                for (p, &i) in l.e_idx.iter().enumerate() {
                    let val = f[i] as f64;
                    for (k, ph) in ph_e.iter().enumerate() {
                        l.spec.e[p * ph_e.len() + k] += val * ph;
                    }
                }
            }
        }
        self.step += 1;
    }

    fn phases(&self, t: f64) -> Vec<Complex64> {
        self.omegas
            .iter()
            .map(|&w| Complex64::from_polar(self.dt, -w * t))
            .collect()
    }

    fn update_h_tm(&mut self) {
        let [nx, ny] = self.dims;
        let s = self.s;
        let (px, py) = (&self.pml[0], &self.pml[1]);
        let ez = &self.e[0];
        let get = |i: usize, j: usize| if i < nx && j < ny { ez[i + nx * j] } else { 0.0 };
        let (hx, rest) = self.h.split_at_mut(1);
        let (hx, hy) = (&mut hx[0], &mut rest[0]);
        let (psi_x, psi_y) = self.psi_h.split_at_mut(1);
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * j;
                let c = ez[idx];
                let dy = get(i, j + 1) - c;
                let p = &mut psi_x[0][idx];
                *p = py.b_h[j] * *p + py.c_h[j] * dy;
                hx[idx] -= s * (py.ik_h[j] * dy + *p);
                let dxe = get(i + 1, j) - c;
                let p = &mut psi_y[0][idx];
                *p = px.b_h[i] * *p + px.c_h[i] * dxe;
                hy[idx] += s * (px.ik_h[i] * dxe + *p);
            }
        }
    }

    fn update_e_tm(&mut self) {
        let [nx, _] = self.dims;
        let (px, py) = (&self.pml[0], &self.pml[1]);
        let (hx, hy) = (&self.h[0], &self.h[1]);
        let (psi_a, psi_b) = self.psi_e.split_at_mut(1);
        for (idx, ez) in self.e[0].iter_mut().enumerate() {
            let (i, j) = (idx % nx, idx / nx);
            let dxh = hy[idx] - if i > 0 { hy[idx - 1] } else { 0.0 };
            let dyh = hx[idx] - if j > 0 { hx[idx - nx] } else { 0.0 };
            let pa = &mut psi_a[0][idx];
            *pa = px.b_e[i] * *pa + px.c_e[i] * dxh;
            let pb = &mut psi_b[0][idx];
            *pb = py.b_e[j] * *pb + py.c_e[j] * dyh;
            *ez += self.ce[0][idx] * (px.ik_e[i] * dxh + *pa - py.ik_e[j] * dyh - *pb);
        }
    }

    fn update_h_te(&mut self) {
        let [nx, ny] = self.dims;
        let s = self.s;
        let (px, py) = (&self.pml[0], &self.pml[1]);
        let (ex, ey) = (&self.e[0], &self.e[1]);
        let (psi_a, psi_b) = self.psi_h.split_at_mut(1);
        for (idx, hz) in self.h[0].iter_mut().enumerate() {
            let (i, j) = (idx % nx, idx / nx);
            let dxe = if i + 1 < nx { ey[idx + 1] } else { 0.0 } - ey[idx];
            let dye = if j + 1 < ny { ex[idx + nx] } else { 0.0 } - ex[idx];
            let pa = &mut psi_a[0][idx];
            *pa = px.b_h[i] * *pa + px.c_h[i] * dxe;
            let pb = &mut psi_b[0][idx];
            *pb = py.b_h[j] * *pb + py.c_h[j] * dye;
            *hz -= s * (px.ik_h[i] * dxe + *pa - py.ik_h[j] * dye - *pb);
        }
    }

    fn update_e_te(&mut self) {
        let [nx, _] = self.dims;
        let (px, py) = (&self.pml[0], &self.pml[1]);
        let hz = &self.h[0];
        let (ex, rest) = self.e.split_at_mut(1);
        let (ex, ey) = (&mut ex[0], &mut rest[0]);
        let (psi_a, psi_b) = self.psi_e.split_at_mut(1);
        for idx in 0..hz.len() {
            let (i, j) = (idx % nx, idx / nx);
            let dyh = hz[idx] - if j > 0 { hz[idx - nx] } else { 0.0 };
            let pa = &mut psi_a[0][idx];
            *pa = py.b_e[j] * *pa + py.c_e[j] * dyh;
            ex[idx] += self.ce[0][idx] * (py.ik_e[j] * dyh + *pa);
            let dxh = hz[idx] - if i > 0 { hz[idx - 1] } else { 0.0 };
            let pb = &mut psi_b[0][idx];
            *pb = px.b_e[i] * *pb + px.c_e[i] * dxh;
            ey[idx] -= self.ce[1][idx] * (px.ik_e[i] * dxh + *pb);
        }
    }

    pub fn run(&mut self, stop: &StopCondition) -> Result<Results2d> {
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
        let termination = loop {
            if self.step >= stop.max_steps {
                break Termination::MaxSteps;
            }
            self.step();
            let n = self.step;
            let first = n >= off_step && reference.is_none();
            if n % ENERGY_CHECK_INTERVAL != 0 && !first {
                continue;
            }
            let w = self.energy();
            if !w.is_finite() {
                return Err(Error::Instability(format!("non-finite field values at step {n}")));
            }
            peak = peak.max(w);
            if n < off_step {
                continue;
            }
            let w_ref = *reference.get_or_insert(w);
            if w > 2.0 * w_ref && w_ref > 0.0 {
                return Err(Error::Instability(format!(
                    "field energy grew after source turn-off at step {n}"
                )));
            }
            if w <= stop.decay_threshold * peak {
                break Termination::Decayed;
            }
        };
        let h_scale = 1.0 / ETA0;
        let monitors = self
            .monitors
            .iter()
            .map(|m| Monitor2dSpectrum {
                closed: m.closed,
                touches_pml: m.touches_pml,
                lines: m
                    .lines
                    .iter()
                    .map(|l| {
                        let mut spec = l.spec.clone();
                        spec.h.iter_mut().for_each(|z| *z *= h_scale);
                        spec
                    })
                    .collect(),
            })
            .collect();
        let current = EPS0 * self.dx * self.dx / self.dt;
        Ok(Results2d {
            wavelengths_nm: self.wavelengths_nm.clone(),
            steps: self.step,
            termination,
            monitors,
            source_currents: self
                .sources
                .iter()
                .map(|s| s.dft.iter().map(|z| z * current).collect())
                .collect(),
        })
    }
}
