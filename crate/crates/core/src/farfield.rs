//! Near-to-far-field projection and angular integration.
//!
//! Tangential phasors on each monitor face define equivalent surface
//! currents `J = n̂×H`, `M = −n̂×E`. Their radiation vectors
//! `N = ∫J e^{ik r̂·r'} dS` and `L = ∫M e^{ik r̂·r'} dS` give the radiant
//! intensity `U = k²/(32π²η) |η N_⊥ + L×r̂|²`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::fdtd::{omega_of, FaceSpectrum, SurfaceSpectrum, C0, ETA0};
use crate::geometry::write_f32_raw;

/// Which hemisphere the polar angle is measured into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hemisphere {
    /// Collection side: `θ = 0` points along `−z`, through the substrate.
    Lower,
    /// `θ = 0` along `+z`.
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub theta_step_deg: f64,
    pub phi_step_deg: f64,
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self {
            theta_step_deg: 1.0,
            phi_step_deg: 2.0,
        }
    }
}

impl AngularGrid {
    fn validate(&self) -> Result<()> {
        let ok = |s: f64, span: f64| s > 0.0 && (span / s - (span / s).round()).abs() < 1e-9;
        if !ok(self.theta_step_deg, 90.0) || !ok(self.phi_step_deg, 360.0) {
            return Err(validation(
                "angular steps must divide 90° (θ) and 360° (φ) evenly",
            ));
        }
        Ok(())
    }

    pub fn thetas_deg(&self) -> Vec<f64> {
        let n = (90.0 / self.theta_step_deg).round() as usize;
        (0..=n).map(|i| i as f64 * self.theta_step_deg).collect()
    }

    pub fn phis_deg(&self) -> Vec<f64> {
        let n = (360.0 / self.phi_step_deg).round() as usize;
        (0..n).map(|i| i as f64 * self.phi_step_deg).collect()
    }
}

/// Radiant intensity on a hemisphere, row-major in `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub wavelength_nm: f64,
    pub exit_index: f64,
    pub hemisphere: Hemisphere,
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    /// W/sr (times s² for DFT phasors), index `it * phi_deg.len() + ip`.
    pub intensity: Vec<f64>,
}

/// Unit vector for polar angle `θ` from the hemisphere axis.
pub fn direction(hemisphere: Hemisphere, theta: f64, phi: f64) -> [f64; 3] {
    let z = match hemisphere {
        Hemisphere::Lower => -theta.cos(),
        Hemisphere::Upper => theta.cos(),
    };
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), z]
}

impl FarField {
    /// Evaluates `f(r̂)` on the grid.
    pub fn from_fn(
        wavelength_nm: f64,
        exit_index: f64,
        hemisphere: Hemisphere,
        grid: &AngularGrid,
        f: impl Fn([f64; 3]) -> f64,
    ) -> Result<Self> {
        grid.validate()?;
        let theta_deg = grid.thetas_deg();
        let phi_deg = grid.phis_deg();
        let mut intensity = Vec::with_capacity(theta_deg.len() * phi_deg.len());
        for t in &theta_deg {
            for p in &phi_deg {
                intensity.push(f(direction(hemisphere, t.to_radians(), p.to_radians())));
            }
        }
        Ok(Self {
            wavelength_nm,
            exit_index,
            hemisphere,
            theta_deg,
            phi_deg,
            intensity,
        })
    }

    /// Uniform intensity carrying `hemisphere_power` over the hemisphere.
    pub fn isotropic(wavelength_nm: f64, hemisphere_power: f64, grid: &AngularGrid) -> Result<Self> {
        let u = hemisphere_power / (2.0 * PI);
        Self::from_fn(wavelength_nm, 1.0, Hemisphere::Lower, grid, |_| u)
    }

    pub fn at(&self, it: usize, ip: usize) -> f64 {
        self.intensity[it * self.phi_deg.len() + ip]
    }

    pub fn direction(&self, it: usize, ip: usize) -> [f64; 3] {
        direction(
            self.hemisphere,
            self.theta_deg[it].to_radians(),
            self.phi_deg[ip].to_radians(),
        )
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensity.iter().cloned().fold(0.0, f64::max)
    }

    /// Power within the cone `sin θ ≤ NA / n_exit`.
    ///
    /// The intensity is interpolated linearly in `θ` and integrated exactly
    /// against `sin θ`; `φ` uses the periodic trapezoid rule.
    pub fn flux_in_cone(&self, na: f64) -> Result<f64> {
        if !(0.0..=self.exit_index).contains(&na) {
            return Err(validation(format!(
                "NA {na} outside [0, {}] for the exit medium",
                self.exit_index
            )));
        }
        let theta_max = (na / self.exit_index).min(1.0).asin();
        Ok(self.flux_below(theta_max))
    }

    /// Power over the whole hemisphere.
    pub fn total_flux(&self) -> f64 {
        self.flux_below(PI / 2.0)
    }

    fn flux_below(&self, theta_max: f64) -> f64 {
        let np = self.phi_deg.len();
        let dphi = 2.0 * PI / np as f64;
        // ∫ (a + bθ) sinθ dθ = −a cosθ + b (sinθ − θ cosθ)
        let prim = |a: f64, b: f64, t: f64| -> f64 { -a * t.cos() + b * (t.sin() - t * t.cos()) };
        let mut total = 0.0;
        for w in self.theta_deg.windows(2).enumerate() {
            let (it, pair) = w;
            let (t0, t1) = (pair[0].to_radians(), pair[1].to_radians());
            if t0 >= theta_max {
                break;
            }
            let hi = t1.min(theta_max);
            let (mut s0, mut s1) = (0.0, 0.0);
            for ip in 0..np {
                s0 += self.at(it, ip);
                s1 += self.at(it + 1, ip);
            }
            let b = (s1 - s0) / (t1 - t0);
            let a = s0 - b * t0;
            total += prim(a, b, hi) - prim(a, b, t0);
        }
        total * dphi
    }

    /// `(NA, collected power)` at each sample; samples must be sorted.
    pub fn na_fraction_curve(&self, na_samples: &[f64]) -> Result<Vec<(f64, f64)>> {
        if na_samples.windows(2).any(|w| w[1] < w[0]) {
            return Err(validation("NA samples must be sorted"));
        }
        na_samples
            .iter()
            .map(|&na| Ok((na, self.flux_in_cone(na)?)))
            .collect()
    }

    /// Intensity-averaged far field of incoherent emitters on the same grid.
    pub fn average(fields: &[&FarField]) -> Result<FarField> {
        let first = fields
            .first()
            .ok_or_else(|| validation("nothing to average"))?;
        for f in fields {
            if f.theta_deg != first.theta_deg
                || f.phi_deg != first.phi_deg
                || f.hemisphere != first.hemisphere
                || f.wavelength_nm != first.wavelength_nm
            {
                return Err(validation("far fields sampled on different grids"));
            }
        }
        let n = fields.len() as f64;
        let mut out = (*first).clone();
        for (i, v) in out.intensity.iter_mut().enumerate() {
            *v = fields.iter().map(|f| f.intensity[i]).sum::<f64>() / n;
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> FarField {
        let mut out = self.clone();
        out.intensity.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg,phi_deg,intensity\n");
        for (it, t) in self.theta_deg.iter().enumerate() {
            for (ip, p) in self.phi_deg.iter().enumerate() {
                let _ = writeln!(out, "{t},{p},{:e}", self.at(it, ip));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Raw little-endian f32 grid (`φ` fastest) with a JSON sidecar.
    pub fn write_raw(&self, raw_path: &Path) -> Result<()> {
        let data: Vec<f32> = self.intensity.iter().map(|&v| v as f32).collect();
        write_f32_raw(raw_path, &data)?;
        let sidecar = serde_json::json!({
            "dims": [self.phi_deg.len(), self.theta_deg.len()],
            "theta_deg": [self.theta_deg[0], *self.theta_deg.last().unwrap_or(&0.0)],
            "phi_deg": [self.phi_deg[0], *self.phi_deg.last().unwrap_or(&0.0)],
            "wavelength_nm": self.wavelength_nm,
            "hemisphere": self.hemisphere,
            "dtype": "float32-le",
            "order": "phi-fastest",
        });
        fs::write(raw_path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    pub grid: AngularGrid,
    pub hemisphere: Hemisphere,
    /// Expected exit-medium index; faces must sit in a medium of this index.
    pub exit_index: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            grid: AngularGrid::default(),
            hemisphere: Hemisphere::Lower,
            exit_index: 1.0,
        }
    }
}

/// Projects the monitor phasors at wavelength index `freq` to the far field.
pub fn near_to_far(
    surface: &SurfaceSpectrum,
    freq: usize,
    opts: &ProjectionOptions,
) -> Result<FarField> {
    opts.grid.validate()?;
    if surface.touches_pml {
        return Err(Error::Configuration("far-field monitor intersects the PML".into()));
    }
    let wavelength_nm = *surface
        .wavelengths_nm
        .get(freq)
        .ok_or_else(|| validation(format!("no monitor wavelength with index {freq}")))?;
    for face in &surface.faces {
        match face.medium_index {
            Some(n) if (n - opts.exit_index).abs() <= 1e-3 * opts.exit_index => {}
            Some(n) => {
                return Err(Error::Configuration(format!(
                    "monitor face sits in a medium of index {n:.4}, expected {}",
                    opts.exit_index
                )))
            }
            None => {
                return Err(Error::Configuration(
                    "monitor face intersects structured material".into(),
                ))
            }
        }
    }
    let n = opts.exit_index;
    let k = n * omega_of(wavelength_nm) / C0;
    let eta = ETA0 / n;
    let prepared: Vec<PreparedFace> = surface
        .faces
        .iter()
        .map(|f| PreparedFace::new(f, freq))
        .collect();
    let theta_deg = opts.grid.thetas_deg();
    let phi_deg = opts.grid.phis_deg();
    let rows: Vec<Vec<f64>> = theta_deg
        .par_iter()
        .map(|t| {
            phi_deg
                .iter()
                .map(|p| {
                    let r = direction(opts.hemisphere, t.to_radians(), p.to_radians());
                    let (nv, lv) = radiation_vectors(&prepared, k, r);
                    intensity(nv, lv, r, k, eta)
                })
                .collect()
        })
        .collect();
    Ok(FarField {
        wavelength_nm,
        exit_index: n,
        hemisphere: opts.hemisphere,
        theta_deg,
        phi_deg,
        intensity: rows.concat(),
    })
}

/// Far fields for every monitor wavelength.
pub fn near_to_far_all(surface: &SurfaceSpectrum, opts: &ProjectionOptions) -> Result<Vec<FarField>> {
    (0..surface.wavelengths_nm.len())
        .map(|f| near_to_far(surface, f, opts))
        .collect()
}

fn intensity(n: [Complex64; 3], l: [Complex64; 3], r: [f64; 3], k: f64, eta: f64) -> f64 {
    let ndotr: Complex64 = (0..3).map(|i| n[i] * r[i]).sum();
    let cross = [
        l[1] * r[2] - l[2] * r[1],
        l[2] * r[0] - l[0] * r[2],
        l[0] * r[1] - l[1] * r[0],
    ];
    let mut acc = 0.0;
    for i in 0..3 {
        let v = eta * (n[i] - ndotr * r[i]) + cross[i];
        acc += v.norm_sqr();
    }
    k * k / (32.0 * PI * PI * eta) * acc
}

/// One face's weighted currents at a single frequency.
struct PreparedFace {
    axis: usize,
    u_axis: usize,
    v_axis: usize,
    plane: f64,
    /// Set A: (u, v coordinates, J_u, M_v); set B: (u, v, J_v, M_u).
    sets: [(Vec<f64>, Vec<f64>, Vec<Complex64>, Vec<Complex64>); 2],
}

impl PreparedFace {
    fn new(face: &FaceSpectrum, f: usize) -> Self {
        let (u, v) = face.tangential_axes();
        let s = face.outward;
        let build = |set: &crate::fdtd::SampleSet, j_sign: f64, m_sign: f64| {
            let nu = set.u.len();
            let mut j = Vec::with_capacity(set.len());
            let mut m = Vec::with_capacity(set.len());
            for iv in 0..set.v.len() {
                for iu in 0..nu {
                    let p = (iv * nu + iu) * face.n_freq + f;
                    let w = set.wu[iu] * set.wv[iv];
                    j.push(set.h[p] * (w * j_sign));
                    m.push(set.e[p] * (w * m_sign));
                }
            }
            (set.u.clone(), set.v.clone(), j, m)
        };
        Self {
            axis: face.axis,
            u_axis: u,
            v_axis: v,
            plane: face.plane_m,
            // J_u = −s H_v, M_v = −s E_u;  J_v = s H_u, M_u = s E_v
            sets: [build(&face.a, -s, -s), build(&face.b, s, s)],
        }
    }
}

fn radiation_vectors(faces: &[PreparedFace], k: f64, r: [f64; 3]) -> ([Complex64; 3], [Complex64; 3]) {
    let zero = Complex64::new(0.0, 0.0);
    let mut nvec = [zero; 3];
    let mut lvec = [zero; 3];
    for face in faces {
        let pa = Complex64::from_polar(1.0, k * r[face.axis] * face.plane);
        for (s, (us, vs, j, m)) in face.sets.iter().enumerate() {
            if j.is_empty() {
                continue;
            }
            let pu: Vec<Complex64> = us
                .iter()
                .map(|&x| Complex64::from_polar(1.0, k * r[face.u_axis] * x))
                .collect();
            let nu = us.len();
            let (mut sj, mut sm) = (zero, zero);
            for (iv, &y) in vs.iter().enumerate() {
                let (mut rj, mut rm) = (zero, zero);
                let row = iv * nu;
                for (iu, p) in pu.iter().enumerate() {
                    rj += j[row + iu] * p;
                    rm += m[row + iu] * p;
                }
                let pv = Complex64::from_polar(1.0, k * r[face.v_axis] * y);
                sj += rj * pv;
                sm += rm * pv;
            }
            let (jc, mc) = if s == 0 {
                (face.u_axis, face.v_axis)
            } else {
                (face.v_axis, face.u_axis)
            };
            nvec[jc] += sj * pa;
            lvec[mc] += sm * pa;
        }
    }
    (nvec, lvec)
}
