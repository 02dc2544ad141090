//! Frequency-domain surface monitors.
//!
//! A face at grid plane `p` normal to axis `a` samples the two tangential
//! field components on their own staggered sub-lattices. Set A holds
//! `E_u` with the co-located `H_v`, set B holds `E_v` with `H_u`, where
//! `(a, u, v)` is a cyclic permutation of `(x, y, z)`. Magnetic samples are
//! the average of the two half-planes bracketing the face.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sub-lattice of a face. Field arrays are indexed
/// `((iv * u.len()) + iu) * n_freq + f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    /// Sample coordinates along the face's `u` and `v` axes, metres.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Quadrature weights along each axis, metres.
    pub wu: Vec<f64>,
    pub wv: Vec<f64>,
    /// Tangential electric phasor (V/m·s).
    pub e: Vec<Complex64>,
    /// Tangential magnetic phasor (A/m·s).
    pub h: Vec<Complex64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.u.len() * self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero-valued sample set for `n_freq` frequencies.
    pub fn zeros(u: Vec<f64>, v: Vec<f64>, wu: Vec<f64>, wv: Vec<f64>, n_freq: usize) -> Self {
        let n = u.len() * v.len() * n_freq;
        Self {
            u,
            v,
            wu,
            wv,
            e: vec![Complex64::new(0.0, 0.0); n],
            h: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    fn cross_sum(&self, n_freq: usize, f: usize) -> f64 {
        let nu = self.u.len();
        let mut acc = 0.0;
        for (iv, wv) in self.wv.iter().enumerate() {
            for (iu, wu) in self.wu.iter().enumerate() {
                let p = (iv * nu + iu) * n_freq + f;
                acc += wu * wv * (self.e[p] * self.h[p].conj()).re;
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceSpectrum {
    /// Normal axis (0 = x, 1 = y, 2 = z).
    pub axis: usize,
    /// `+1` or `-1`: orientation of the outward normal along `axis`.
    pub outward: f64,
    /// Coordinate of the face along its normal, metres.
    pub plane_m: f64,
    /// Refractive index if every sample sits in the same homogeneous medium.
    pub medium_index: Option<f64>,
    pub n_freq: usize,
    /// `E_u`, `H_v`.
    pub a: SampleSet,
    /// `E_v`, `H_u`.
    pub b: SampleSet,
}

impl FaceSpectrum {
    pub fn tangential_axes(&self) -> (usize, usize) {
        ((self.axis + 1) % 3, (self.axis + 2) % 3)
    }

    /// Time-averaged outward Poynting flux at frequency index `f`.
    pub fn flux(&self, f: usize) -> f64 {
        // (E x H*)·a = E_u H_v* - E_v H_u*
        self.outward * 0.5 * (self.a.cross_sum(self.n_freq, f) - self.b.cross_sum(self.n_freq, f))
    }

    /// Multiplies every phasor by `factor`, e.g. a global phase.
    pub fn scale(&mut self, factor: Complex64) {
        for set in [&mut self.a, &mut self.b] {
            set.e.iter_mut().chain(set.h.iter_mut()).for_each(|z| *z *= factor);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceKind {
    Plane,
    Box,
}

/// Accumulated phasors of one plane or closed box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpectrum {
    pub kind: SurfaceKind,
    pub wavelengths_nm: Vec<f64>,
    pub faces: Vec<FaceSpectrum>,
    pub touches_pml: bool,
    /// Phasors of `Ex, Ey, Ez, Hx, Hy, Hz` at the node nearest the surface
    /// centroid, per frequency.
    pub probe: [Vec<Complex64>; 6],
}

impl SurfaceSpectrum {
    pub fn flux(&self, f: usize) -> f64 {
        self.faces.iter().map(|face| face.flux(f)).sum()
    }

    pub fn fluxes(&self) -> Vec<f64> {
        (0..self.wavelengths_nm.len()).map(|f| self.flux(f)).collect()
    }

    /// Spectrum table: `wavelength_nm, re_Ex, im_Ex, ..., re_Hz, im_Hz, flux_W`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("wavelength_nm");
        for c in ["Ex", "Ey", "Ez", "Hx", "Hy", "Hz"] {
            let _ = write!(out, ",re_{c},im_{c}");
        }
        out.push_str(",flux_W\n");
        for (f, wl) in self.wavelengths_nm.iter().enumerate() {
            let _ = write!(out, "{wl}");
            for comp in &self.probe {
                let _ = write!(out, ",{:e},{:e}", comp[f].re, comp[f].im);
            }
            let _ = writeln!(out, ",{:e}", self.flux(f));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Net outward flux through a closed box surrounding a source.
pub fn source_power(surface: &SurfaceSpectrum) -> Result<Vec<f64>> {
    if surface.kind != SurfaceKind::Box {
        return Err(Error::Configuration(
            "source power needs a closed box monitor".into(),
        ));
    }
    if surface.touches_pml {
        return Err(Error::Configuration(
            "source box intersects the PML".into(),
        ));
    }
    Ok(surface.fluxes())
}

/// Grid-index description of a monitor surface. Indices refer to Yee nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Plane {
        axis: usize,
        index: usize,
        /// Node ranges along the face's `u` and `v` axes (inclusive ends).
        lo: [usize; 2],
        hi: [usize; 2],
        /// Whether the normal points toward increasing `axis`.
        positive: bool,
    },
    Box { lo: [usize; 3], hi: [usize; 3] },
}

/// Face description before sampling.
pub(crate) struct FaceDef {
    pub axis: usize,
    pub index: usize,
    pub lo: [usize; 2],
    pub hi: [usize; 2],
    pub outward: f64,
}

impl Surface {
    pub(crate) fn faces(&self) -> Vec<FaceDef> {
        match *self {
            Surface::Plane {
                axis,
                index,
                lo,
                hi,
                positive,
            } => vec![FaceDef {
                axis,
                index,
                lo,
                hi,
                outward: if positive { 1.0 } else { -1.0 },
            }],
            Surface::Box { lo, hi } => {
                let mut out = Vec::with_capacity(6);
                for a in 0..3 {
                    let (u, v) = ((a + 1) % 3, (a + 2) % 3);
                    for (index, outward) in [(lo[a], -1.0), (hi[a], 1.0)] {
                        out.push(FaceDef {
                            axis: a,
                            index,
                            lo: [lo[u], lo[v]],
                            hi: [hi[u], hi[v]],
                            outward,
                        });
                    }
                }
                out
            }
        }
    }

    pub(crate) fn kind(&self) -> SurfaceKind {
        match self {
            Surface::Plane { .. } => SurfaceKind::Plane,
            Surface::Box { .. } => SurfaceKind::Box,
        }
    }

    pub(crate) fn centroid(&self) -> [usize; 3] {
        match *self {
            Surface::Plane {
                axis, index, lo, hi, ..
            } => {
                let mut c = [0; 3];
                c[axis] = index;
                c[(axis + 1) % 3] = (lo[0] + hi[0]) / 2;
                c[(axis + 2) % 3] = (lo[1] + hi[1]) / 2;
                c
            }
            Surface::Box { lo, hi } => std::array::from_fn(|a| (lo[a] + hi[a]) / 2),
        }
    }
}

/// Trapezoid weights over nodes `lo..=hi` with spacing `dx`.
pub(crate) fn node_weights(lo: usize, hi: usize, dx: f64) -> Vec<f64> {
    let n = hi - lo + 1;
    (0..n)
        .map(|i| if n > 1 && (i == 0 || i == n - 1) { 0.5 * dx } else { dx })
        .collect()
}
