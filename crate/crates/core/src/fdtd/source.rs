//! Broadband point-dipole sources.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::C0;
use crate::error::{validation, Result};

/// Gaussian-modulated sinusoid, odd about its delay so the injected dipole
/// moment carries no static component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub center_wavelength_nm: f64,
    /// Gaussian envelope width (standard deviation), seconds.
    pub tau_s: f64,
    pub delay_s: f64,
    pub amplitude: f64,
}

/// Envelope widths kept on each side of the pulse centre.
const ENVELOPE_SPAN: f64 = 6.0;

impl Pulse {
    /// Pulse whose spectral amplitude at both band edges is a quarter of its peak.
    pub fn covering(lambda_min_nm: f64, lambda_max_nm: f64) -> Result<Self> {
        if !(lambda_min_nm > 0.0 && lambda_max_nm > lambda_min_nm) {
            return Err(validation(format!(
                "invalid band [{lambda_min_nm}, {lambda_max_nm}] nm"
            )));
        }
        let f_lo = C0 / (lambda_max_nm * 1e-9);
        let f_hi = C0 / (lambda_min_nm * 1e-9);
        let f0 = 0.5 * (f_lo + f_hi);
        let half_width = 2.0 * std::f64::consts::PI * (f_hi - f0);
        let tau = (2.0 * 4f64.ln()).sqrt() / half_width;
        Ok(Self {
            center_wavelength_nm: C0 / f0 * 1e9,
            tau_s: tau,
            delay_s: ENVELOPE_SPAN * tau,
            amplitude: 1.0,
        })
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * C0 / (self.center_wavelength_nm * 1e-9)
    }

    pub fn value(&self, t: f64) -> f64 {
        if t > self.end_time() {
            return 0.0;
        }
        let x = (t - self.delay_s) / self.tau_s;
        self.amplitude * (-0.5 * x * x).exp() * (self.omega0() * (t - self.delay_s)).sin()
    }

    pub fn end_time(&self) -> f64 {
        self.delay_s + ENVELOPE_SPAN * self.tau_s
    }

    /// Continuous Fourier transform `∫ g(t) e^{-iωt} dt`.
    pub fn spectrum(&self, omega: f64) -> Complex64 {
        let w0 = self.omega0();
        let g = |dw: f64| (2.0 * std::f64::consts::PI).sqrt() * self.tau_s
            * (-0.5 * dw * dw * self.tau_s * self.tau_s).exp();
        // sin(w0 t) = (e^{i w0 t} - e^{-i w0 t}) / 2i
        let shift = Complex64::from_polar(1.0, -omega * self.delay_s);
        let val = (g(omega - w0) - g(omega + w0)) / Complex64::new(0.0, 2.0);
        self.amplitude * val * shift
    }
}

/// Electric point dipole radiating the pulse as a soft current source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSource {
    /// Device coordinates, nm.
    pub position_nm: [f64; 3],
    /// Unit vector.
    pub orientation: [f64; 3],
    pub pulse: Pulse,
}

impl DipoleSource {
    /// Normalises `orientation`; rejects the zero vector.
    pub fn new(position_nm: [f64; 3], orientation: [f64; 3], pulse: Pulse) -> Result<Self> {
        let norm = orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(validation("dipole orientation must be a non-zero vector"));
        }
        Ok(Self {
            position_nm,
            orientation: orientation.map(|c| c / norm),
            pulse,
        })
    }
}

/// Index of a source attached to a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SourceHandle(pub usize);

/// Trilinear weights of a point at fractional grid coordinate `x` over the
/// two bracketing nodes.
pub(crate) fn linear_weights(x: f64) -> [(isize, f64); 2] {
    let i0 = x.floor();
    let t = x - i0;
    [(i0 as isize, 1.0 - t), (i0 as isize + 1, t)]
}
