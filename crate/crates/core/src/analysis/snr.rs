//! Shot-noise-limited single-shot spin-readout SNR.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Fixed readout window of the reference measurements, ns.
pub const DEFAULT_WINDOW_NS: f64 = 300.0;

fn check(alpha0: f64, contrast: f64) -> Result<()> {
    if !(alpha0 > 0.0) || !alpha0.is_finite() {
        return Err(validation(format!("α₀ must be positive, got {alpha0}")));
    }
    if !(0.0..1.0).contains(&contrast) {
        return Err(validation(format!("contrast must lie in [0, 1), got {contrast}")));
    }
    Ok(())
}

/// `√α₀ · C / √(2 − C)`.
pub fn snr(alpha0: f64, contrast: f64) -> Result<f64> {
    check(alpha0, contrast)?;
    Ok(alpha0.sqrt() * contrast / (2.0 - contrast).sqrt())
}

/// Photon number per shot needed to reach `target` SNR at `contrast`.
pub fn alpha0_for_snr(target: f64, contrast: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(validation("target SNR must be positive"));
    }
    if !(contrast > 0.0 && contrast < 1.0) {
        return Err(validation("contrast must lie in (0, 1)"));
    }
    Ok(target * target * (2.0 - contrast) / (contrast * contrast))
}

/// Rescales a reference photon number by a ratio of saturated count rates.
pub fn scale_alpha0(alpha0_ref: f64, i_inf_ratio: f64) -> Result<f64> {
    if !(i_inf_ratio > 0.0) {
        return Err(validation(format!("count-rate ratio must be positive, got {i_inf_ratio}")));
    }
    Ok(alpha0_ref * i_inf_ratio)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub alpha0: f64,
    pub alpha1: f64,
    pub contrast: f64,
    pub window_ns: f64,
    pub snr: f64,
}

impl SnrPoint {
    /// From mean photon numbers of the bright (`α₀`) and dark (`α₁`) states.
    pub fn from_counts(alpha0: f64, alpha1: f64, window_ns: f64) -> Result<Self> {
        if !(alpha1 >= 0.0) || alpha1 > alpha0 {
            return Err(validation("α₁ must lie in [0, α₀]"));
        }
        let contrast = 1.0 - alpha1 / alpha0.max(f64::MIN_POSITIVE);
        Self::from_contrast(alpha0, contrast, window_ns)
    }

    pub fn from_contrast(alpha0: f64, contrast: f64, window_ns: f64) -> Result<Self> {
        Ok(Self {
            alpha0,
            alpha1: alpha0 * (1.0 - contrast),
            contrast,
            window_ns,
            snr: snr(alpha0, contrast)?,
        })
    }
}

/// SNR over a rectangular `(α₀, C)` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrGrid {
    pub alpha0: Vec<f64>,
    pub contrast: Vec<f64>,
    /// Index `[contrast][alpha0]`.
    pub snr: Vec<Vec<f64>>,
}

pub fn snr_landscape(alpha0: &[f64], contrast: &[f64]) -> Result<SnrGrid> {
    let snr = contrast
        .iter()
        .map(|&c| alpha0.iter().map(|&a| snr(a, c)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(SnrGrid {
        alpha0: alpha0.to_vec(),
        contrast: contrast.to_vec(),
        snr,
    })
}

impl SnrGrid {
    /// Long-format table `alpha0,contrast,snr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha0,contrast,snr\n");
        for (c, row) in self.contrast.iter().zip(&self.snr) {
            for (a, s) in self.alpha0.iter().zip(row) {
                let _ = writeln!(out, "{a},{c},{s}");
            }
        }
        out
    }
}

/// `n` log-spaced values in `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
