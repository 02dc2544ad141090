//! Single-emitter screening from intensity autocorrelation histograms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_numeric_csv;
use crate::error::{validation, Error, Result};

/// Fraction of bins (largest |delay|) used to estimate the plateau.
pub const PLATEAU_FRACTION: f64 = 0.2;
pub const SINGLE_EMITTER_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub delay_ns: Vec<f64>,
    pub coincidences: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Verdict {
    pub g2_zero: f64,
    pub plateau: f64,
    pub single: bool,
}

impl G2Histogram {
    pub fn new(delay_ns: Vec<f64>, coincidences: Vec<f64>) -> Result<Self> {
        if delay_ns.len() != coincidences.len() || delay_ns.len() < 5 {
            return Err(validation("g2 histogram needs at least five (delay, value) bins"));
        }
        if coincidences.iter().chain(&delay_ns).any(|v| !v.is_finite()) {
            return Err(validation("g2 histogram contains non-finite values"));
        }
        Ok(Self {
            delay_ns,
            coincidences,
        })
    }

    /// `delay_ns, norm_coincidences`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let rows = read_numeric_csv(path, 2, 2)?;
        Self::new(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| r[1]).collect(),
        )
    }
}

/// Normalises by the long-delay plateau and classifies `g2(0) < 0.5` as single.
pub fn is_single_emitter(h: &G2Histogram) -> Result<G2Verdict> {
    let mut order: Vec<usize> = (0..h.delay_ns.len()).collect();
    order.sort_by(|&a, &b| h.delay_ns[b].abs().total_cmp(&h.delay_ns[a].abs()).then(a.cmp(&b)));
    let n_outer = ((h.delay_ns.len() as f64 * PLATEAU_FRACTION).round() as usize).max(1);
    let outer: Vec<f64> = order[..n_outer].iter().map(|&i| h.coincidences[i]).collect();
    let plateau = outer.iter().sum::<f64>() / n_outer as f64;
    if !(plateau > 0.0) {
        return Err(Error::Data(
            "long-delay plateau of the g2 histogram is not positive".into(),
        ));
    }
    let centre = *order.last().expect("non-empty histogram");
    let g2_zero = h.coincidences[centre] / plateau;
    Ok(G2Verdict {
        g2_zero,
        plateau,
        single: g2_zero < SINGLE_EMITTER_THRESHOLD,
    })
}

/// Antibunching trace of `n` identical emitters: `1 − e^{−|τ|/τ₀}/n`.
pub fn synthetic_trace(emitters: usize, tau_ns: f64, half_span_ns: f64, bins: usize) -> G2Histogram {
    let delay: Vec<f64> = (0..bins)
        .map(|i| -half_span_ns + 2.0 * half_span_ns * i as f64 / (bins - 1) as f64)
        .collect();
    let vals = delay
        .iter()
        .map(|t| 1.0 - (-t.abs() / tau_ns).exp() / emitters as f64)
        .collect();
    G2Histogram {
        delay_ns: delay,
        coincidences: vals,
    }
}
