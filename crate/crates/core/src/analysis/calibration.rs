//! Linear calibration of simulated efficiency against measured count rates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_numeric_csv;
use crate::error::{validation, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub eta_bar: f64,
    pub i_inf_kcts: f64,
    /// Uncertainty of `eta_bar`, if known.
    pub sigma: Option<f64>,
}

/// `η̄ = slope · I∞ (+ intercept)`; slope in s/kct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    /// `None` when the scatter leaves no degrees of freedom to estimate it.
    pub slope_sigma: Option<f64>,
    pub intercept: f64,
    pub intercept_sigma: Option<f64>,
    pub residual_norm: f64,
    pub dof: usize,
    pub with_intercept: bool,
}

pub fn load_calibration_csv(path: &Path) -> Result<Vec<CalibrationPoint>> {
    Ok(read_numeric_csv(path, 2, 3)?
        .into_iter()
        .map(|r| CalibrationPoint {
            eta_bar: r[0],
            i_inf_kcts: r[1],
            sigma: r.get(2).copied(),
        })
        .collect())
}

/// Weighted least squares of `η̄` on `I∞`.
pub fn eta_vs_iinf_fit(points: &[CalibrationPoint], with_intercept: bool) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(validation("calibration needs at least two points"));
    }
    let weighted = points.iter().all(|p| p.sigma.is_some());
    if !weighted && points.iter().any(|p| p.sigma.is_some()) {
        return Err(validation("uncertainties must be given for every point or none"));
    }
    if points.iter().any(|p| p.sigma.is_some_and(|s| !(s > 0.0))) {
        return Err(validation("uncertainties must be positive"));
    }
    let w: Vec<f64> = points.iter().map(|p| p.sigma.map_or(1.0, |s| 1.0 / (s * s))).collect();
    let x: Vec<f64> = points.iter().map(|p| p.i_inf_kcts).collect();
    let y: Vec<f64> = points.iter().map(|p| p.eta_bar).collect();
    let sum = |f: &dyn Fn(usize) -> f64| (0..points.len()).map(f).sum::<f64>();
    let sw = sum(&|i| w[i]);
    let sx = sum(&|i| w[i] * x[i]);
    let sy = sum(&|i| w[i] * y[i]);
    let sxx = sum(&|i| w[i] * x[i] * x[i]);
    let sxy = sum(&|i| w[i] * x[i] * y[i]);
    let n_par = if with_intercept { 2 } else { 1 };
    let (slope, intercept, var_slope, var_icpt) = if with_intercept {
        let det = sw * sxx - sx * sx;
        if !(det.abs() > 0.0) {
            return Err(validation("calibration points share one I∞ value"));
        }
        (
            (sw * sxy - sx * sy) / det,
            (sxx * sy - sx * sxy) / det,
            sw / det,
            sxx / det,
        )
    } else {
        if !(sxx > 0.0) {
            return Err(validation("calibration points all have I∞ = 0"));
        }
        (sxy / sxx, 0.0, 1.0 / sxx, 0.0)
    };
    let rss = sum(&|i| w[i] * (y[i] - slope * x[i] - intercept).powi(2));
    let dof = points.len() - n_par;
    let scale = if weighted {
        Some(1.0)
    } else if dof > 0 {
        Some(rss / dof as f64)
    } else {
        None
    };
    Ok(LinearFit {
        slope,
        slope_sigma: scale.map(|s| (var_slope * s).sqrt()),
        intercept,
        intercept_sigma: if with_intercept {
            scale.map(|s| (var_icpt * s).sqrt())
        } else {
            None
        },
        residual_norm: rss.sqrt(),
        dof,
        with_intercept,
    })
}
