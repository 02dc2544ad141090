//! Fluorescence saturation fits, `I(P) = I∞·P/(P + P_sat) + c_bg·P`.

use std::path::Path;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::read_numeric_csv;
use crate::error::{validation, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub power_uw: f64,
    pub kcts_per_s: f64,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationData {
    points: Vec<SaturationPoint>,
}

/// Minimum number of points accepted for a fit.
pub const MIN_POINTS: usize = 5;

impl SaturationData {
    pub fn new(points: Vec<SaturationPoint>) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(validation(format!(
                "saturation fit needs at least {MIN_POINTS} points, got {}",
                points.len()
            )));
        }
        for p in &points {
            if !(p.power_uw > 0.0) || !p.power_uw.is_finite() {
                return Err(validation(format!("power must be positive, got {}", p.power_uw)));
            }
            if !(p.kcts_per_s >= 0.0) || !p.kcts_per_s.is_finite() {
                return Err(validation(format!("count rate must be non-negative, got {}", p.kcts_per_s)));
            }
            if let Some(s) = p.sigma {
                if !(s > 0.0) {
                    return Err(validation("count-rate uncertainties must be positive"));
                }
            }
        }
        let all_sigma = points.iter().all(|p| p.sigma.is_some());
        let no_sigma = points.iter().all(|p| p.sigma.is_none());
        if !(all_sigma || no_sigma) {
            return Err(validation("uncertainties must be given for every point or none"));
        }
        let p0 = points[0].power_uw;
        if points.iter().all(|p| p.power_uw == p0) {
            return Err(validation("all excitation powers are equal; the fit is degenerate"));
        }
        Ok(Self { points })
    }

    /// From `(power_uw, kcts_per_s)` pairs without uncertainties.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(p, i)| SaturationPoint {
                    power_uw: p,
                    kcts_per_s: i,
                    sigma: None,
                })
                .collect(),
        )
    }

    /// `power_uw, kcts_per_s[, sigma]`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let rows = read_numeric_csv(path, 2, 3)?;
        Self::new(
            rows.into_iter()
                .map(|r| SaturationPoint {
                    power_uw: r[0],
                    kcts_per_s: r[1],
                    sigma: r.get(2).copied(),
                })
                .collect(),
        )
    }

    pub fn points(&self) -> &[SaturationPoint] {
        &self.points
    }

    fn weighted(&self) -> bool {
        self.points[0].sigma.is_some()
    }
}

/// Evaluates the saturation model.
pub fn saturation_model(power_uw: f64, i_inf: f64, p_sat: f64, c_bg: f64) -> f64 {
    i_inf * power_uw / (power_uw + p_sat) + c_bg * power_uw
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub i_inf: f64,
    pub p_sat: f64,
    pub c_bg: f64,
    pub sigma_i_inf: f64,
    pub sigma_p_sat: f64,
    /// Zero when the background was pinned at zero.
    pub sigma_c_bg: f64,
    /// `sqrt(Σ r²)` of the (weighted) residuals.
    pub residual_norm: f64,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
    /// The unconstrained fit gave `c_bg < 0` and was repeated with `c_bg = 0`.
    pub background_pinned: bool,
}

impl SaturationFit {
    pub fn predict(&self, power_uw: f64) -> f64 {
        saturation_model(power_uw, self.i_inf, self.p_sat, self.c_bg)
    }
}

struct Problem<'a> {
    data: &'a SaturationData,
    /// `[I∞, P_sat]` or `[I∞, P_sat, c_bg]`.
    x: DVector<f64>,
    trace: Vec<f64>,
}

impl Problem<'_> {
    fn c_bg(&self) -> f64 {
        if self.x.len() == 3 { self.x[2] } else { 0.0 }
    }

    fn weight(p: &SaturationPoint) -> f64 {
        p.sigma.map_or(1.0, |s| 1.0 / s)
    }

    fn residual_vec(&self) -> DVector<f64> {
        let (a, b, c) = (self.x[0], self.x[1], self.c_bg());
        DVector::from_iterator(
            self.data.points.len(),
            self.data
                .points
                .iter()
                .map(|p| (saturation_model(p.power_uw, a, b, c) - p.kcts_per_s) * Self::weight(p)),
        )
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
        self.trace.push(self.residual_vec().norm());
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(self.residual_vec())
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let (a, b) = (self.x[0], self.x[1]);
        let n = self.x.len();
        let mut j = DMatrix::zeros(self.data.points.len(), n);
        for (r, p) in self.data.points.iter().enumerate() {
            let w = Self::weight(p);
            let d = p.power_uw + b;
            j[(r, 0)] = w * p.power_uw / d;
            j[(r, 1)] = -w * a * p.power_uw / (d * d);
            if n == 3 {
                j[(r, 2)] = w * p.power_uw;
            }
        }
        Some(j)
    }
}

/// Data-derived starting point `[I∞, P_sat, c_bg]`.
pub fn initial_guess(data: &SaturationData) -> [f64; 3] {
    let mut pts: Vec<(f64, f64)> = data.points.iter().map(|p| (p.power_uw, p.kcts_per_s)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let i_max = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let half = 0.5 * i_max;
    let p_sat = pts
        .windows(2)
        .find(|w| w[0].1 <= half && w[1].1 >= half)
        .map(|w| {
            let t = if w[1].1 > w[0].1 { (half - w[0].1) / (w[1].1 - w[0].1) } else { 0.0 };
            w[0].0 + t * (w[1].0 - w[0].0)
        })
        .unwrap_or(pts[pts.len() / 2].0);
    let p_sat = if p_sat > 0.0 { p_sat } else { pts[pts.len() / 2].0 };
    // slope above the model's own saturating slope at the high-power end
    let (lo, hi) = (pts[pts.len() - 2], pts[pts.len() - 1]);
    let slope = if hi.0 > lo.0 { (hi.1 - lo.1) / (hi.0 - lo.0) } else { 0.0 };
    let model_slope = i_max * p_sat / (hi.0 + p_sat).powi(2);
    [i_max.max(f64::MIN_POSITIVE), p_sat, (slope - model_slope).max(0.0)]
}

/// Iteration cap passed to the optimiser (in units of `n + 1` evaluations).
const PATIENCE: usize = 200;

pub fn fit_saturation(data: &SaturationData) -> Result<SaturationFit> {
    let guess = initial_guess(data);
    let fit = run_fit(data, DVector::from_row_slice(&guess))?;
    if fit.c_bg >= 0.0 {
        return Ok(fit);
    }
    let mut pinned = run_fit(data, DVector::from_row_slice(&[fit.i_inf, fit.p_sat]))?;
    pinned.background_pinned = true;
    Ok(pinned)
}

fn run_fit(data: &SaturationData, x0: DVector<f64>) -> Result<SaturationFit> {
    let problem = Problem {
        data,
        x: x0,
        trace: Vec::new(),
    };
    let lm = LevenbergMarquardt::new()
        .with_ftol(1e-15)
        .with_xtol(1e-15)
        .with_gtol(1e-15)
        .with_patience(PATIENCE);
    let (problem, report) = lm.minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit {
            reason: format!("{:?}", report.termination),
            evaluations: report.number_of_evaluations,
            trace: problem.trace.clone(),
        });
    }
    let x = problem.x.clone();
    let r = problem.residual_vec();
    let j = problem.jacobian().expect("analytic jacobian");
    let n = x.len();
    let m = r.len();
    let rss = r.norm_squared();
    let scale = if data.weighted() {
        1.0
    } else if m > n {
        rss / (m - n) as f64
    } else {
        0.0
    };
    let jtj = j.transpose() * &j;
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::Fit {
            reason: "singular normal matrix at the optimum".into(),
            evaluations: report.number_of_evaluations,
            trace: problem.trace.clone(),
        })?
        * scale;
    let sd = |i: usize| if i < n { cov[(i, i)].max(0.0).sqrt() } else { 0.0 };
    if !(x[0] > 0.0 && x[1] > 0.0) {
        return Err(Error::Fit {
            reason: format!("non-physical optimum I∞ = {}, P_sat = {}", x[0], x[1]),
            evaluations: report.number_of_evaluations,
            trace: problem.trace,
        });
    }
    Ok(SaturationFit {
        i_inf: x[0],
        p_sat: x[1],
        c_bg: if n == 3 { x[2] } else { 0.0 },
        sigma_i_inf: sd(0),
        sigma_p_sat: sd(1),
        sigma_c_bg: sd(2),
        residual_norm: rss.sqrt(),
        residuals: r.iter().cloned().collect(),
        converged: true,
        evaluations: report.number_of_evaluations,
        background_pinned: false,
    })
}

/// Outcome of refitting noisy synthetic data many times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    /// Trials whose fitted `I∞` lies within `k_sigma` reported σ of the truth.
    pub covered: usize,
    pub failed_fits: usize,
    pub k_sigma: f64,
    pub mean_i_inf: f64,
}

impl CoverageReport {
    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.trials as f64
    }
}

/// Refits `trials` noisy copies of the model sampled at `powers_uw`, with
/// Gaussian noise of standard deviation `noise_fraction · I(P)`.
pub fn monte_carlo_coverage(
    truth: [f64; 3],
    powers_uw: &[f64],
    noise_fraction: f64,
    trials: usize,
    k_sigma: f64,
    seed: u64,
) -> Result<CoverageReport> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    if trials == 0 || !(noise_fraction > 0.0) {
        return Err(validation("need at least one trial and positive noise"));
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let (mut covered, mut failed, mut sum) = (0, 0, 0.0);
    for _ in 0..trials {
        let points = powers_uw
            .iter()
            .map(|&p| {
                let clean = saturation_model(p, truth[0], truth[1], truth[2]);
                let z: f64 = StandardNormal.sample(&mut rng);
                SaturationPoint {
                    power_uw: p,
                    kcts_per_s: (clean * (1.0 + noise_fraction * z)).max(0.0),
                    sigma: Some(noise_fraction * clean),
                }
            })
            .collect();
        match fit_saturation(&SaturationData::new(points)?) {
            Ok(fit) => {
                sum += fit.i_inf;
                if (fit.i_inf - truth[0]).abs() <= k_sigma * fit.sigma_i_inf {
                    covered += 1;
                }
            }
            Err(Error::Fit { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(CoverageReport {
        trials,
        covered,
        failed_fits: failed,
        k_sigma,
        mean_i_inf: sum / (trials - failed).max(1) as f64,
    })
}

/// `n` powers spaced evenly in `(0, max]`.
pub fn power_ramp(max_uw: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| max_uw * k as f64 / n as f64).collect()
}
