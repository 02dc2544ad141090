//! Convolutional PML coefficients (CFS-PML, polynomial grading).

use serde::{Deserialize, Serialize};

use super::C0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpmlParams {
    /// Polynomial grading order of sigma and kappa.
    pub order: f64,
    /// Multiplier on the conventional optimum `0.8 (m + 1) / (eta0 dx)`.
    pub sigma_scale: f64,
    pub kappa_max: f64,
    /// Complex-frequency shift at the inner PML edge, in rad/s.
    pub alpha_max: f64,
}

impl Default for CpmlParams {
    fn default() -> Self {
        Self {
            order: 3.0,
            sigma_scale: 1.0,
            kappa_max: 1.0,
            alpha_max: 0.05 * 2.0 * std::f64::consts::PI * C0 / 725e-9,
        }
    }
}

/// Per-axis coefficient tables, indexed by grid coordinate along the axis.
/// `*_e` tables sit at integer positions (derivatives feeding E updates),
/// `*_h` tables at half-integer positions.
#[derive(Clone, Debug)]
pub(crate) struct PmlAxis {
    pub n: usize,
    pub cells: usize,
    pub b_e: Vec<f32>,
    pub c_e: Vec<f32>,
    pub ik_e: Vec<f32>,
    pub b_h: Vec<f32>,
    pub c_h: Vec<f32>,
    pub ik_h: Vec<f32>,
    /// Grid coordinates inside the absorbing layers, low side first.
    pub slab: Vec<usize>,
}

impl PmlAxis {
    /// Identity tables for an axis without absorbing layers.
    pub fn none(n: usize) -> Self {
        Self {
            n,
            cells: 0,
            b_e: vec![0.0; n],
            c_e: vec![0.0; n],
            ik_e: vec![1.0; n],
            b_h: vec![0.0; n],
            c_h: vec![0.0; n],
            ik_h: vec![1.0; n],
            slab: Vec::new(),
        }
    }

    pub fn graded(n: usize, cells: usize, dx: f64, dt: f64, params: &CpmlParams) -> Self {
        let sigma_max = params.sigma_scale * 0.8 * (params.order + 1.0) * C0 / dx;
        let depth = |x: f64| -> f64 {
            let lo = cells as f64 - x;
            let hi = x - (n - cells) as f64;
            (lo.max(hi) / cells as f64).clamp(0.0, 1.0)
        };
        let coeffs = |x: f64| -> (f32, f32, f32) {
            let rho = depth(x);
            let grade = rho.powf(params.order);
            let sigma = sigma_max * grade;
            let kappa = 1.0 + (params.kappa_max - 1.0) * grade;
            let alpha = if rho > 0.0 { params.alpha_max * (1.0 - rho) } else { 0.0 };
            let b = (-(sigma / kappa + alpha) * dt).exp();
            let c = if sigma > 0.0 {
                sigma / (sigma * kappa + kappa * kappa * alpha) * (b - 1.0)
            } else {
                0.0
            };
            (b as f32, c as f32, (1.0 / kappa) as f32)
        };
        let mut axis = Self::none(n);
        axis.cells = cells;
        for i in 0..n {
            let (b, c, ik) = coeffs(i as f64);
            axis.b_e[i] = b;
            axis.c_e[i] = c;
            axis.ik_e[i] = ik;
            let (b, c, ik) = coeffs(i as f64 + 0.5);
            axis.b_h[i] = b;
            axis.c_h[i] = c;
            axis.ik_h[i] = ik;
        }
        axis.slab = (0..cells).chain(n - cells..n).collect();
        axis
    }

    pub fn has_layers(&self) -> bool {
        self.cells > 0
    }

    /// Whether grid coordinate `x` (in cells, may be fractional) lies inside
    /// an absorbing layer.
    pub fn in_layer(&self, x: f64) -> bool {
        self.has_layers() && (x < self.cells as f64 || x > (self.n - self.cells) as f64)
    }
}

/// Applies the auxiliary-field update for one field component and one
/// derivative axis over the absorbing slab, then adds the correction
/// `sign * coef * psi` to `target`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn correct(
    dims: [usize; 3],
    axis: usize,
    pml: &PmlAxis,
    forward: bool,
    src: &[f32],
    target: &mut [f32],
    coef: f32,
    per_cell: Option<&[f32]>,
    psi: &mut [f32],
) {
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let n = dims[axis];
    let (b, c) = if forward {
        (&pml.b_h, &pml.c_h)
    } else {
        (&pml.b_e, &pml.c_e)
    };
    let ranges: [Vec<usize>; 3] = std::array::from_fn(|a| {
        if a == axis {
            pml.slab.clone()
        } else {
            (0..dims[a]).collect()
        }
    });
    let mut l = 0;
    for &k in &ranges[2] {
        for &j in &ranges[1] {
            for &i in &ranges[0] {
                let idx = i + dims[0] * (j + dims[1] * k);
                let g = [i, j, k][axis];
                let d = if forward {
                    let next = if g + 1 < n { src[idx + stride] } else { 0.0 };
                    next - src[idx]
                } else {
                    let prev = if g > 0 { src[idx - stride] } else { 0.0 };
                    src[idx] - prev
                };
                let p = b[g] * psi[l] + c[g] * d;
                psi[l] = p;
                let scale = per_cell.map_or(coef, |pc| coef * pc[idx]);
                target[idx] += scale * p;
                l += 1;
            }
        }
    }
}
