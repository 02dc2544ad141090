//! Collection-efficiency figures of merit.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, Error, Result};
use crate::farfield::FarField;

/// Default collection band, nm.
pub const COLLECTION_BAND_NM: [f64; 2] = [650.0, 800.0];

/// Efficiencies above 1 by less than this are clamped with a warning.
pub const EFFICIENCY_TOLERANCE: f64 = 0.02;

/// `n` wavelengths uniformly spanning `band`.
pub fn band_samples(band: [f64; 2], n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.5 * (band[0] + band[1])];
    }
    (0..n)
        .map(|i| band[0] + (band[1] - band[0]) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Tabulated relative emission intensity, linearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionSpectrum {
    wavelengths_nm: Vec<f64>,
    intensity: Vec<f64>,
}

/// Parameters of the built-in room-temperature NV⁻ model.
pub mod nv_model {
    pub const ZPL_NM: f64 = 637.0;
    pub const ZPL_FWHM_NM: f64 = 2.0;
    /// Fraction of the weight over the tabulated support carried by the ZPL.
    pub const ZPL_FRACTION: f64 = 0.04;
    pub const PSB_PEAK_NM: f64 = 690.0;
    /// Standard deviations of the sideband on its blue and red flanks.
    pub const PSB_SIGMA_BLUE_NM: f64 = 30.0;
    pub const PSB_SIGMA_RED_NM: f64 = 55.0;
    pub const SUPPORT_NM: [f64; 2] = [600.0, 820.0];
    pub const STEP_NM: f64 = 0.5;
}

impl EmissionSpectrum {
    pub fn new(wavelengths_nm: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.len() != intensity.len() || wavelengths_nm.len() < 2 {
            return Err(validation("spectrum needs at least two (wavelength, intensity) pairs"));
        }
        if wavelengths_nm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(validation("spectrum wavelengths must increase strictly"));
        }
        if intensity.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(validation("spectrum intensities must be finite and non-negative"));
        }
        Ok(Self {
            wavelengths_nm,
            intensity,
        })
    }

    /// Room-temperature NV⁻ stand-in: a Gaussian zero-phonon line on top of
    /// an asymmetric Gaussian phonon sideband.
    pub fn nv_default() -> Self {
        let (wl, psb, zpl) = nv_components();
        let intensity = psb.iter().zip(&zpl).map(|(a, b)| a + b).collect();
        Self {
            wavelengths_nm: wl,
            intensity,
        }
    }

    /// Constant intensity over `band`.
    pub fn flat(band: [f64; 2]) -> Self {
        Self {
            wavelengths_nm: band.to_vec(),
            intensity: vec![1.0, 1.0],
        }
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensity
    }

    pub fn support(&self) -> [f64; 2] {
        [self.wavelengths_nm[0], *self.wavelengths_nm.last().expect("non-empty")]
    }

    /// Linear interpolation; `None` outside the support.
    pub fn value(&self, wavelength_nm: f64) -> Option<f64> {
        interp(&self.wavelengths_nm, &self.intensity, wavelength_nm)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            wavelengths_nm: self.wavelengths_nm.clone(),
            intensity: self.intensity.iter().map(|v| v * factor).collect(),
        }
    }

    /// Parses `wavelength_nm, intensity` rows (header optional).
    pub fn from_csv_str(text: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let (mut wl, mut iv) = (Vec::new(), Vec::new());
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| parse_error(path, line + 1, e.to_string()))?;
            if rec.len() < 2 {
                return Err(parse_error(path, line + 1, "expected two columns".into()));
            }
            let (a, b) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    wl.push(a);
                    iv.push(b);
                }
                _ if line == 0 => continue,
                _ => return Err(parse_error(path, line + 1, "non-numeric value".into())),
            }
        }
        Self::new(wl, iv)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&fs::read_to_string(path)?, path)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("wavelength_nm,intensity\n");
        for (w, i) in self.wavelengths_nm.iter().zip(&self.intensity) {
            out.push_str(&format!("{w},{i}\n"));
        }
        out
    }

    /// Content hash of the tabulated values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (w, i) in self.wavelengths_nm.iter().zip(&self.intensity) {
            h.update(w.to_le_bytes());
            h.update(i.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Tabulation grid, phonon sideband and scaled zero-phonon line of the
/// default spectrum.
fn nv_components() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use nv_model::*;
    let n = ((SUPPORT_NM[1] - SUPPORT_NM[0]) / STEP_NM).round() as usize;
    let wl: Vec<f64> = (0..=n).map(|i| SUPPORT_NM[0] + i as f64 * STEP_NM).collect();
    let psb: Vec<f64> = wl
        .iter()
        .map(|&l| {
            let s = if l < PSB_PEAK_NM { PSB_SIGMA_BLUE_NM } else { PSB_SIGMA_RED_NM };
            (-0.5 * ((l - PSB_PEAK_NM) / s).powi(2)).exp()
        })
        .collect();
    let sigma_z = ZPL_FWHM_NM / (8.0 * 2f64.ln()).sqrt();
    let mut zpl: Vec<f64> = wl
        .iter()
        .map(|&l| (-0.5 * ((l - ZPL_NM) / sigma_z).powi(2)).exp())
        .collect();
    let a = ZPL_FRACTION / (1.0 - ZPL_FRACTION) * trapezoid(&wl, &psb) / trapezoid(&wl, &zpl);
    zpl.iter_mut().for_each(|v| *v *= a);
    (wl, psb, zpl)
}

fn parse_error(path: &Path, line: usize, reason: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if x < xs[0] || x > *xs.last()? {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x).min(xs.len() - 1).max(1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    Some(ys[i - 1] + t * (ys[i] - ys[i - 1]))
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Fraction of the emitted power collected within `na`.
pub fn collection_efficiency(ff: &FarField, p_src: f64, na: f64) -> Result<f64> {
    if !(p_src > 0.0) {
        return Err(validation(format!("source power must be positive, got {p_src:e}")));
    }
    clamp_efficiency(ff.flux_in_cone(na)? / p_src)
}

fn clamp_efficiency(eta: f64) -> Result<f64> {
    if eta > 1.0 + EFFICIENCY_TOLERANCE {
        return Err(Error::Consistency(format!(
            "collection efficiency {eta:.4} exceeds 1; power normalisation is broken"
        )));
    }
    if eta > 1.0 {
        warn!("collection efficiency {eta:.5} above 1 within tolerance; clamped");
        return Ok(1.0);
    }
    Ok(eta)
}

/// Spectrum-weighted band average `∫η I dλ / ∫I dλ`, trapezoidal on the union
/// of spectrum and efficiency samples with both interpolated linearly.
pub fn spectrum_weighted_efficiency(
    wavelengths_nm: &[f64],
    eta: &[f64],
    spectrum: &EmissionSpectrum,
    band: [f64; 2],
) -> Result<f64> {
    if wavelengths_nm.len() != eta.len() || wavelengths_nm.len() < 3 {
        return Err(validation("η must be sampled at three or more wavelengths"));
    }
    if wavelengths_nm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(validation("η wavelengths must increase strictly"));
    }
    if wavelengths_nm[0] > band[0] + 1e-9 || *wavelengths_nm.last().unwrap() < band[1] - 1e-9 {
        return Err(validation("η samples do not span the collection band"));
    }
    let [lo, hi] = spectrum.support();
    if band[0] < lo || band[1] > hi {
        return Err(validation(format!(
            "band [{}, {}] nm lies outside the spectrum support [{lo}, {hi}] nm",
            band[0], band[1]
        )));
    }
    let mut nodes: Vec<f64> = spectrum
        .wavelengths_nm()
        .iter()
        .chain(wavelengths_nm)
        .cloned()
        .filter(|&w| w > band[0] && w < band[1])
        .chain(band)
        .collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    nodes.dedup();
    let weight: Vec<f64> = nodes.iter().map(|&w| spectrum.value(w).unwrap_or(0.0)).collect();
    let prod: Vec<f64> = nodes
        .iter()
        .zip(&weight)
        .map(|(&w, i)| interp(wavelengths_nm, eta, w).unwrap_or(0.0) * i)
        .collect();
    let norm = trapezoid(&nodes, &weight);
    if !(norm > 0.0) {
        return Err(validation("spectrum carries no weight inside the band"));
    }
    Ok(trapezoid(&nodes, &prod) / norm)
}

/// Smallest NA collecting 80 % of the NA = 1 value from samples of
/// `(NA, value)`. Between samples the value is taken as linear in
/// `cos θ = √(1 − NA²)`, which is exact for an isotropic pattern.
pub fn na_080(curve: &[(f64, f64)]) -> Result<f64> {
    let (last_na, full) = *curve.last().ok_or_else(|| validation("empty NA curve"))?;
    if (last_na - 1.0).abs() > 1e-9 {
        return Err(validation("NA curve must end at NA = 1"));
    }
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(validation("NA samples must increase strictly"));
    }
    if !(full > 0.0) {
        return Err(Error::Data("NA curve carries no power at NA = 1".into()));
    }
    let tol = 1e-9 * full;
    if curve.windows(2).any(|w| w[1].1 < w[0].1 - tol) {
        return Err(Error::Data("NA curve is not monotone".into()));
    }
    let target = 0.8 * full;
    let i = curve
        .iter()
        .position(|&(_, v)| v >= target)
        .expect("last sample meets the target");
    if i == 0 {
        return Ok(curve[0].0);
    }
    let ((x0, y0), (x1, y1)) = (curve[i - 1], curve[i]);
    let cos = |na: f64| (1.0 - na * na).max(0.0).sqrt();
    let (c0, c1) = (cos(x0), cos(x1));
    let c = c0 + (target - y0) / (y1 - y0) * (c1 - c0);
    Ok((1.0 - c * c).max(0.0).sqrt())
}

/// Bisection form of [`na_080`] for a monotone callable curve on `[0, 1]`.
pub fn na_080_fn(curve: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let full = curve(1.0);
    if !(full > 0.0) {
        return Err(Error::Data("NA curve carries no power at NA = 1".into()));
    }
    let target = 0.8 * full;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if curve(0.0) >= target {
        return Ok(0.0);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if curve(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Default NA sampling of stored curves.
pub fn na_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Efficiencies of one emitter (or an incoherent average) over the band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionResult {
    pub geometry_digest: String,
    pub spectrum_digest: String,
    pub band_nm: [f64; 2],
    pub wavelengths_nm: Vec<f64>,
    /// Number of incoherent dipoles averaged into this result.
    pub dipoles: usize,
    pub na: f64,
    /// `η(λ)` at `na`.
    pub eta: Vec<f64>,
    pub eta_bar: f64,
    pub na_grid: Vec<f64>,
    /// `η(λ, NA)`, index `[λ][NA]`.
    pub eta_na: Vec<Vec<f64>>,
    /// `η̄(NA)` on `na_grid`.
    pub eta_bar_curve: Vec<f64>,
    pub na_080: f64,
    /// Emitted power per wavelength (W·s²), summed over dipoles.
    pub source_power: Vec<f64>,
}

impl CollectionResult {
    /// Builds a result from per-wavelength far fields and source powers.
    pub fn from_far_fields(
        far_fields: &[FarField],
        source_power: &[f64],
        spectrum: &EmissionSpectrum,
        band: [f64; 2],
        na: f64,
        geometry_digest: &str,
    ) -> Result<Self> {
        if far_fields.len() != source_power.len() {
            return Err(validation("one source power per far field is required"));
        }
        let wavelengths_nm: Vec<f64> = far_fields.iter().map(|f| f.wavelength_nm).collect();
        let grid = na_grid();
        let eta_na: Vec<Vec<f64>> = far_fields
            .iter()
            .zip(source_power)
            .map(|(ff, &p)| grid.iter().map(|&a| collection_efficiency(ff, p, a)).collect())
            .collect::<Result<_>>()?;
        Self::assemble(
            geometry_digest.to_string(),
            spectrum,
            band,
            wavelengths_nm,
            1,
            na,
            grid,
            eta_na,
            source_power.to_vec(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        geometry_digest: String,
        spectrum: &EmissionSpectrum,
        band: [f64; 2],
        wavelengths_nm: Vec<f64>,
        dipoles: usize,
        na: f64,
        na_grid: Vec<f64>,
        eta_na: Vec<Vec<f64>>,
        source_power: Vec<f64>,
    ) -> Result<Self> {
        let eta_bar_curve: Vec<f64> = (0..na_grid.len())
            .map(|j| {
                let col: Vec<f64> = eta_na.iter().map(|row| row[j]).collect();
                spectrum_weighted_efficiency(&wavelengths_nm, &col, spectrum, band)
            })
            .collect::<Result<_>>()?;
        let mut out = Self {
            geometry_digest,
            spectrum_digest: spectrum.digest(),
            band_nm: band,
            wavelengths_nm,
            dipoles,
            na,
            eta: Vec::new(),
            eta_bar: 0.0,
            eta_na,
            na_080: na_080(
                &na_grid
                    .iter()
                    .cloned()
                    .zip(eta_bar_curve.iter().cloned())
                    .collect::<Vec<_>>(),
            )?,
            na_grid,
            eta_bar_curve,
            source_power,
        };
        out.set_na(na)?;
        Ok(out)
    }

    /// Re-derives `η(λ)` and `η̄` at another NA from the stored curves.
    pub fn with_na(&self, na: f64) -> Result<Self> {
        let mut out = self.clone();
        out.set_na(na)?;
        Ok(out)
    }

    fn set_na(&mut self, na: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&na) {
            return Err(validation(format!("NA {na} outside [0, 1]")));
        }
        self.na = na;
        self.eta = self
            .eta_na
            .iter()
            .map(|row| interp(&self.na_grid, row, na).expect("NA within grid"))
            .collect();
        self.eta_bar = interp(&self.na_grid, &self.eta_bar_curve, na).expect("NA within grid");
        Ok(())
    }

    pub fn na_curve(&self) -> Vec<(f64, f64)> {
        self.na_grid
            .iter()
            .cloned()
            .zip(self.eta_bar_curve.iter().cloned())
            .collect()
    }
}

/// Equal-weight incoherent average of two results on the same sampling.
pub fn average_dipoles(a: &CollectionResult, b: &CollectionResult) -> Result<CollectionResult> {
    if a.wavelengths_nm != b.wavelengths_nm
        || a.na_grid != b.na_grid
        || a.band_nm != b.band_nm
        || a.spectrum_digest != b.spectrum_digest
        || a.geometry_digest != b.geometry_digest
        || a.na != b.na
    {
        return Err(validation("results differ in geometry, band or sampling"));
    }
    let (wa, wb) = (a.dipoles as f64, b.dipoles as f64);
    let mean = |x: f64, y: f64| (wa * x + wb * y) / (wa + wb);
    let eta_na: Vec<Vec<f64>> = a
        .eta_na
        .iter()
        .zip(&b.eta_na)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| mean(x, y)).collect())
        .collect();
    let eta_bar_curve: Vec<f64> = a
        .eta_bar_curve
        .iter()
        .zip(&b.eta_bar_curve)
        .map(|(&x, &y)| mean(x, y))
        .collect();
    let mut out = CollectionResult {
        geometry_digest: a.geometry_digest.clone(),
        spectrum_digest: a.spectrum_digest.clone(),
        band_nm: a.band_nm,
        wavelengths_nm: a.wavelengths_nm.clone(),
        dipoles: a.dipoles + b.dipoles,
        na: a.na,
        eta: Vec::new(),
        eta_bar: 0.0,
        na_grid: a.na_grid.clone(),
        eta_na,
        na_080: 0.0,
        eta_bar_curve,
        source_power: a
            .source_power
            .iter()
            .zip(&b.source_power)
            .map(|(x, y)| x + y)
            .collect(),
    };
    out.na_080 = na_080(&out.na_curve())?;
    out.set_na(a.na)?;
    Ok(out)
}

/// Solid-angle fraction of a hemisphere inside `na` for an isotropic emitter.
pub fn isotropic_fraction(na: f64) -> f64 {
    1.0 - (1.0 - na * na).max(0.0).sqrt()
}

/// Fraction of a dipole's 4π power inside `na` when the dipole lies along
/// the collection axis.
pub fn axial_dipole_fraction(na: f64) -> f64 {
    let c = (1.0 - na * na).max(0.0).sqrt();
    // 2π ∫₀^θ₀ sin³θ dθ / (8π/3)
    let integral = (1.0 - c) - (1.0 - c * c * c) / 3.0;
    integral * 2.0 * PI / (8.0 * PI / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farfield::AngularGrid;
    use approx::assert_relative_eq;

    #[test]
    fn default_spectrum_shape() {
        let s = EmissionSpectrum::nv_default();
        assert!(s.value(637.0).unwrap() > 0.0 && s.value(800.0).unwrap() > 0.0);
        let [lo, hi] = s.support();
        assert!(lo <= 600.0 && hi >= 820.0);
        let (mut best, mut arg) = (0.0, 0.0);
        for (w, i) in s.wavelengths_nm().iter().zip(s.intensities()) {
            if (650.0..=800.0).contains(w) && *i > best {
                best = *i;
                arg = *w;
            }
        }
        assert!((670.0..=720.0).contains(&arg), "{arg}");
        let (wl, _, zpl) = nv_components();
        let frac = trapezoid(&wl, &zpl) / trapezoid(s.wavelengths_nm(), s.intensities());
        assert_relative_eq!(frac, nv_model::ZPL_FRACTION, epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = EmissionSpectrum::nv_default();
        let back = EmissionSpectrum::from_csv_str(&s.to_csv(), Path::new("mem.csv")).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.digest(), s.digest());
        let err = EmissionSpectrum::from_csv_str("wavelength_nm,intensity\n650,1\n700,x\n", Path::new("bad.csv"));
        assert!(matches!(err, Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn weighted_average_examples() {
        let wl = band_samples(COLLECTION_BAND_NM, 7);
        let nv = EmissionSpectrum::nv_default();
        let c = vec![0.37; 7];
        assert_relative_eq!(
            spectrum_weighted_efficiency(&wl, &c, &nv, COLLECTION_BAND_NM).unwrap(),
            0.37,
            epsilon = 1e-14
        );
        let lin: Vec<f64> = wl.iter().map(|w| 0.2 + 0.001 * (w - 650.0)).collect();
        let flat = EmissionSpectrum::flat([600.0, 820.0]);
        let got = spectrum_weighted_efficiency(&wl, &lin, &flat, COLLECTION_BAND_NM).unwrap();
        assert_relative_eq!(got, 0.5 * (0.2 + 0.35), epsilon = 1e-14);
        let a = spectrum_weighted_efficiency(&wl, &lin, &nv, COLLECTION_BAND_NM).unwrap();
        let b = spectrum_weighted_efficiency(&wl, &lin, &nv.scaled(7.0), COLLECTION_BAND_NM).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-14);
        let narrow = EmissionSpectrum::flat([660.0, 820.0]);
        assert!(spectrum_weighted_efficiency(&wl, &lin, &narrow, COLLECTION_BAND_NM).is_err());
        assert!(spectrum_weighted_efficiency(&wl[..2], &lin[..2], &nv, COLLECTION_BAND_NM).is_err());
    }

    #[test]
    fn efficiency_bounds() {
        let g = AngularGrid::default();
        let ff = FarField::isotropic(700.0, 0.5, &g).unwrap();
        assert_relative_eq!(collection_efficiency(&ff, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(collection_efficiency(&ff, 1.0, 0.0).unwrap(), 0.0);
        assert!(collection_efficiency(&ff, 0.0, 0.5).is_err());
        assert_eq!(collection_efficiency(&ff, 0.495, 1.0).unwrap(), 1.0);
        assert!(matches!(
            collection_efficiency(&ff, 0.45, 1.0),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn na_080_examples() {
        let iso: Vec<(f64, f64)> = na_grid().into_iter().map(|a| (a, isotropic_fraction(a))).collect();
        assert!((na_080(&iso).unwrap() - 0.96f64.sqrt()).abs() < 1e-12);
        let exact = na_080_fn(isotropic_fraction, 1e-12).unwrap();
        assert!((exact - 0.96f64.sqrt()).abs() < 1e-9);
        let step = |a: f64| if a >= 0.3 { 1.0 } else { 0.0 };
        assert!((na_080_fn(step, 1e-12).unwrap() - 0.3).abs() < 1e-9);
        let bumpy = vec![(0.0, 0.0), (0.5, 0.8), (0.7, 0.5), (1.0, 1.0)];
        assert!(matches!(na_080(&bumpy), Err(Error::Data(_))));
        assert!(na_080(&[(0.0, 0.0), (0.9, 1.0)]).is_err());
    }

    #[test]
    fn axial_fraction_oracle() {
        assert!((axial_dipole_fraction(0.75) - 0.0763).abs() < 5e-5);
    }

    fn dummy(eta: f64) -> CollectionResult {
        let g = AngularGrid::default();
        let wl = band_samples(COLLECTION_BAND_NM, 7);
        let ffs: Vec<FarField> = wl
            .iter()
            .map(|&w| FarField::isotropic(w, eta, &g).unwrap())
            .collect();
        CollectionResult::from_far_fields(
            &ffs,
            &[1.0; 7],
            &EmissionSpectrum::nv_default(),
            COLLECTION_BAND_NM,
            0.75,
            "g",
        )
        .unwrap()
    }

    #[test]
    fn dipole_average() {
        let a = dummy(0.4);
        let b = dummy(0.6);
        assert_eq!(average_dipoles(&a, &a).unwrap().eta, a.eta);
        let m = average_dipoles(&a, &b).unwrap();
        assert_relative_eq!(m.eta_bar_curve[100], 0.5, epsilon = 1e-12);
        assert_eq!(m.dipoles, 2);
        let mut c = dummy(0.5);
        c.wavelengths_nm[0] = 640.0;
        assert!(average_dipoles(&a, &c).is_err());
        let r = a.with_na(1.0).unwrap();
        assert_relative_eq!(r.eta_bar, 0.4, epsilon = 1e-12);
        assert!(r.eta_bar <= 1.0 && a.eta_bar <= r.eta_bar);
    }
}
