//! Measured-data analysis: saturation fits, readout SNR, efficiency
//! calibration and photon antibunching.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub mod calibration;
pub mod g2;
pub mod saturation;
pub mod snr;

pub use calibration::{eta_vs_iinf_fit, CalibrationPoint, LinearFit};
pub use g2::{is_single_emitter, G2Histogram, G2Verdict};
pub use saturation::{fit_saturation, saturation_model, SaturationData, SaturationFit, SaturationPoint};
pub use snr::{alpha0_for_snr, scale_alpha0, snr, snr_landscape, SnrGrid, SnrPoint};

/// Reads rows of `min..=max` numeric columns. A non-numeric first row is
/// taken as a header; `#` starts a comment.
pub(crate) fn read_numeric_csv(path: &Path, min: usize, max: usize) -> Result<Vec<Vec<f64>>> {
    parse_numeric_csv(&fs::read_to_string(path)?, path, min, max)
}

pub(crate) fn parse_numeric_csv(text: &str, path: &Path, min: usize, max: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut rows = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(i + 1, e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = match vals {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(err(line, format!("non-numeric value: {e}"))),
        };
        if vals.len() < min || vals.len() > max {
            return Err(err(line, format!("expected {min} to {max} columns, found {}", vals.len())));
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(err(line, "inconsistent column count".into()));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err(line, "non-finite value".into()));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(err(0, "no data rows".into()));
    }
    Ok(rows)
}
