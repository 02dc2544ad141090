//! Periodic time-domain slice dumps (little-endian f32 raw + JSON sidecar).

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::geometry::write_f32_raw;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    /// Electric field component 0..3 (V/m).
    E(usize),
    /// Magnetic field component 0..3 in normalised units (`η₀·H`).
    H(usize),
}

impl Component {
    fn label(&self) -> String {
        let axis = |c: usize| ["x", "y", "z"][c];
        match *self {
            Component::E(c) => format!("E{}", axis(c)),
            Component::H(c) => format!("H{}", axis(c)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceDump {
    pub component: Component,
    /// Normal axis of the slice.
    pub axis: usize,
    pub index: usize,
    pub every: usize,
    pub dir: PathBuf,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    component: &'a str,
    axis: usize,
    index: usize,
    step: usize,
    dims: [usize; 2],
    dtype: &'a str,
    order: &'a str,
}

impl SliceDump {
    pub(crate) fn validate(&self, dims: [usize; 3]) -> Result<()> {
        let c = match self.component {
            Component::E(c) | Component::H(c) => c,
        };
        if c > 2 || self.axis > 2 || self.index >= dims[self.axis.min(2)] || self.every == 0 {
            return Err(validation("invalid slice dump specification"));
        }
        Ok(())
    }

    /// Extracts the slice from a full field array.
    pub fn extract(&self, dims: [usize; 3], field: &[f32]) -> (Vec<f32>, [usize; 2]) {
        let (u, v) = match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut out = Vec::with_capacity(dims[u] * dims[v]);
        for y in 0..dims[v] {
            for x in 0..dims[u] {
                let mut c = [0usize; 3];
                c[self.axis] = self.index;
                c[u] = x;
                c[v] = y;
                out.push(field[c[0] + dims[0] * (c[1] + dims[1] * c[2])]);
            }
        }
        (out, [dims[u], dims[v]])
    }

    pub(crate) fn write(&self, step: usize, dims: [usize; 3], field: &[f32]) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let label = self.component.label();
        let stem = format!("{label}_{}{}_{step:07}", ["x", "y", "z"][self.axis], self.index);
        let (data, sdims) = self.extract(dims, field);
        let raw = self.dir.join(format!("{stem}.raw"));
        write_f32_raw(&raw, &data)?;
        let side = Sidecar {
            component: &label,
            axis: self.axis,
            index: self.index,
            step,
            dims: sdims,
            dtype: "float32-le",
            order: "first-fastest",
        };
        fs::write(raw.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_z_slice_in_x_fastest_order() {
        let dims = [3, 2, 2];
        let field: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let d = SliceDump {
            component: Component::E(0),
            axis: 2,
            index: 1,
            every: 1,
            dir: PathBuf::new(),
        };
        let (s, sd) = d.extract(dims, &field);
        assert_eq!(sd, [3, 2]);
        assert_eq!(s, vec![6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }
}
