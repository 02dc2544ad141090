//! Pillar geometry: stacked conical frusta on a substrate slab, and their
//! rasterisation onto a cell-centred permittivity grid.
//!
//! Device coordinates are in nanometres with the pillar axis along `z`, the
//! facet at `z = 0` and the pillar extending towards negative `z`. The
//! substrate slab sits directly below the pillar base and extends laterally
//! across the whole simulation domain.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

pub const DIAMOND_INDEX: f64 = 2.4;
pub const DEFAULT_EMITTER_DEPTH_NM: f64 = 5.0;

/// One frustum of the stack, listed facet first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSegment {
    #[serde(rename = "h_um")]
    pub height_um: f64,
    /// Angle between the sidewall and the substrate plane; 90 is a vertical wall.
    #[serde(rename = "angle_deg")]
    pub sidewall_angle_deg: f64,
}

impl ConeSegment {
    pub fn new(height_um: f64, sidewall_angle_deg: f64) -> Result<Self> {
        let seg = Self {
            height_um,
            sidewall_angle_deg,
        };
        seg.validate()?;
        Ok(seg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.height_um > 0.0) || !self.height_um.is_finite() {
            return Err(validation(format!(
                "segment height must be positive, got {} um",
                self.height_um
            )));
        }
        check_angle(self.sidewall_angle_deg)
    }

    pub fn height_nm(&self) -> f64 {
        self.height_um * 1000.0
    }

    /// Radius gained from the top of the segment to its base.
    pub fn widening_nm(&self) -> f64 {
        self.height_nm() * cot_deg(self.sidewall_angle_deg)
    }
}

fn check_angle(angle_deg: f64) -> Result<()> {
    if !(angle_deg > 0.0 && angle_deg <= 90.0) {
        return Err(validation(format!(
            "sidewall angle must lie in (0, 90] degrees, got {angle_deg}"
        )));
    }
    Ok(())
}

fn cot_deg(angle_deg: f64) -> f64 {
    if angle_deg == 90.0 {
        0.0
    } else {
        1.0 / angle_deg.to_radians().tan()
    }
}

/// `R_mid = R_top + H2 cot(phi)` for the facet-side segment of a multicone.
pub fn rmid_from_angle(r_top_nm: f64, h2_um: f64, phi_deg: f64) -> Result<f64> {
    check_angle(phi_deg)?;
    Ok(r_top_nm + h2_um * 1000.0 * cot_deg(phi_deg))
}

/// Inverse of [`rmid_from_angle`].
pub fn angle_from_rmid(r_top_nm: f64, h2_um: f64, r_mid_nm: f64) -> Result<f64> {
    if r_mid_nm < r_top_nm {
        return Err(validation(format!(
            "R_mid ({r_mid_nm} nm) below R_top ({r_top_nm} nm) would need an overhanging sidewall"
        )));
    }
    if !(h2_um > 0.0) {
        return Err(validation("H2 must be positive"));
    }
    let widening = r_mid_nm - r_top_nm;
    if widening == 0.0 {
        return Ok(90.0);
    }
    Ok((h2_um * 1000.0 / widening).atan().to_degrees())
}

/// Internal critical angle for total internal reflection, degrees.
pub fn critical_angle_deg(n_inside: f64, n_outside: f64) -> Result<f64> {
    if !(n_inside > n_outside && n_outside > 0.0) {
        return Err(validation(format!(
            "no total internal reflection from n={n_inside} into n={n_outside}"
        )));
    }
    Ok((n_outside / n_inside).asin().to_degrees())
}

/// JSON form of a [`PillarGeometry`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryDocument {
    pub r_top_nm: f64,
    pub segments: Vec<ConeSegment>,
    pub substrate_um: f64,
    #[serde(default = "default_index")]
    pub n_d: f64,
    #[serde(default = "default_depth")]
    pub d_nm: f64,
    #[serde(default)]
    pub delta_nm: f64,
}

fn default_index() -> f64 {
    DIAMOND_INDEX
}

fn default_depth() -> f64 {
    DEFAULT_EMITTER_DEPTH_NM
}

/// Validated pillar description. The base radius is always derived from the
/// top radius and the segment stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryDocument", into = "GeometryDocument")]
pub struct PillarGeometry {
    top_radius_nm: f64,
    segments: Vec<ConeSegment>,
    substrate_um: f64,
    refractive_index: f64,
    emitter_depth_nm: f64,
    emitter_offset_nm: f64,
}

impl TryFrom<GeometryDocument> for PillarGeometry {
    type Error = Error;

    fn try_from(doc: GeometryDocument) -> Result<Self> {
        PillarGeometry::new(doc.r_top_nm, doc.segments, doc.substrate_um, doc.n_d)?
            .with_emitter(doc.d_nm, doc.delta_nm)
    }
}

impl From<PillarGeometry> for GeometryDocument {
    fn from(g: PillarGeometry) -> Self {
        GeometryDocument {
            r_top_nm: g.top_radius_nm,
            segments: g.segments,
            substrate_um: g.substrate_um,
            n_d: g.refractive_index,
            d_nm: g.emitter_depth_nm,
            delta_nm: g.emitter_offset_nm,
        }
    }
}

impl PillarGeometry {
    /// Builds a pillar from its facet radius and the segment stack (facet
    /// first). The emitter defaults to 5 nm below the facet on the axis.
    pub fn new(
        top_radius_nm: f64,
        segments: Vec<ConeSegment>,
        substrate_um: f64,
        refractive_index: f64,
    ) -> Result<Self> {
        if !(top_radius_nm > 0.0) || !top_radius_nm.is_finite() {
            return Err(validation(format!(
                "top radius must be positive, got {top_radius_nm} nm"
            )));
        }
        if segments.is_empty() {
            return Err(validation("a pillar needs at least one segment"));
        }
        for seg in &segments {
            seg.validate()?;
        }
        if !(substrate_um > 0.0) || !substrate_um.is_finite() {
            return Err(validation(format!(
                "substrate thickness must be positive, got {substrate_um} um"
            )));
        }
        if !(refractive_index > 1.0) || !refractive_index.is_finite() {
            return Err(validation(format!(
                "refractive index must exceed 1, got {refractive_index}"
            )));
        }
        let geom = Self {
            top_radius_nm,
            segments,
            substrate_um,
            refractive_index,
            emitter_depth_nm: DEFAULT_EMITTER_DEPTH_NM,
            emitter_offset_nm: 0.0,
        };
        geom.with_emitter(DEFAULT_EMITTER_DEPTH_NM, 0.0)
    }

    pub fn single_cone(top_radius_nm: f64, height_um: f64, angle_deg: f64) -> Result<Self> {
        Self::new(
            top_radius_nm,
            vec![ConeSegment::new(height_um, angle_deg)?],
            2.0,
            DIAMOND_INDEX,
        )
    }

    pub fn cylinder(radius_nm: f64, height_um: f64) -> Result<Self> {
        Self::single_cone(radius_nm, height_um, 90.0)
    }

    /// Two-segment device: a facet-side segment (`h2_um` at `phi_deg`) above
    /// a base segment (`h1_um` at `theta_deg`).
    pub fn multicone(
        top_radius_nm: f64,
        h2_um: f64,
        phi_deg: f64,
        h1_um: f64,
        theta_deg: f64,
    ) -> Result<Self> {
        Self::new(
            top_radius_nm,
            vec![
                ConeSegment::new(h2_um, phi_deg)?,
                ConeSegment::new(h1_um, theta_deg)?,
            ],
            2.0,
            DIAMOND_INDEX,
        )
    }

    /// Places the emitter `depth_nm` below the facet and `offset_nm` off axis
    /// (along `x`).
    pub fn with_emitter(mut self, depth_nm: f64, offset_nm: f64) -> Result<Self> {
        if !(depth_nm >= 0.0) || depth_nm >= self.segments[0].height_nm() {
            return Err(validation(format!(
                "emitter depth {depth_nm} nm must lie within the first segment ({} nm)",
                self.segments[0].height_nm()
            )));
        }
        let r = self.radius_at_depth(depth_nm).unwrap_or(self.top_radius_nm);
        if !(offset_nm.abs() < r) {
            return Err(validation(format!(
                "emitter offset {offset_nm} nm lies outside the pillar (radius {r} nm at its depth)"
            )));
        }
        self.emitter_depth_nm = depth_nm;
        self.emitter_offset_nm = offset_nm;
        Ok(self)
    }

    pub fn with_substrate_um(mut self, substrate_um: f64) -> Result<Self> {
        if !(substrate_um > 0.0) {
            return Err(validation("substrate thickness must be positive"));
        }
        self.substrate_um = substrate_um;
        Ok(self)
    }

    pub fn top_radius_nm(&self) -> f64 {
        self.top_radius_nm
    }

    pub fn segments(&self) -> &[ConeSegment] {
        &self.segments
    }

    pub fn substrate_um(&self) -> f64 {
        self.substrate_um
    }

    pub fn refractive_index(&self) -> f64 {
        self.refractive_index
    }

    pub fn emitter_depth_nm(&self) -> f64 {
        self.emitter_depth_nm
    }

    pub fn emitter_offset_nm(&self) -> f64 {
        self.emitter_offset_nm
    }

    pub fn total_height_nm(&self) -> f64 {
        self.segments.iter().map(ConeSegment::height_nm).sum()
    }

    pub fn base_radius_nm(&self) -> f64 {
        self.top_radius_nm + self.segments.iter().map(ConeSegment::widening_nm).sum::<f64>()
    }

    /// Radius at the first internal segment boundary, if there is one.
    pub fn mid_radius_nm(&self) -> Option<f64> {
        (self.segments.len() > 1).then(|| self.top_radius_nm + self.segments[0].widening_nm())
    }

    /// Radius at `depth_nm` below the facet, for depths within `[0, H]`.
    pub fn radius_at_depth(&self, depth_nm: f64) -> Option<f64> {
        if !(0.0..=self.total_height_nm()).contains(&depth_nm) {
            return None;
        }
        let mut top = 0.0;
        let mut radius = self.top_radius_nm;
        for seg in &self.segments {
            let h = seg.height_nm();
            if depth_nm <= top + h {
                return Some(radius + (depth_nm - top) * cot_deg(seg.sidewall_angle_deg));
            }
            top += h;
            radius += seg.widening_nm();
        }
        Some(radius)
    }

    /// Base radius over top radius.
    pub fn expansion_factor(&self) -> f64 {
        self.base_radius_nm() / self.top_radius_nm
    }

    /// Emitter position in device coordinates (nm).
    pub fn emitter_position_nm(&self) -> [f64; 3] {
        [self.emitter_offset_nm, 0.0, -self.emitter_depth_nm]
    }

    /// Solid bodies in device coordinates: one frustum per segment plus the
    /// substrate slab below the base.
    pub fn bodies(&self) -> Vec<Body> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut z_top = 0.0;
        let mut r_top = self.top_radius_nm;
        for seg in &self.segments {
            let z_bottom = z_top - seg.height_nm();
            let r_bottom = r_top + seg.widening_nm();
            out.push(Body::Frustum {
                z_bottom,
                z_top,
                r_bottom,
                r_top,
            });
            z_top = z_bottom;
            r_top = r_bottom;
        }
        out.push(Body::Slab {
            z_bottom: z_top - self.substrate_um * 1000.0,
            z_top,
        });
        out
    }

    /// Analytic volume of the pillar (excluding substrate), nm^3.
    pub fn pillar_volume_nm3(&self) -> f64 {
        self.bodies()
            .iter()
            .map(|b| match *b {
                Body::Frustum {
                    z_bottom,
                    z_top,
                    r_bottom,
                    r_top,
                } => {
                    std::f64::consts::PI * (z_top - z_bottom) / 3.0
                        * (r_top * r_top + r_top * r_bottom + r_bottom * r_bottom)
                }
                Body::Slab { .. } => 0.0,
            })
            .sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("geometry serialises")
    }
}

/// Solid region filled with the pillar material, device coordinates (nm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Body {
    /// Axisymmetric frustum about the `z` axis.
    Frustum {
        z_bottom: f64,
        z_top: f64,
        r_bottom: f64,
        r_top: f64,
    },
    /// Laterally unbounded slab.
    Slab { z_bottom: f64, z_top: f64 },
}

impl Body {
    fn z_range(&self) -> (f64, f64) {
        match *self {
            Body::Frustum { z_bottom, z_top, .. } | Body::Slab { z_bottom, z_top } => {
                (z_bottom, z_top)
            }
        }
    }
}

/// Padding around the geometry when building a simulation domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainLayout {
    pub cell_nm: f64,
    pub pml_cells: usize,
    /// Clearance between the widest part of the pillar and the lateral PML.
    pub lateral_margin_nm: f64,
    /// Air between the facet and the top PML.
    pub air_above_nm: f64,
    /// Air between the substrate bottom and the far-field monitor plane.
    pub gap_below_nm: f64,
    /// Air between the monitor plane and the bottom PML.
    pub air_below_nm: f64,
}

impl DomainLayout {
    pub fn for_cell(cell_nm: f64) -> Self {
        Self {
            cell_nm,
            pml_cells: 10,
            lateral_margin_nm: 300.0,
            air_above_nm: 200.0,
            gap_below_nm: 100.0,
            air_below_nm: 3.0 * cell_nm,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.cell_nm > 0.0) {
            return Err(validation("cell size must be positive"));
        }
        let c = self.cell_nm;
        if self.lateral_margin_nm < 2.0 * c {
            return Err(Error::Configuration(format!(
                "lateral margin {} nm leaves fewer than two free cells beside the pillar",
                self.lateral_margin_nm
            )));
        }
        if self.air_above_nm < 2.0 * c || self.gap_below_nm < 2.0 * c || self.air_below_nm < c {
            return Err(Error::Configuration(
                "domain padding above/below the device is smaller than two cells".into(),
            ));
        }
        Ok(())
    }

    /// Cells on each side of the axis (including PML); always yields an even
    /// lateral count so the axis falls on a cell boundary.
    fn half_cells(&self, geom: &PillarGeometry) -> usize {
        let half = geom.base_radius_nm() + self.lateral_margin_nm;
        (half / self.cell_nm).ceil() as usize + self.pml_cells
    }

    fn cells_below_facet(&self, geom: &PillarGeometry) -> usize {
        let depth = geom.total_height_nm()
            + geom.substrate_um() * 1000.0
            + self.gap_below_nm
            + self.air_below_nm;
        (depth / self.cell_nm).ceil() as usize + self.pml_cells
    }

    fn cells_above_facet(&self) -> usize {
        (self.air_above_nm / self.cell_nm).ceil() as usize + self.pml_cells
    }

    pub fn dims(&self, geom: &PillarGeometry) -> [usize; 3] {
        let n = 2 * self.half_cells(geom);
        [n, n, self.cells_below_facet(geom) + self.cells_above_facet()]
    }

    pub fn origin_nm(&self, geom: &PillarGeometry) -> [f64; 3] {
        let half = self.half_cells(geom) as f64 * self.cell_nm;
        [
            -half,
            -half,
            -(self.cells_below_facet(geom) as f64) * self.cell_nm,
        ]
    }

    /// `z` of the far-field monitor plane, snapped to a grid plane.
    pub fn monitor_z_nm(&self, geom: &PillarGeometry) -> f64 {
        let z_sub_bottom = -(geom.total_height_nm() + geom.substrate_um() * 1000.0);
        let target = z_sub_bottom - self.gap_below_nm;
        let origin = self.origin_nm(geom)[2];
        origin + ((target - origin) / self.cell_nm).round() * self.cell_nm
    }
}

/// Cell-centred relative permittivity on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PermittivityGrid {
    cell_nm: f64,
    dims: [usize; 3],
    /// Device coordinates of the grid's lower corner.
    origin_nm: [f64; 3],
    eps: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridSidecar {
    dims: [usize; 3],
    cell_nm: f64,
    origin_nm: [f64; 3],
    dtype: String,
    order: String,
}

impl PermittivityGrid {
    pub fn uniform(dims: [usize; 3], cell_nm: f64, origin_nm: [f64; 3], eps: f64) -> Self {
        Self {
            cell_nm,
            dims,
            origin_nm,
            eps: vec![eps as f32; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Grid filled from a per-cell function of the cell-centre position (nm).
    pub fn from_fn(
        dims: [usize; 3],
        cell_nm: f64,
        origin_nm: [f64; 3],
        f: impl Fn([f64; 3]) -> f64,
    ) -> Self {
        let mut grid = Self::uniform(dims, cell_nm, origin_nm, 1.0);
        let [nx, ny, _] = dims;
        for (idx, v) in grid.eps.iter_mut().enumerate() {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            let p = [
                origin_nm[0] + (i as f64 + 0.5) * cell_nm,
                origin_nm[1] + (j as f64 + 0.5) * cell_nm,
                origin_nm[2] + (k as f64 + 0.5) * cell_nm,
            ];
            *v = f(p) as f32;
        }
        grid
    }

    pub fn cell_nm(&self) -> f64 {
        self.cell_nm
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin_nm(&self) -> [f64; 3] {
        self.origin_nm
    }

    pub fn values(&self) -> &[f32] {
        &self.eps
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.eps[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// Number of grid cells, weighted by material fraction, filled with `eps_inside`.
    pub fn filled_volume_nm3(&self, eps_inside: f64) -> f64 {
        let cell = self.cell_nm.powi(3);
        self.eps
            .iter()
            .map(|&e| (e as f64 - 1.0) / (eps_inside - 1.0) * cell)
            .sum()
    }

    /// Writes little-endian float32 values (x fastest) plus a JSON sidecar
    /// at `<stem>.json`.
    pub fn write_raw(&self, raw_path: &Path) -> Result<()> {
        write_f32_raw(raw_path, &self.eps)?;
        let sidecar = GridSidecar {
            dims: self.dims,
            cell_nm: self.cell_nm,
            origin_nm: self.origin_nm,
            dtype: "float32-le".into(),
            order: "x-fastest".into(),
        };
        fs::write(
            raw_path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn read_raw(raw_path: &Path) -> Result<Self> {
        let sidecar: GridSidecar =
            serde_json::from_str(&fs::read_to_string(raw_path.with_extension("json"))?)?;
        let bytes = fs::read(raw_path)?;
        let n = sidecar.dims.iter().product::<usize>();
        if bytes.len() != 4 * n {
            return Err(Error::Data(format!(
                "{} holds {} bytes, sidecar expects {}",
                raw_path.display(),
                bytes.len(),
                4 * n
            )));
        }
        let eps = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            cell_nm: sidecar.cell_nm,
            dims: sidecar.dims,
            origin_nm: sidecar.origin_nm,
            eps,
        })
    }
}

pub(crate) fn write_f32_raw(path: &Path, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Supersamples per cell edge for boundary cells.
const SUBSAMPLES_XY: i64 = 16;
const SUBSAMPLES_Z: usize = 4;

/// Rasterises `geom` with the default padding for `cell_nm`.
pub fn rasterize(geom: &PillarGeometry, cell_nm: f64) -> Result<PermittivityGrid> {
    rasterize_with(geom, &DomainLayout::for_cell(cell_nm))
}

pub fn rasterize_with(geom: &PillarGeometry, layout: &DomainLayout) -> Result<PermittivityGrid> {
    layout.validate()?;
    let eps = geom.refractive_index().powi(2);
    Ok(rasterize_bodies(
        &geom.bodies(),
        eps,
        layout.cell_nm,
        layout.dims(geom),
        layout.origin_nm(geom),
    ))
}

/// Volume-fraction rasterisation of `bodies` (filled with `eps_inside`,
/// vacuum elsewhere). Lateral origins must centre the grid on the axis for
/// the mirror symmetry of the result to be exact.
pub fn rasterize_bodies(
    bodies: &[Body],
    eps_inside: f64,
    cell_nm: f64,
    dims: [usize; 3],
    origin_nm: [f64; 3],
) -> PermittivityGrid {
    let [nx, ny, _] = dims;
    let mut grid = PermittivityGrid::uniform(dims, cell_nm, origin_nm, 1.0);
    // Offsets of the lateral origin in whole cells, for integer sample coordinates.
    let ox = (origin_nm[0] / cell_nm).round() as i64;
    let oy = (origin_nm[1] / cell_nm).round() as i64;
    grid.eps
        .par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(k, plane)| {
            let z0 = origin_nm[2] + k as f64 * cell_nm;
            let z1 = z0 + cell_nm;
            for j in 0..ny {
                for i in 0..nx {
                    let cell = CellBox {
                        ix: i as i64 + ox,
                        iy: j as i64 + oy,
                        z0,
                        z1,
                        size: cell_nm,
                    };
                    let frac: f64 = bodies.iter().map(|b| cell.fraction_inside(b)).sum();
                    let frac = frac.min(1.0);
                    plane[i + nx * j] = (1.0 + frac * (eps_inside - 1.0)) as f32;
                }
            }
        });
    grid
}

struct CellBox {
    /// Lateral cell index relative to the axis (cell spans `ix..ix+1` cells).
    ix: i64,
    iy: i64,
    z0: f64,
    z1: f64,
    size: f64,
}

impl CellBox {
    fn fraction_inside(&self, body: &Body) -> f64 {
        let (zb, zt) = body.z_range();
        let lo = self.z0.max(zb);
        let hi = self.z1.min(zt);
        if hi <= lo {
            return 0.0;
        }
        let z_frac = (hi - lo) / self.size;
        match *body {
            Body::Slab { .. } => z_frac,
            Body::Frustum {
                z_bottom,
                z_top,
                r_bottom,
                r_top,
            } => {
                let mut area = 0.0;
                for s in 0..SUBSAMPLES_Z {
                    let z = lo + (s as f64 + 0.5) / SUBSAMPLES_Z as f64 * (hi - lo);
                    let t = (z_top - z) / (z_top - z_bottom);
                    let r = r_top + t * (r_bottom - r_top);
                    area += self.disk_fraction(r);
                }
                z_frac * area / SUBSAMPLES_Z as f64
            }
        }
    }

    /// Fraction of the cell's lateral square inside the disk of radius `r`.
    fn disk_fraction(&self, r: f64) -> f64 {
        let c = self.size;
        let (x0, x1) = (self.ix as f64 * c, (self.ix + 1) as f64 * c);
        let (y0, y1) = (self.iy as f64 * c, (self.iy + 1) as f64 * c);
        let near = |a: f64, b: f64| if a > 0.0 { a } else if b < 0.0 { -b } else { 0.0 };
        let far = |a: f64, b: f64| a.abs().max(b.abs());
        let (nx, ny) = (near(x0, x1), near(y0, y1));
        if nx * nx + ny * ny >= r * r {
            return 0.0;
        }
        let (fx, fy) = (far(x0, x1), far(y0, y1));
        if fx * fx + fy * fy <= r * r {
            return 1.0;
        }
        // Sample coordinates as odd integers in units of c/(2n): exact under negation.
        let n = SUBSAMPLES_XY;
        let unit = c / (2 * n) as f64;
        let r2 = (r / unit) * (r / unit);
        let mut inside = 0usize;
        for sy in 0..n {
            let y = (2 * n * self.iy + 2 * sy + 1) as f64;
            for sx in 0..n {
                let x = (2 * n * self.ix + 2 * sx + 1) as f64;
                if x * x + y * y <= r2 {
                    inside += 1;
                }
            }
        }
        inside as f64 / (n * n) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_cone_base_radius() {
        let g = PillarGeometry::single_cone(150.0, 5.0, 80.0).unwrap();
        // 150 + 5000 cot 80
        assert_relative_eq!(g.base_radius_nm(), 1031.6349, epsilon = 1e-3);
        assert_eq!(g.mid_radius_nm(), None);
    }

    #[test]
    fn cylinder_has_unit_expansion() {
        let g = PillarGeometry::cylinder(150.0, 5.0).unwrap();
        assert_eq!(g.base_radius_nm(), 150.0);
        assert_eq!(g.expansion_factor(), 1.0);
    }

    #[test]
    fn multicone_mid_radius() {
        let g = PillarGeometry::multicone(150.0, 0.5, 51.0, 4.5, 80.0).unwrap();
        assert_relative_eq!(g.mid_radius_nm().unwrap(), 554.89, epsilon = 0.01);
        assert_relative_eq!(g.expansion_factor(), 8.9894, epsilon = 1e-3);
    }

    #[test]
    fn rmid_examples() {
        assert_eq!(rmid_from_angle(150.0, 0.5, 90.0).unwrap(), 150.0);
        assert_relative_eq!(rmid_from_angle(150.0, 0.5, 51.0).unwrap(), 554.89, epsilon = 0.01);
        assert_relative_eq!(rmid_from_angle(150.0, 0.5, 80.0).unwrap(), 238.16, epsilon = 0.01);
        assert!(rmid_from_angle(150.0, 0.5, 0.0).is_err());
        assert!(rmid_from_angle(150.0, 0.5, 90.5).is_err());
        let phi = angle_from_rmid(150.0, 0.5, 554.89).unwrap();
        assert_relative_eq!(phi, 51.0, epsilon = 1e-3);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(ConeSegment::new(0.0, 80.0).is_err());
        assert!(ConeSegment::new(1.0, 0.0).is_err());
        assert!(ConeSegment::new(1.0, 91.0).is_err());
        assert!(PillarGeometry::single_cone(-1.0, 1.0, 80.0).is_err());
        let seg = vec![ConeSegment::new(1.0, 80.0).unwrap()];
        assert!(PillarGeometry::new(150.0, seg.clone(), 2.0, 1.0).is_err());
        assert!(PillarGeometry::new(150.0, seg.clone(), 0.0, 2.4).is_err());
        assert!(PillarGeometry::new(150.0, vec![], 2.0, 2.4).is_err());
        let g = PillarGeometry::new(150.0, seg, 2.0, 2.4).unwrap();
        assert!(g.clone().with_emitter(1000.0, 0.0).is_err());
        assert!(g.clone().with_emitter(5.0, 151.0).is_err());
        assert!(g.with_emitter(5.0, 100.0).is_ok());
    }

    #[test]
    fn json_document_round_trip() {
        let text = r#"{"r_top_nm":150,"segments":[{"h_um":0.5,"angle_deg":51},{"h_um":4.5,"angle_deg":80}],"substrate_um":2.0,"n_d":2.4,"d_nm":5,"delta_nm":0}"#;
        let g = PillarGeometry::from_json(text).unwrap();
        assert_eq!(g.segments().len(), 2);
        assert_eq!(g.emitter_depth_nm(), 5.0);
        let back = PillarGeometry::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"r_top_nm":150,"segments":[{"h_um":0.5,"angle_deg":120}],"substrate_um":2.0}"#;
        assert!(PillarGeometry::from_json(bad).is_err());
    }

    #[test]
    fn critical_angle_of_diamond() {
        assert_relative_eq!(critical_angle_deg(2.4, 1.0).unwrap(), 24.624, epsilon = 1e-3);
        assert!(critical_angle_deg(1.0, 2.4).is_err());
    }

    #[test]
    fn rasterized_disk_area() {
        let bodies = [Body::Frustum {
            z_bottom: -100.0,
            z_top: 100.0,
            r_bottom: 150.0,
            r_top: 150.0,
        }];
        let grid = rasterize_bodies(&bodies, 5.76, 10.0, [40, 40, 2], [-200.0, -200.0, -10.0]);
        let area: f64 = (0..40)
            .flat_map(|j| (0..40).map(move |i| (i, j)))
            .map(|(i, j)| (grid.get(i, j, 0) as f64 - 1.0) / 4.76 * 100.0)
            .sum();
        let exact = std::f64::consts::PI * 150.0 * 150.0;
        assert!((area - exact).abs() / exact < 0.02, "area {area} vs {exact}");
    }

    #[test]
    fn vacuum_rasterizes_to_ones() {
        let grid = rasterize_bodies(&[], 5.76, 10.0, [8, 8, 8], [-40.0, -40.0, 0.0]);
        assert!(grid.values().iter().all(|&e| e == 1.0));
    }

    #[test]
    fn rasterization_is_deterministic_and_mirror_symmetric() {
        let g = PillarGeometry::multicone(150.0, 0.2, 51.0, 0.3, 80.0)
            .unwrap()
            .with_substrate_um(0.1)
            .unwrap();
        let a = rasterize(&g, 20.0).unwrap();
        let b = rasterize(&g, 20.0).unwrap();
        assert_eq!(a, b);
        let [nx, ny, nz] = a.dims();
        assert_eq!(nx % 2, 0);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = a.get(i, j, k);
                    assert_eq!(v, a.get(nx - 1 - i, j, k));
                    assert_eq!(v, a.get(i, ny - 1 - j, k));
                    assert_eq!(v, a.get(j, i, k));
                    assert!((1.0..=5.76f32 + 1e-6).contains(&v));
                }
            }
        }
    }

    #[test]
    fn frustum_volume_converges_with_resolution() {
        let g = PillarGeometry::single_cone(150.0, 0.6, 70.0)
            .unwrap()
            .with_substrate_um(0.04)
            .unwrap();
        let exact = g.pillar_volume_nm3();
        let substrate_slab = |grid: &PermittivityGrid| {
            let [nx, ny, _] = grid.dims();
            (nx * ny) as f64 * grid.cell_nm().powi(2) * 40.0
        };
        let err = |cell: f64| {
            let grid = rasterize(&g, cell).unwrap();
            let v = grid.filled_volume_nm3(5.76) - substrate_slab(&grid);
            (v - exact).abs() / exact
        };
        let coarse = err(20.0);
        let fine = err(10.0);
        assert!(coarse < 0.02, "coarse error {coarse}");
        assert!(fine < 0.01, "fine error {fine}");
    }

    #[test]
    fn raw_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = PermittivityGrid::from_fn([3, 2, 2], 5.0, [0.0; 3], |p| 1.0 + p[0] / 100.0);
        let path = dir.path().join("eps.f32");
        grid.write_raw(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 48);
        let back = PermittivityGrid::read_raw(&path).unwrap();
        assert_eq!(grid, back);
    }

    proptest! {
        #[test]
        fn radius_is_continuous_and_monotone(
            r_top in 50.0f64..400.0,
            h1 in 0.05f64..3.0,
            a1 in 30.0f64..90.0,
            h2 in 0.05f64..3.0,
            a2 in 30.0f64..90.0,
        ) {
            let g = PillarGeometry::new(
                r_top,
                vec![ConeSegment::new(h1, a1).unwrap(), ConeSegment::new(h2, a2).unwrap()],
                1.0,
                2.4,
            ).unwrap();
            prop_assert_eq!(g.radius_at_depth(0.0).unwrap(), r_top);
            let h = g.total_height_nm();
            prop_assert!((g.radius_at_depth(h).unwrap() - g.base_radius_nm()).abs() < 1e-9);
            let b = h1 * 1000.0;
            let above = g.radius_at_depth(b - 1e-9).unwrap();
            let below = g.radius_at_depth(b + 1e-9).unwrap();
            prop_assert!((above - below).abs() < 1e-6);
            let mut prev = r_top;
            for s in 1..=50 {
                let r = g.radius_at_depth((h * s as f64 / 50.0).min(h)).unwrap();
                prop_assert!(r >= prev - 1e-9);
                prev = r;
            }
        }

        #[test]
        fn rmid_strictly_decreasing_in_angle(phi in 1.0f64..89.0, dphi in 0.01f64..1.0) {
            let a = rmid_from_angle(150.0, 0.5, phi).unwrap();
            let b = rmid_from_angle(150.0, 0.5, (phi + dphi).min(90.0)).unwrap();
            prop_assert!(b < a);
        }
    }
}
