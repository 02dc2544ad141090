//! End-to-end collection-efficiency simulation of one pillar device.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collection::{
    average_dipoles, band_samples, CollectionResult, EmissionSpectrum, COLLECTION_BAND_NM,
};
use crate::error::{validation, Error, Result};
use crate::farfield::{near_to_far_all, AngularGrid, FarField, Hemisphere, ProjectionOptions};
use crate::fdtd::source::{DipoleSource, Pulse};
use crate::fdtd::{
    CpmlParams, Simulation, SolverOptions, StopCondition, Surface, Termination,
};
use crate::geometry::{rasterize_with, DomainLayout, PillarGeometry, PermittivityGrid};

/// Default collection aperture of the reference setup.
pub const DEFAULT_NA: f64 = 0.75;
pub const DEFAULT_WAVELENGTH_SAMPLES: usize = 7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// 20 nm cells and a thin substrate; minutes to hours per device.
    #[default]
    Coarse,
    /// 10 nm cells and the full substrate slab.
    Fine,
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Tier::Coarse),
            "fine" => Ok(Tier::Fine),
            other => Err(validation(format!("unknown tier `{other}` (coarse|fine)"))),
        }
    }
}

/// Emitter dipole pair, expressed in device coordinates (`z` along the pillar axis).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipoleModel {
    /// The two dipoles orthogonal to a ⟨111⟩ NV axis in a (100) crystal.
    #[default]
    Nv111,
    /// Two dipoles along `x` and `y`.
    InPlane,
}

impl DipoleModel {
    pub fn orientations(self) -> [[f64; 3]; 2] {
        match self {
            DipoleModel::Nv111 => {
                let a = 1.0 / 2f64.sqrt();
                let b = 1.0 / 6f64.sqrt();
                [[a, -a, 0.0], [b, b, -2.0 * b]]
            }
            DipoleModel::InPlane => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumSource {
    #[default]
    NvDefault,
    Flat,
    Csv { path: PathBuf },
}

impl SpectrumSource {
    pub fn load(&self, band: [f64; 2]) -> Result<EmissionSpectrum> {
        match self {
            SpectrumSource::NvDefault => Ok(EmissionSpectrum::nv_default()),
            SpectrumSource::Flat => Ok(EmissionSpectrum::flat(band)),
            SpectrumSource::Csv { path } => EmissionSpectrum::load_csv(path),
        }
    }
}

/// Discretisation and termination settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub cell_nm: f64,
    pub courant_factor: f64,
    pub pml_cells: usize,
    pub decay_threshold: f64,
    pub max_steps: usize,
    pub lateral_margin_nm: f64,
    pub air_above_nm: f64,
    /// Air between substrate and far-field plane.
    pub gap_below_nm: f64,
    /// Simulated substrate thickness; replaces the geometry's value.
    pub substrate_um: f64,
}

impl SolverSettings {
    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Coarse => Self {
                cell_nm: 20.0,
                courant_factor: 0.95,
                pml_cells: 10,
                decay_threshold: 1e-4,
                max_steps: 200_000,
                lateral_margin_nm: 300.0,
                air_above_nm: 200.0,
                gap_below_nm: 100.0,
                substrate_um: 0.5,
            },
            Tier::Fine => Self {
                cell_nm: 10.0,
                courant_factor: 0.5,
                pml_cells: 12,
                decay_threshold: 1e-5,
                max_steps: 2_000_000,
                lateral_margin_nm: 400.0,
                air_above_nm: 300.0,
                gap_below_nm: 100.0,
                substrate_um: 2.0,
            },
        }
    }

    fn layout(&self) -> DomainLayout {
        DomainLayout {
            cell_nm: self.cell_nm,
            pml_cells: self.pml_cells,
            lateral_margin_nm: self.lateral_margin_nm,
            air_above_nm: self.air_above_nm,
            gap_below_nm: self.gap_below_nm,
            air_below_nm: 3.0 * self.cell_nm,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.decay_threshold > 0.0 && self.decay_threshold <= 1.0) {
            return Err(validation("decay threshold must lie in (0, 1]"));
        }
        if self.max_steps == 0 {
            return Err(validation("max_steps must be positive"));
        }
        Ok(())
    }
}

/// Everything needed to reproduce one device simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub geometry: PillarGeometry,
    pub tier: Tier,
    pub solver: SolverSettings,
    pub band_nm: [f64; 2],
    pub wavelength_samples: usize,
    pub na: f64,
    pub dipoles: DipoleModel,
    pub angular: AngularGrid,
    pub spectrum: SpectrumSource,
}

impl DeviceConfig {
    pub fn new(geometry: PillarGeometry, tier: Tier) -> Self {
        Self {
            geometry,
            tier,
            solver: SolverSettings::for_tier(tier),
            band_nm: COLLECTION_BAND_NM,
            wavelength_samples: DEFAULT_WAVELENGTH_SAMPLES,
            na: DEFAULT_NA,
            dipoles: DipoleModel::default(),
            angular: AngularGrid::default(),
            spectrum: SpectrumSource::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.wavelength_samples < 3 {
            return Err(validation("at least three wavelength samples are required"));
        }
        if !(0.0..=1.0).contains(&self.na) {
            return Err(validation(format!("NA {} outside [0, 1]", self.na)));
        }
        if !(self.band_nm[0] > 0.0 && self.band_nm[1] > self.band_nm[0]) {
            return Err(validation("invalid collection band"));
        }
        Ok(())
    }

    pub fn wavelengths_nm(&self) -> Vec<f64> {
        band_samples(self.band_nm, self.wavelength_samples)
    }

    /// Geometry as simulated, with the tier's substrate thickness.
    pub fn simulated_geometry(&self) -> Result<PillarGeometry> {
        self.geometry.clone().with_substrate_um(self.solver.substrate_um)
    }

    pub fn grid_dims(&self) -> Result<[usize; 3]> {
        Ok(self.solver.layout().dims(&self.simulated_geometry()?))
    }

    pub fn estimate(&self) -> Result<CostEstimate> {
        self.validate()?;
        let dims = self.grid_dims()?;
        let cells = dims.iter().product::<usize>();
        let cell_m = self.solver.cell_nm * 1e-9;
        let dt = self.solver.courant_factor * cell_m / (crate::fdtd::C0 * 3f64.sqrt());
        let pulse = Pulse::covering(self.band_nm[0], self.band_nm[1])?;
        // source time plus the light-crossing time of the domain a few times over
        let extent = dims.iter().map(|&n| n as f64 * cell_m).fold(0.0, f64::max);
        let ring = 40.0 * extent * self.geometry.refractive_index() / crate::fdtd::C0;
        let steps = ((pulse.end_time() + ring) / dt).ceil() as usize;
        let steps = steps.min(self.solver.max_steps);
        Ok(CostEstimate {
            dims,
            cells,
            dt_s: dt,
            steps_estimate: steps,
            simulations: 2,
            cell_updates: 2.0 * cells as f64 * steps as f64,
        })
    }

    /// Digest of the resolved configuration plus the spectrum contents. The
    /// NA is excluded because it is applied after the simulation.
    pub fn digest(&self) -> Result<String> {
        let spectrum = self.spectrum.load(self.band_nm)?;
        let mut value = serde_json::to_value(self)?;
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("na");
            map.insert("spectrum_digest".into(), spectrum.digest().into());
            map.insert("solver_version".into(), crate::SOLVER_VERSION.into());
        }
        Ok(canonical_digest(&value))
    }
}

/// Hash of canonical JSON: sorted keys, numbers normalised to `f64`.
pub fn canonical_digest(value: &serde_json::Value) -> String {
    fn normalise(v: &serde_json::Value) -> serde_json::Value {
        use serde_json::Value;
        match v {
            Value::Number(n) => n.as_f64().map_or_else(|| v.clone(), |x| serde_json::json!(x)),
            Value::Array(a) => Value::Array(a.iter().map(normalise).collect()),
            // serde_json maps keep keys sorted
            Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), normalise(v))).collect()),
            other => other.clone(),
        }
    }
    let text = serde_json::to_string(&normalise(value)).expect("serialisable value");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub dims: [usize; 3],
    pub cells: usize,
    pub dt_s: f64,
    pub steps_estimate: usize,
    pub simulations: usize,
    pub cell_updates: f64,
}

/// Run statistics of one dipole simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub orientation: [f64; 3],
    pub steps: usize,
    pub termination: Termination,
    pub peak_energy_j: f64,
    pub final_energy_j: f64,
    /// Power through the far-field plane divided by source power.
    pub plane_fraction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceResult {
    pub config_digest: String,
    pub collection: CollectionResult,
    pub per_dipole: Vec<CollectionResult>,
    pub runs: Vec<RunSummary>,
    /// Dipole-averaged far fields, one per wavelength.
    pub far_fields: Vec<FarField>,
}

/// Optional hooks into the individual dipole runs.
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Called with the prepared simulation before stepping starts.
    #[allow(clippy::type_complexity)]
    pub prepare: Option<&'a dyn Fn(usize, &mut Simulation) -> Result<()>>,
}

pub fn rasterize_device(config: &DeviceConfig) -> Result<PermittivityGrid> {
    rasterize_with(&config.simulated_geometry()?, &config.solver.layout())
}

pub fn simulate_device(config: &DeviceConfig) -> Result<DeviceResult> {
    simulate_device_with(config, &RunHooks::default())
}

pub fn simulate_device_with(config: &DeviceConfig, hooks: &RunHooks<'_>) -> Result<DeviceResult> {
    config.validate()?;
    let digest = config.digest()?;
    let spectrum = config.spectrum.load(config.band_nm)?;
    let geom = config.simulated_geometry()?;
    let layout = config.solver.layout();
    let grid = rasterize_with(&geom, &layout)?;
    let wavelengths = config.wavelengths_nm();
    let opts = SolverOptions {
        courant_factor: config.solver.courant_factor,
        pml_cells: config.solver.pml_cells,
        cpml: CpmlParams::default(),
        ..SolverOptions::default()
    };
    let stop = StopCondition {
        decay_threshold: config.solver.decay_threshold,
        max_steps: config.solver.max_steps,
    };
    let proj = ProjectionOptions {
        grid: config.angular,
        hemisphere: Hemisphere::Lower,
        exit_index: 1.0,
    };
    let geometry_digest = canonical_digest(&serde_json::to_value(&geom)?);
    let mut per_dipole = Vec::new();
    let mut runs = Vec::new();
    let mut fields: Vec<Vec<FarField>> = Vec::new();
    for (d, orientation) in config.dipoles.orientations().into_iter().enumerate() {
        let start = Instant::now();
        let mut sim = Simulation::new(&grid, &opts)?;
        sim.set_wavelengths(&wavelengths)?;
        let pos = geom.emitter_position_nm();
        let pulse = Pulse::covering(config.band_nm[0], config.band_nm[1])?;
        sim.add_dipole(&DipoleSource::new(pos, orientation, pulse)?)?;
        let c = config.solver.cell_nm;
        let half = 3.0 * c;
        let src_box = sim.add_box_monitor_nm(
            [pos[0] - half, pos[1] - half, pos[2] - half],
            [pos[0] + half, pos[1] + half, pos[2] + half],
        )?;
        let plane = sim.add_monitor(far_field_plane(&sim, &layout, &geom)?)?;
        if let Some(prepare) = hooks.prepare {
            prepare(d, &mut sim)?;
        }
        let res = sim.run(&stop)?;
        let p_src = res.source_power(src_box)?;
        if let Some((i, p)) = p_src.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
            return Err(Error::Consistency(format!(
                "non-positive source power {p:e} at {} nm",
                wavelengths[i]
            )));
        }
        let surface = res.surface(plane);
        let ffs = near_to_far_all(surface, &proj)?;
        let plane_fraction = surface
            .fluxes()
            .iter()
            .zip(&p_src)
            .map(|(f, p)| f / p)
            .collect();
        per_dipole.push(CollectionResult::from_far_fields(
            &ffs,
            &p_src,
            &spectrum,
            config.band_nm,
            config.na,
            &geometry_digest,
        )?);
        info!(
            "dipole {d} {orientation:?}: {} steps ({:?}) in {:.1} s",
            res.steps,
            res.termination,
            start.elapsed().as_secs_f64()
        );
        runs.push(RunSummary {
            orientation,
            steps: res.steps,
            termination: res.termination,
            peak_energy_j: res.peak_energy_j,
            final_energy_j: res.final_energy_j,
            plane_fraction,
        });
        fields.push(ffs);
    }
    let collection = average_dipoles(&per_dipole[0], &per_dipole[1])?;
    let far_fields = (0..wavelengths.len())
        .map(|f| FarField::average(&[&fields[0][f], &fields[1][f]]))
        .collect::<Result<_>>()?;
    Ok(DeviceResult {
        config_digest: digest,
        collection,
        per_dipole,
        runs,
        far_fields,
    })
}

/// Horizontal plane below the substrate covering the whole interior cross-section.
fn far_field_plane(sim: &Simulation, layout: &DomainLayout, geom: &PillarGeometry) -> Result<Surface> {
    let dims = sim.dims();
    let z = layout.monitor_z_nm(geom);
    let node = sim.node_at([0.0, 0.0, z])?;
    let p = layout.pml_cells;
    if dims[0] < 2 * p + 2 || dims[1] < 2 * p + 2 {
        return Err(Error::Configuration("domain has no interior cross-section".into()));
    }
    Ok(Surface::Plane {
        axis: 2,
        index: node[2],
        lo: [p, p],
        hi: [dims[0] - p, dims[1] - p],
        positive: false,
    })
}

/// The JSON document written for each simulated device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub config_digest: String,
    pub config: DeviceConfig,
    pub result: CollectionResult,
    pub per_dipole: Vec<CollectionResult>,
    pub runs: Vec<RunSummary>,
}

impl DeviceResult {
    pub fn report(&self, config: &DeviceConfig) -> DeviceReport {
        DeviceReport {
            config_digest: self.config_digest.clone(),
            config: config.clone(),
            result: self.collection.clone(),
            per_dipole: self.per_dipole.clone(),
            runs: self.runs.clone(),
        }
    }

    /// Writes `result.json` and one far-field CSV per wavelength.
    pub fn write(&self, config: &DeviceConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.report(config))?;
        std::fs::write(dir.join("result.json"), json)?;
        for ff in &self.far_fields {
            ff.write_csv(&dir.join(format!("farfield_{:.0}nm.csv", ff.wavelength_nm)))?;
        }
        Ok(())
    }
}
