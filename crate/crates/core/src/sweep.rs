//! Cached, resumable parameter sweeps over pillar geometries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collection::CollectionResult;
use crate::device::{
    simulate_device, DeviceConfig, DeviceResult, DipoleModel, RunSummary, SolverSettings,
    SpectrumSource, Tier, DEFAULT_NA, DEFAULT_WAVELENGTH_SAMPLES,
};
use crate::farfield::FarField;
use crate::error::{validation, Error, Result};
use crate::geometry::{angle_from_rmid, rmid_from_angle, PillarGeometry, DEFAULT_EMITTER_DEPTH_NM, DIAMOND_INDEX};

/// Pillar family the plan varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cylinder,
    SingleCone,
    /// Facet-side segment of height `h2_um` at `φ` above an `θ` segment.
    Multicone,
}

/// Sweepable parameters; the declaration order is the expansion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    HUm,
    RTopNm,
    RMidNm,
    PhiDeg,
    CellNm,
    Na,
}

/// Fixed parameters shared by every point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseParams {
    pub r_top_nm: f64,
    pub h_um: f64,
    #[serde(default = "default_theta")]
    pub theta_deg: f64,
    #[serde(default)]
    pub phi_deg: Option<f64>,
    #[serde(default)]
    pub r_mid_nm: Option<f64>,
    #[serde(default = "default_h2")]
    pub h2_um: f64,
    #[serde(default = "default_n")]
    pub n_d: f64,
    #[serde(default = "default_depth")]
    pub d_nm: f64,
    #[serde(default)]
    pub delta_nm: f64,
    #[serde(default = "default_na")]
    pub na: f64,
}

fn default_theta() -> f64 {
    80.0
}
fn default_h2() -> f64 {
    0.5
}
fn default_n() -> f64 {
    DIAMOND_INDEX
}
fn default_depth() -> f64 {
    DEFAULT_EMITTER_DEPTH_NM
}
fn default_na() -> f64 {
    DEFAULT_NA
}
fn default_samples() -> usize {
    DEFAULT_WAVELENGTH_SAMPLES
}

/// Contents of a `sweep.json` plan file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// Also the stem of the figure table written next to `results.csv`.
    pub name: String,
    pub family: Family,
    pub base: BaseParams,
    pub axes: BTreeMap<Axis, Vec<f64>>,
    #[serde(default)]
    pub tier: Tier,
    /// Replaces the tier's solver settings wholesale.
    #[serde(default)]
    pub solver: Option<SolverSettings>,
    #[serde(default)]
    pub dipoles: DipoleModel,
    #[serde(default)]
    pub spectrum: SpectrumSource,
    #[serde(default = "default_samples")]
    pub wavelength_samples: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Parameters of one grid point as reported in the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointParams {
    pub h_um: f64,
    pub r_top_nm: f64,
    pub r_mid_nm: Option<f64>,
    pub phi_deg: Option<f64>,
    pub na: f64,
    pub cell_nm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub params: PointParams,
    pub config: DeviceConfig,
    pub digest: String,
}

impl SweepPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Size of the cartesian product.
    pub fn len(&self) -> usize {
        self.axes.values().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Expands and validates every grid point.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(validation("plan name must be a plain file stem"));
        }
        if self.is_empty() {
            return Err(validation("sweep has an empty axis"));
        }
        if self.axes.contains_key(&Axis::RMidNm) && self.axes.contains_key(&Axis::PhiDeg) {
            return Err(validation("sweep either R_mid or φ, not both"));
        }
        let axes: Vec<(Axis, &Vec<f64>)> = self.axes.iter().map(|(a, v)| (*a, v)).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; axes.len()];
        loop {
            let mut p = self.base.clone();
            let mut cell = None;
            for (k, (axis, vals)) in axes.iter().enumerate() {
                let v = vals[idx[k]];
                match axis {
                    Axis::HUm => p.h_um = v,
                    Axis::RTopNm => p.r_top_nm = v,
                    Axis::RMidNm => {
                        p.r_mid_nm = Some(v);
                        p.phi_deg = None;
                    }
                    Axis::PhiDeg => {
                        p.phi_deg = Some(v);
                        p.r_mid_nm = None;
                    }
                    Axis::CellNm => cell = Some(v),
                    Axis::Na => p.na = v,
                }
            }
            out.push(self.point(&p, cell)?);
            // odometer, last axis fastest
            let mut k = axes.len();
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < axes[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn point(&self, p: &BaseParams, cell: Option<f64>) -> Result<SweepPoint> {
        let (geometry, r_mid, phi) = match self.family {
            Family::Cylinder => (PillarGeometry::cylinder(p.r_top_nm, p.h_um)?, None, None),
            Family::SingleCone => (
                PillarGeometry::single_cone(p.r_top_nm, p.h_um, p.theta_deg)?,
                None,
                None,
            ),
            Family::Multicone => {
                let (phi, given_r_mid) = match (p.phi_deg, p.r_mid_nm) {
                    (Some(phi), _) => (phi, None),
                    (None, Some(r_mid)) => (angle_from_rmid(p.r_top_nm, p.h2_um, r_mid)?, Some(r_mid)),
                    (None, None) => return Err(validation("multicone needs φ or R_mid")),
                };
                if !(p.h_um > p.h2_um) {
                    return Err(validation(format!(
                        "total height {} µm must exceed the facet segment {} µm",
                        p.h_um, p.h2_um
                    )));
                }
                let g = PillarGeometry::multicone(p.r_top_nm, p.h2_um, phi, p.h_um - p.h2_um, p.theta_deg)?;
                let r_mid = match given_r_mid {
                    Some(r) => r,
                    None => rmid_from_angle(p.r_top_nm, p.h2_um, phi)?,
                };
                (g, Some(r_mid), Some(phi))
            }
        };
        let mut geometry = geometry.with_emitter(p.d_nm, p.delta_nm)?;
        if p.n_d != DIAMOND_INDEX {
            let mut doc = crate::geometry::GeometryDocument::from(geometry);
            doc.n_d = p.n_d;
            geometry = PillarGeometry::try_from(doc)?;
        }
        let mut config = DeviceConfig::new(geometry, self.tier);
        if let Some(s) = &self.solver {
            config.solver = s.clone();
        }
        if let Some(c) = cell {
            config.solver.cell_nm = c;
        }
        config.dipoles = self.dipoles;
        config.spectrum = self.spectrum.clone();
        config.wavelength_samples = self.wavelength_samples;
        config.na = p.na;
        config.validate()?;
        let digest = config.digest()?;
        Ok(SweepPoint {
            params: PointParams {
                h_um: p.h_um,
                r_top_nm: p.r_top_nm,
                r_mid_nm: r_mid,
                phi_deg: phi,
                na: p.na,
                cell_nm: config.solver.cell_nm,
            },
            config,
            digest,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RecordStatus {
    Completed,
    Failed { reason: String, exit_code: i32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver_version: String,
    pub tier: Tier,
    pub cell_nm: f64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

/// One stored simulation outcome, keyed by configuration digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub digest: String,
    pub status: RecordStatus,
    pub config: DeviceConfig,
    pub result: Option<CollectionResult>,
    #[serde(default)]
    pub per_dipole: Vec<CollectionResult>,
    #[serde(default)]
    pub runs: Vec<RunSummary>,
    pub provenance: Provenance,
}

/// Content-addressed directory of `records/<digest>.json` files plus an
/// `index.json` summary rebuilt by [`ResultStore::compact`].
#[derive(Clone, Debug)]
pub struct ResultStore {
    root: PathBuf,
}

/// Environment variable overriding the default store location.
pub const CACHE_ENV: &str = "PILLARSIM_CACHE";

impl ResultStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("records"))?;
        Ok(Self { root })
    }

    /// `$PILLARSIM_CACHE` if set, else `fallback`.
    pub fn open_default(fallback: &Path) -> Result<Self> {
        match std::env::var_os(CACHE_ENV) {
            Some(p) if !p.is_empty() => Self::open(PathBuf::from(p)),
            _ => Self::open(fallback),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn record_path(&self, digest: &str) -> PathBuf {
        self.root.join("records").join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<StoreRecord>> {
        let path = self.record_path(digest);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let rec: StoreRecord = serde_json::from_str(&text).map_err(|e| Error::StoreCorrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if rec.digest != digest {
            return Err(Error::StoreCorrupt {
                path,
                reason: format!("record holds digest {}", rec.digest),
            });
        }
        Ok(Some(rec))
    }

    /// Atomically writes a record. A completed record is never replaced.
    pub fn put(&self, rec: &StoreRecord) -> Result<()> {
        if let Some(existing) = self.get(&rec.digest)? {
            if existing.status == RecordStatus::Completed {
                return Ok(());
            }
        }
        let path = self.record_path(&rec.digest);
        let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_string_pretty(rec)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn far_field_path(&self, digest: &str) -> PathBuf {
        self.root.join("farfields").join(format!("{digest}.json"))
    }

    pub fn put_far_fields(&self, digest: &str, fields: &[FarField]) -> Result<()> {
        let path = self.far_field_path(digest);
        fs::create_dir_all(path.parent().expect("store subdirectory"))?;
        let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_string(fields)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn far_fields(&self, digest: &str) -> Result<Option<Vec<FarField>>> {
        let path = self.far_field_path(digest);
        match fs::read_to_string(&path) {
            Ok(t) => serde_json::from_str(&t)
                .map(Some)
                .map_err(|e| Error::StoreCorrupt {
                    path,
                    reason: e.to_string(),
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Persists a finished simulation.
    pub fn put_result(&self, config: &DeviceConfig, res: &DeviceResult, started: f64) -> Result<()> {
        self.put_far_fields(&res.config_digest, &res.far_fields)?;
        self.put(&StoreRecord {
            digest: res.config_digest.clone(),
            status: RecordStatus::Completed,
            config: config.clone(),
            result: Some(res.collection.clone()),
            per_dipole: res.per_dipole.clone(),
            runs: res.runs.clone(),
            provenance: Provenance::now(config, started),
        })
    }

    /// Rebuilds a cached simulation, if complete with far fields.
    pub fn cached_result(&self, digest: &str) -> Result<Option<DeviceResult>> {
        let Some(rec) = self.get(digest)? else {
            return Ok(None);
        };
        let (RecordStatus::Completed, Some(collection)) = (&rec.status, rec.result) else {
            return Ok(None);
        };
        let Some(far_fields) = self.far_fields(digest)? else {
            return Ok(None);
        };
        Ok(Some(DeviceResult {
            config_digest: rec.digest,
            collection,
            per_dipole: rec.per_dipole,
            runs: rec.runs,
            far_fields,
        }))
    }

    pub fn records(&self) -> Result<Vec<StoreRecord>> {
        let mut digests = BTreeSet::new();
        for entry in fs::read_dir(self.root.join("records"))? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(d) = name.strip_suffix(".json") {
                digests.insert(d.to_string());
            }
        }
        digests
            .iter()
            .map(|d| self.get(d).map(|r| r.expect("listed record exists")))
            .collect()
    }

    /// Rewrites `index.json` from the record files.
    pub fn compact(&self) -> Result<()> {
        let index: BTreeMap<String, &RecordStatus> = BTreeMap::new();
        let records = self.records()?;
        let mut index = index;
        for r in &records {
            index.insert(r.digest.clone(), &r.status);
        }
        let tmp = self.root.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&index)?)?;
        fs::rename(tmp, self.root.join("index.json"))?;
        Ok(())
    }
}

impl Provenance {
    fn now(config: &DeviceConfig, started: f64) -> Self {
        Provenance {
            solver_version: crate::SOLVER_VERSION.into(),
            tier: config.tier,
            cell_nm: config.solver.cell_nm,
            started_unix_s: started,
            finished_unix_s: now_s(),
        }
    }
}

/// Simulates `config` unless the store already holds it. Returns the result
/// and whether it came from the cache.
pub fn simulate_cached(config: &DeviceConfig, store: &ResultStore) -> Result<(DeviceResult, bool)> {
    let digest = config.digest()?;
    if let Some(res) = store.cached_result(&digest)? {
        info!("cache hit {}", &digest[..12]);
        return Ok((res, true));
    }
    let started = now_s();
    let res = simulate_device(config)?;
    store.put_result(config, &res, started)?;
    store.compact()?;
    Ok((res, false))
}

pub(crate) fn now_s() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub params: PointParams,
    pub digest: String,
    pub eta_bar: Option<f64>,
    pub na_080: Option<f64>,
    /// `ok` or `failed: <reason>`.
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h_um,r_top_nm,r_mid_nm,phi_deg,na,eta_bar,na_080,cell_nm,status\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for r in &self.rows {
            let p = &r.params;
            let status = r.status.replace([',', '\n', '"'], " ");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.h_um,
                p.r_top_nm,
                opt(p.r_mid_nm),
                opt(p.phi_deg),
                p.na,
                opt(r.eta_bar),
                opt(r.na_080),
                p.cell_nm,
                status
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub table: ResultTable,
    pub simulated: usize,
    pub cached: usize,
    pub failed: usize,
}

pub type Runner<'a> = dyn Fn(&DeviceConfig) -> Result<DeviceResult> + Sync + 'a;

#[derive(Clone, Copy, Debug, Default)]
pub struct SweepOptions {
    /// Re-simulate points whose stored record is a failure.
    pub retry_failed: bool,
}

/// Runs a plan with the FDTD pipeline.
pub fn run_sweep(plan: &SweepPlan, parallelism: usize, store: &ResultStore) -> Result<SweepOutcome> {
    let runner = |c: &DeviceConfig| simulate_device(c);
    run_sweep_with(plan, parallelism, store, SweepOptions::default(), &runner)
}

/// Runs a plan with a caller-supplied simulation backend.
pub fn run_sweep_with(
    plan: &SweepPlan,
    parallelism: usize,
    store: &ResultStore,
    options: SweepOptions,
    runner: &Runner<'_>,
) -> Result<SweepOutcome> {
    if parallelism == 0 {
        return Err(validation("parallelism must be at least 1"));
    }
    let points = plan.points()?;
    info!("sweep `{}`: {} points", plan.name, points.len());
    // unique simulations in first-seen order; NA is applied after the fact
    let mut unique: BTreeMap<&str, &SweepPoint> = BTreeMap::new();
    for p in &points {
        unique.entry(p.digest.as_str()).or_insert(p);
    }
    let mut todo = Vec::new();
    let mut cached = 0;
    for (d, p) in &unique {
        match store.get(d)? {
            Some(r) if r.status == RecordStatus::Completed => cached += 1,
            Some(_) if !options.retry_failed => cached += 1,
            _ => todo.push(*p),
        }
    }
    let simulated = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Configuration(format!("worker pool: {e}")))?;
    pool.install(|| {
        todo.par_iter().try_for_each(|p| -> Result<()> {
            let started = now_s();
            let outcome = runner(&p.config);
            simulated.fetch_add(1, Ordering::Relaxed);
            match outcome {
                Ok(r) if r.config_digest == p.digest => store.put_result(&p.config, &r, started),
                Ok(r) => Err(Error::Consistency(format!(
                    "runner returned digest {} for point {}",
                    r.config_digest, p.digest
                ))),
                Err(e) => {
                    warn!("point {} failed: {e}", &p.digest[..12]);
                    store.put(&StoreRecord {
                        digest: p.digest.clone(),
                        status: RecordStatus::Failed {
                            reason: e.to_string(),
                            exit_code: e.exit_code(),
                        },
                        config: p.config.clone(),
                        result: None,
                        per_dipole: Vec::new(),
                        runs: Vec::new(),
                        provenance: Provenance::now(&p.config, started),
                    })
                }
            }
        })
    })?;
    store.compact()?;
    let table = tabulate(&points, store)?;
    let failed = table.rows.iter().filter(|r| r.status != "ok").count();
    if let Some(dir) = &plan.output {
        fs::create_dir_all(dir)?;
        table.write_csv(&dir.join("results.csv"))?;
        table.write_csv(&dir.join(format!("{}.csv", plan.name)))?;
    }
    Ok(SweepOutcome {
        table,
        simulated: simulated.into_inner(),
        cached,
        failed,
    })
}

/// Builds the table for `points` from stored records.
pub fn tabulate(points: &[SweepPoint], store: &ResultStore) -> Result<ResultTable> {
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let rec = store.get(&p.digest)?;
        let (eta_bar, na_080, status) = match rec {
            Some(StoreRecord {
                status: RecordStatus::Completed,
                result: Some(r),
                ..
            }) => {
                let r = r.with_na(p.params.na)?;
                (Some(r.eta_bar), Some(r.na_080), "ok".to_string())
            }
            Some(StoreRecord {
                status: RecordStatus::Failed { reason, .. },
                ..
            }) => (None, None, format!("failed: {reason}")),
            Some(_) => {
                return Err(Error::StoreCorrupt {
                    path: store.record_path(&p.digest),
                    reason: "completed record without a result".into(),
                })
            }
            None => (None, None, "missing".to_string()),
        };
        rows.push(ResultRow {
            params: p.params.clone(),
            digest: p.digest.clone(),
            eta_bar,
            na_080,
            status,
        });
    }
    Ok(ResultTable { rows })
}
