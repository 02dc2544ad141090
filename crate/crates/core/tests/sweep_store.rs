mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::{store_fingerprint, tiny_sweep_plan};
use pillarsim::collection::CollectionResult;
use pillarsim::device::{DeviceConfig, DeviceResult};
use pillarsim::farfield::{AngularGrid, FarField, Hemisphere};
use pillarsim::sweep::{
    run_sweep, run_sweep_with, simulate_cached, RecordStatus, ResultStore, SweepOptions, SweepPlan,
};
use pillarsim::Error;

/// Deterministic stand-in for the FDTD pipeline: a far field that narrows
/// with pillar height.
fn fake_result(config: &DeviceConfig) -> pillarsim::Result<DeviceResult> {
    let h = config.geometry.total_height_nm() / 1000.0;
    let spectrum = config.spectrum.load(config.band_nm)?;
    let grid = AngularGrid {
        theta_step_deg: 5.0,
        phi_step_deg: 10.0,
    };
    let fields: Vec<FarField> = config
        .wavelengths_nm()
        .iter()
        .map(|&wl| {
            FarField::from_fn(wl, 1.0, Hemisphere::Lower, &grid, |r| r[2].powi(2).powf(h))
        })
        .collect::<pillarsim::Result<_>>()?;
    let power = vec![10.0; fields.len()];
    let one = CollectionResult::from_far_fields(&fields, &power, &spectrum, config.band_nm, config.na, "fake")?;
    Ok(DeviceResult {
        config_digest: config.digest()?,
        collection: one.clone(),
        per_dipole: vec![one.clone(), one],
        runs: Vec::new(),
        far_fields: fields,
    })
}

fn plan(heights: &[f64]) -> SweepPlan {
    SweepPlan::from_json(
        &serde_json::json!({
            "name": "heights",
            "family": "single_cone",
            "base": { "r_top_nm": 150.0, "h_um": 1.0 },
            "axes": { "h_um": heights, "na": [0.5, 0.75] },
        })
        .to_string(),
    )
    .unwrap()
}

#[test]
fn second_run_is_served_from_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    let calls = AtomicUsize::new(0);
    let runner = |c: &DeviceConfig| {
        calls.fetch_add(1, Ordering::SeqCst);
        fake_result(c)
    };
    let p = plan(&[1.0, 2.0]);
    let first = run_sweep_with(&p, 1, &store, SweepOptions::default(), &runner).unwrap();
    // the NA axis is applied after simulation, so two heights need two runs
    assert_eq!((first.simulated, first.cached, first.failed), (2, 0, 0));
    assert_eq!(first.table.rows.len(), 4);
    let second = run_sweep_with(&p, 1, &store, SweepOptions::default(), &runner).unwrap();
    assert_eq!((second.simulated, second.cached), (0, 2));
    assert_eq!(calls.load(Ordering::SeqCst), 2);
    assert_eq!(first.table, second.table);
}

#[test]
fn interrupted_sweep_resumes_missing_points_only() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    run_sweep_with(&plan(&[1.0]), 1, &store, SweepOptions::default(), &fake_result).unwrap();
    let full = run_sweep_with(&plan(&[1.0, 2.0, 3.0]), 1, &store, SweepOptions::default(), &fake_result)
        .unwrap();
    assert_eq!((full.simulated, full.cached), (2, 1));
    assert!(full.table.rows.iter().all(|r| r.status == "ok"));
}

#[test]
fn table_applies_each_rows_na() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    let out = run_sweep_with(&plan(&[1.0]), 1, &store, SweepOptions::default(), &fake_result).unwrap();
    let rows = &out.table.rows;
    assert_eq!(rows[0].digest, rows[1].digest);
    assert!(rows[0].eta_bar.unwrap() < rows[1].eta_bar.unwrap());
    let csv = out.table.to_csv();
    assert!(csv.starts_with("h_um,r_top_nm,r_mid_nm,phi_deg,na,eta_bar,na_080,cell_nm,status\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn failed_points_are_recorded_and_retried_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    let failing = |c: &DeviceConfig| {
        if c.geometry.total_height_nm() > 1500.0 {
            Err(Error::Instability("diverged".into()))
        } else {
            fake_result(c)
        }
    };
    let p = plan(&[1.0, 2.0]);
    let out = run_sweep_with(&p, 1, &store, SweepOptions::default(), &failing).unwrap();
    assert_eq!(out.failed, 2);
    let failed = store
        .records()
        .unwrap()
        .into_iter()
        .find(|r| r.status != RecordStatus::Completed)
        .unwrap();
    assert!(matches!(failed.status, RecordStatus::Failed { exit_code: 2, .. }));

    let again = run_sweep_with(&p, 1, &store, SweepOptions::default(), &fake_result).unwrap();
    assert_eq!(again.simulated, 0);
    let retry = SweepOptions { retry_failed: true };
    let fixed = run_sweep_with(&p, 1, &store, retry, &fake_result).unwrap();
    assert_eq!((fixed.simulated, fixed.failed), (1, 0));
}

#[test]
fn corrupt_record_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    let p = plan(&[1.0]);
    let digest = p.points().unwrap()[0].digest.clone();
    std::fs::write(tmp.path().join("records").join(format!("{digest}.json")), "{ not json").unwrap();
    let err = run_sweep_with(&p, 1, &store, SweepOptions::default(), &fake_result).unwrap_err();
    assert!(matches!(err, Error::StoreCorrupt { .. }), "{err}");
}

#[test]
fn record_under_the_wrong_name_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    let pts = plan(&[1.0, 2.0]).points().unwrap();
    run_sweep_with(&plan(&[1.0]), 1, &store, SweepOptions::default(), &fake_result).unwrap();
    let rec = tmp.path().join("records");
    std::fs::copy(
        rec.join(format!("{}.json", pts[0].digest)),
        rec.join(format!("{}.json", pts[2].digest)),
    )
    .unwrap();
    assert!(matches!(store.get(&pts[2].digest), Err(Error::StoreCorrupt { .. })));
}

#[test]
fn runner_digest_mismatch_is_a_consistency_error() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    let liar = |c: &DeviceConfig| {
        let mut r = fake_result(c)?;
        r.config_digest = "0".repeat(64);
        Ok(r)
    };
    let err = run_sweep_with(&plan(&[1.0]), 1, &store, SweepOptions::default(), &liar).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)));
}

#[test]
fn serial_and_parallel_fake_sweeps_write_identical_stores() {
    let tmp = tempfile::tempdir().unwrap();
    let p = plan(&[1.0, 1.5, 2.0, 2.5, 3.0]);
    let prints: Vec<_> = [1, 3]
        .iter()
        .map(|&jobs| {
            let root = tmp.path().join(format!("j{jobs}"));
            let store = ResultStore::open(&root).unwrap();
            run_sweep_with(&p, jobs, &store, SweepOptions::default(), &fake_result).unwrap();
            store_fingerprint(&root)
        })
        .collect();
    assert_eq!(prints[0].len(), 5 + 5 + 1);
    assert_eq!(prints[0], prints[1]);
}

#[test]
fn real_sweep_caches_and_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultStore::open(tmp.path()).unwrap();
    let plan = tiny_sweep_plan();
    let first = run_sweep(&plan, 1, &store).unwrap();
    assert_eq!((first.simulated, first.failed), (2, 0));
    for row in &first.table.rows {
        let eta = row.eta_bar.unwrap();
        assert!(eta > 0.0 && eta < 1.0, "{eta}");
    }
    let again = run_sweep(&plan, 1, &store).unwrap();
    assert_eq!(again.simulated, 0);
    assert_eq!(first.table, again.table);

    let cfg = &plan.points().unwrap()[0].config;
    let (cached, hit) = simulate_cached(cfg, &store).unwrap();
    assert!(hit);
    assert_eq!(cached.config_digest, first.table.rows[0].digest);
}
