mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pillarsim::geometry::PillarGeometry;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pillarsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pillarsim"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("PILLARSIM_CACHE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Run config with the tiny 40 nm solver settings used by the store tests.
fn tiny_config(dir: &Path) -> PathBuf {
    let plan = common::tiny_sweep_plan();
    let geometry = PillarGeometry::cylinder(100.0, 0.3).unwrap();
    let cfg = serde_json::json!({
        "geometry": geometry,
        "solver": plan.solver.unwrap(),
        "wavelength_samples": 3,
    });
    let path = dir.join("tiny.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn snr_prints_the_reference_value() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pillarsim(tmp.path(), &["snr", "--alpha0", "0.154", "--contrast", "0.347"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.106");
    let point = read_json(&tmp.path().join("fig5_point.json"));
    assert!((point["snr"].as_f64().unwrap() - 0.10591).abs() < 1e-4);
    assert!(tmp.path().join("resolved_config.json").is_file());
}

#[test]
fn snr_scaled_by_count_rate_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pillarsim(
        tmp.path(),
        &["snr", "--alpha0", "0.154", "--contrast", "0.347", "--ratio", "0.803", "--grid"],
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.095");
    let grid = std::fs::read_to_string(tmp.path().join("fig5_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 41 * 61);
}

#[test]
fn invalid_input_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pillarsim(tmp.path(), &["snr", "--alpha0", "0", "--contrast", "0.3"]);
    assert_eq!(o.status.code(), Some(1));
    let o = pillarsim(tmp.path(), &["snr", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = pillarsim(tmp.path(), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometry"));
}

#[test]
fn fit_saturation_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = fixture("saturation.csv");
    let o = pillarsim(
        tmp.path(),
        &["--seed", "3", "fit-saturation", csv.to_str().unwrap(), "--monte-carlo", "20"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&tmp.path().join("fig4b_fit.json"));
    let i_inf = fit["fit"]["i_inf"].as_f64().unwrap();
    let p_sat = fit["fit"]["p_sat"].as_f64().unwrap();
    assert!((i_inf / 1464.9 - 1.0).abs() < 0.05, "{i_inf}");
    assert!((p_sat / 59.0 - 1.0).abs() < 0.1, "{p_sat}");
    assert_eq!(fit["coverage"]["trials"].as_u64(), Some(20));
    let curve = std::fs::read_to_string(tmp.path().join("fig4b.csv")).unwrap();
    assert_eq!(curve.lines().count(), 21);
}

#[test]
fn fit_saturation_is_reproducible_with_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = fixture("saturation.csv");
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        let o = pillarsim(&out, &["fit-saturation", csv.to_str().unwrap(), "--monte-carlo", "10"]);
        assert!(o.status.success());
        std::fs::read(out.join("fig4b_fit.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn g2_classifies_fixture_as_single() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = fixture("g2.csv");
    let o = pillarsim(tmp.path(), &["g2", csv.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("single emitter"));
    let v = read_json(&tmp.path().join("g2.json"));
    assert_eq!(v["single"], serde_json::Value::Bool(true));
}

#[test]
fn report_writes_calibration_and_histograms() {
    let tmp = tempfile::tempdir().unwrap();
    let cal = fixture("calibration.csv");
    let dev = fixture("devices.csv");
    let o = pillarsim(
        tmp.path(),
        &[
            "report",
            "--calibration",
            cal.to_str().unwrap(),
            "--through-origin",
            "--devices",
            dev.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&tmp.path().join("fig4d_fit.json"));
    let slope = fit["slope"].as_f64().unwrap();
    assert!((slope - 0.0085).abs() < 0.0005, "{slope}");
    let fits = std::fs::read_to_string(tmp.path().join("fig4c_fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 4);
    let head = std::fs::read_to_string(tmp.path().join("store_results.csv")).unwrap();
    assert_eq!(head.lines().count(), 1);
}

#[test]
fn dry_run_reports_digest_and_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let geom = tmp.path().join("cone.json");
    std::fs::write(&geom, PillarGeometry::single_cone(150.0, 1.0, 80.0).unwrap().to_json()).unwrap();
    let o = pillarsim(tmp.path(), &["simulate", "--geometry", geom.to_str().unwrap(), "--dry-run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["digest"].as_str().unwrap().len(), 64);
    assert!(v["estimate"]["cells"].as_u64().unwrap() > 100_000);
    // NA does not change the simulation, so the digest stays put
    let o2 = pillarsim(
        tmp.path(),
        &["simulate", "--geometry", geom.to_str().unwrap(), "--na", "0.5", "--dry-run"],
    );
    let v2: serde_json::Value = serde_json::from_str(&stdout(&o2)).unwrap();
    assert_eq!(v["digest"], v2["digest"]);
}

#[test]
fn simulate_sweep_and_farfield_share_the_store() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("out");
    let o = pillarsim(&out, &["--config", cfg, "simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("eta_bar = "));
    for f in ["result.json", "fig1h.csv", "resolved_config.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = pillarsim(&out, &["--config", cfg, "simulate", "--na", "0.9"]);
    assert!(stdout(&o).contains("[cached]"));
    let o = pillarsim(&out, &["--config", cfg, "farfield", "--wavelength", "725"]);
    assert!(o.status.success());
    assert!(out.join("fig2b_farfield_725nm.csv").is_file());
    assert!(out.join("fig2b_farfield_725nm.raw").is_file());

    let plan = tmp.path().join("plan.json");
    std::fs::write(&plan, serde_json::to_string(&common::tiny_sweep_plan()).unwrap()).unwrap();
    let o = pillarsim(&out, &["sweep", plan.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",ok")));
}

#[test]
fn corrupt_store_exits_with_store_code() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("store/records");
    std::fs::create_dir_all(&records).unwrap();
    std::fs::write(records.join("deadbeef.json"), "not json").unwrap();
    let o = pillarsim(tmp.path(), &["report"]);
    assert_eq!(o.status.code(), Some(3));
}
