//! Runs a small resumable height sweep into a result store, then reruns it
//! to show every point being served from the cache.
//!
//! ```text
//! cargo run --release --example sweep -- /tmp/pillarsim-sweep
//! ```

use pillarsim::device::{SolverSettings, Tier};
use pillarsim::sweep::{run_sweep, ResultStore, SweepPlan};

fn main() -> pillarsim::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = std::env::args().nth(1).unwrap_or_else(|| "pillarsim-sweep".into());
    // 40 nm cells and a thin substrate keep each point to seconds
    let mut solver = SolverSettings::for_tier(Tier::Coarse);
    solver.cell_nm = 40.0;
    solver.substrate_um = 0.2;
    let plan = SweepPlan::from_json(
        &serde_json::json!({
            "name": "cylinder_heights",
            "family": "cylinder",
            "base": { "r_top_nm": 100.0, "h_um": 0.4 },
            "axes": { "h_um": [0.3, 0.4, 0.5], "na": [0.5, 0.75, 0.9] },
            "solver": solver,
            "wavelength_samples": 3,
            "output": root,
        })
        .to_string(),
    )?;
    let store = ResultStore::open(std::path::Path::new(&root).join("store"))?;
    for pass in 1..=2 {
        let out = run_sweep(&plan, 2, &store)?;
        println!("pass {pass}: {} simulated, {} cached", out.simulated, out.cached);
    }
    print!("{}", std::fs::read_to_string(std::path::Path::new(&root).join("results.csv"))?);
    Ok(())
}
