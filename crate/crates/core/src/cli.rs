//! Command-line driver. Each subcommand writes figure-named artifacts plus a
//! `resolved_config.json` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::calibration::{eta_vs_iinf_fit, load_calibration_csv};
use crate::analysis::g2::{is_single_emitter, G2Histogram};
use crate::analysis::saturation::{
    fit_saturation, monte_carlo_coverage, power_ramp, SaturationData,
};
use crate::analysis::snr::{log_space, scale_alpha0, snr_landscape, DEFAULT_WINDOW_NS};
use crate::analysis::SnrPoint;
use crate::device::{
    DeviceConfig, DeviceResult, DipoleModel, SolverSettings, SpectrumSource, Tier,
};
use crate::error::{validation, Error, Result};
use crate::farfield::AngularGrid;
use crate::geometry::PillarGeometry;
use crate::sweep::{run_sweep, simulate_cached, RecordStatus, ResultStore, SweepPlan};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_231;

#[derive(Debug, Parser)]
#[command(name = "pillarsim", version, about = "Diamond nanopillar collection-efficiency toolkit")]
pub struct Cli {
    /// Run configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps and the solver.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tier: Option<Tier>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one device (both dipoles) and write its collection result.
    Simulate(SimulateArgs),
    /// Run a parameter sweep from a plan file.
    Sweep { plan: PathBuf },
    /// Simulate (or fetch from cache) one device and export its far fields.
    Farfield(FarfieldArgs),
    /// Fit the saturation model to a `power_uw, kcts_per_s[, sigma]` CSV.
    FitSaturation(FitArgs),
    /// Evaluate the shot-noise-limited readout SNR.
    Snr(SnrArgs),
    /// Classify a `delay_ns, norm_coincidences` histogram.
    G2 { csv: PathBuf },
    /// Tabulate the result store and optional measurement files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DeviceArgs {
    /// Geometry JSON document.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long, value_parser = parse_dipoles)]
    pub dipoles: Option<DipoleModel>,
    /// Emission spectrum CSV replacing the built-in model.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub device: DeviceArgs,
    /// Print the resolved configuration and cost estimate only.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct FarfieldArgs {
    #[command(flatten)]
    pub device: DeviceArgs,
    /// Export only these wavelengths (nm, nearest sample); default all.
    #[arg(long = "wavelength")]
    pub wavelengths: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub csv: PathBuf,
    /// Also calibrate the reported uncertainty with this many noisy refits.
    #[arg(long, default_value_t = 0)]
    pub monte_carlo: usize,
    /// Relative noise of the Monte-Carlo refits.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct SnrArgs {
    #[arg(long)]
    pub alpha0: f64,
    #[arg(long)]
    pub contrast: f64,
    /// Multiply `alpha0` by this ratio of saturated count rates first.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Also write the `(α₀, C)` landscape.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Store directory; defaults to `$PILLARSIM_CACHE` or `<out>/store`.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Per-device CSV `geometry, i_inf_kcts` for the count-rate histogram.
    #[arg(long)]
    pub devices: Option<PathBuf>,
    /// Calibration CSV `eta_bar, i_inf_kcts[, sigma]`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Fit the calibration line through the origin.
    #[arg(long)]
    pub through_origin: bool,
    /// Histogram bin width, kcts/s.
    #[arg(long, default_value_t = 100.0)]
    pub bin_width: f64,
}

fn parse_dipoles(s: &str) -> std::result::Result<DipoleModel, String> {
    match s {
        "nv111" => Ok(DipoleModel::Nv111),
        "in_plane" | "xy" => Ok(DipoleModel::InPlane),
        _ => Err(format!("unknown dipole model `{s}` (nv111|in_plane)")),
    }
}

impl clap::ValueEnum for Tier {
    fn value_variants<'a>() -> &'a [Self] {
        &[Tier::Coarse, Tier::Fine]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(match self {
            Tier::Coarse => clap::builder::PossibleValue::new("coarse"),
            Tier::Fine => clap::builder::PossibleValue::new("fine"),
        })
    }
}

/// Contents of a `--config` file. Every field is optional; relative paths
/// are resolved against the file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry_file: Option<PathBuf>,
    pub geometry: Option<PillarGeometry>,
    pub tier: Option<Tier>,
    pub solver: Option<SolverSettings>,
    pub band_nm: Option<[f64; 2]>,
    pub wavelength_samples: Option<usize>,
    pub na: Option<f64>,
    pub dipoles: Option<DipoleModel>,
    pub spectrum: Option<SpectrumSource>,
    pub angular: Option<AngularGrid>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.geometry_file.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.out.as_mut() {
            fix(p);
        }
        if let Some(SpectrumSource::Csv { path }) = cfg.spectrum.as_mut() {
            fix(path);
        }
        Ok(cfg)
    }
}

/// Global settings after merging flags over the config file.
struct Context {
    file: RunConfig,
    out: PathBuf,
    jobs: usize,
    seed: u64,
    tier: Tier,
    /// Whether the tier came from a flag or the config rather than the default.
    tier_explicit: bool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let jobs = cli.jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(validation("--jobs must be at least 1"));
        }
        Ok(Self {
            out: cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("pillarsim-out")),
            jobs,
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            tier: cli.tier.or(file.tier).unwrap_or_default(),
            tier_explicit: cli.tier.is_some() || file.tier.is_some(),
            file,
        })
    }

    fn store(&self) -> Result<ResultStore> {
        ResultStore::open_default(&self.out.join("store"))
    }

    fn device_config(&self, args: &DeviceArgs) -> Result<DeviceConfig> {
        let f = &self.file;
        let geometry = match (&args.geometry, &f.geometry_file, &f.geometry) {
            (Some(p), _, _) | (None, Some(p), _) => PillarGeometry::load(p)?,
            (None, None, Some(g)) => g.clone(),
            (None, None, None) => {
                return Err(validation("no geometry given (--geometry or config `geometry`)"))
            }
        };
        let mut cfg = DeviceConfig::new(geometry, self.tier);
        if let Some(s) = &f.solver {
            cfg.solver = s.clone();
        }
        if let Some(b) = f.band_nm {
            cfg.band_nm = b;
        }
        if let Some(n) = f.wavelength_samples {
            cfg.wavelength_samples = n;
        }
        if let Some(a) = f.angular {
            cfg.angular = a;
        }
        cfg.na = args.na.or(f.na).unwrap_or(cfg.na);
        cfg.dipoles = args.dipoles.or(f.dipoles).unwrap_or_default();
        cfg.spectrum = match (&args.spectrum, &f.spectrum) {
            (Some(p), _) => SpectrumSource::Csv { path: p.clone() },
            (None, Some(s)) => s.clone(),
            (None, None) => SpectrumSource::default(),
        };
        if let SpectrumSource::Csv { path } = &cfg.spectrum {
            if !path.is_file() {
                return Err(validation(format!("spectrum file {} does not exist", path.display())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn write_resolved(&self, value: &impl Serialize) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        write_json(&self.out.join("resolved_config.json"), value)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(&cli)?;
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(ctx.jobs).build_global() {
        log::debug!("global thread pool already initialised: {e}");
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Sweep { plan } => cmd_sweep(&ctx, plan),
        Command::Farfield(a) => cmd_farfield(&ctx, a),
        Command::FitSaturation(a) => cmd_fit(&ctx, a),
        Command::Snr(a) => cmd_snr(&ctx, a),
        Command::G2 { csv } => cmd_g2(&ctx, csv),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

fn cmd_simulate(ctx: &Context, args: &SimulateArgs) -> Result<()> {
    let cfg = ctx.device_config(&args.device)?;
    if args.dry_run {
        let est = cfg.estimate()?;
        let out = serde_json::json!({
            "config": cfg,
            "digest": cfg.digest()?,
            "estimate": est,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    let store = ctx.store()?;
    let (res, cached) = simulate_cached(&cfg, &store)?;
    ctx.write_resolved(&cfg)?;
    write_device_outputs(&ctx.out, &cfg, &res)?;
    println!(
        "eta_bar = {:.4} at NA {} (NA_0.80 = {:.3}){}",
        res.collection.eta_bar,
        cfg.na,
        res.collection.na_080,
        if cached { " [cached]" } else { "" }
    );
    Ok(())
}

fn write_device_outputs(dir: &Path, cfg: &DeviceConfig, res: &DeviceResult) -> Result<()> {
    let res = DeviceResult {
        collection: res.collection.with_na(cfg.na)?,
        ..res.clone()
    };
    res.write(cfg, dir)?;
    let mut curve = String::from("na,eta_bar\n");
    for (na, e) in res.collection.na_curve() {
        let _ = writeln!(curve, "{na},{e}");
    }
    fs::write(dir.join("fig1h.csv"), curve)?;
    Ok(())
}

fn cmd_sweep(ctx: &Context, plan_path: &Path) -> Result<()> {
    let mut plan = SweepPlan::load(plan_path)?;
    if plan.output.is_none() {
        plan.output = Some(ctx.out.clone());
    }
    if ctx.tier_explicit {
        plan.tier = ctx.tier;
    }
    let points = plan.points()?;
    eprintln!("sweep `{}`: {} points", plan.name, points.len());
    ctx.write_resolved(&serde_json::json!({
        "plan": plan,
        "digests": points.iter().map(|p| &p.digest).collect::<Vec<_>>(),
    }))?;
    let store = ctx.store()?;
    let outcome = run_sweep(&plan, ctx.jobs, &store)?;
    println!(
        "{} simulated, {} cached, {} failed",
        outcome.simulated, outcome.cached, outcome.failed
    );
    Ok(())
}

fn cmd_farfield(ctx: &Context, args: &FarfieldArgs) -> Result<()> {
    let cfg = ctx.device_config(&args.device)?;
    let store = ctx.store()?;
    let (res, _) = simulate_cached(&cfg, &store)?;
    ctx.write_resolved(&cfg)?;
    let selected: Vec<usize> = if args.wavelengths.is_empty() {
        (0..res.far_fields.len()).collect()
    } else {
        args.wavelengths
            .iter()
            .map(|w| {
                (0..res.far_fields.len())
                    .min_by(|&a, &b| {
                        let da = (res.far_fields[a].wavelength_nm - w).abs();
                        let db = (res.far_fields[b].wavelength_nm - w).abs();
                        da.total_cmp(&db)
                    })
                    .expect("at least one wavelength")
            })
            .collect()
    };
    for i in selected {
        let ff = &res.far_fields[i];
        let stem = format!("fig2b_farfield_{:.0}nm", ff.wavelength_nm);
        ff.write_csv(&ctx.out.join(format!("{stem}.csv")))?;
        ff.write_raw(&ctx.out.join(format!("{stem}.raw")))?;
        println!("{stem}: total {:.4e}, max {:.4e}", ff.total_flux(), ff.max_intensity());
    }
    Ok(())
}

fn cmd_fit(ctx: &Context, args: &FitArgs) -> Result<()> {
    let data = SaturationData::load_csv(&args.csv)?;
    let fit = fit_saturation(&data)?;
    ctx.write_resolved(&serde_json::json!({
        "input": args.csv,
        "seed": ctx.seed,
        "monte_carlo": args.monte_carlo,
        "noise": args.noise,
    }))?;
    let mut curve = String::from("power_uw,kcts_per_s,model\n");
    for p in data.points() {
        let _ = writeln!(curve, "{},{},{}", p.power_uw, p.kcts_per_s, fit.predict(p.power_uw));
    }
    fs::write(ctx.out.join("fig4b.csv"), curve)?;
    let coverage = if args.monte_carlo > 0 {
        let max_p = data.points().iter().map(|p| p.power_uw).fold(0.0, f64::max);
        Some(monte_carlo_coverage(
            [fit.i_inf, fit.p_sat, fit.c_bg],
            &power_ramp(max_p, data.points().len()),
            args.noise,
            args.monte_carlo,
            3.0,
            ctx.seed,
        )?)
    } else {
        None
    };
    write_json(
        &ctx.out.join("fig4b_fit.json"),
        &serde_json::json!({ "fit": fit, "coverage": coverage }),
    )?;
    println!(
        "I_inf = {:.2} ± {:.2} kcts/s, P_sat = {:.3} ± {:.3} uW, c_bg = {:.4} ± {:.4} kcts/s/uW{}",
        fit.i_inf,
        fit.sigma_i_inf,
        fit.p_sat,
        fit.sigma_p_sat,
        fit.c_bg,
        fit.sigma_c_bg,
        if fit.background_pinned { " (background pinned at 0)" } else { "" }
    );
    if let Some(c) = coverage {
        println!("3σ coverage {}/{}", c.covered, c.trials);
    }
    Ok(())
}

fn cmd_snr(ctx: &Context, args: &SnrArgs) -> Result<()> {
    let alpha0 = match args.ratio {
        Some(r) => scale_alpha0(args.alpha0, r)?,
        None => args.alpha0,
    };
    let point = SnrPoint::from_contrast(alpha0, args.contrast, DEFAULT_WINDOW_NS)?;
    println!("{:.3}", point.snr);
    ctx.write_resolved(&serde_json::json!({
        "alpha0": args.alpha0,
        "contrast": args.contrast,
        "ratio": args.ratio,
        "grid": args.grid,
    }))?;
    write_json(&ctx.out.join("fig5_point.json"), &point)?;
    if args.grid {
        let contrasts: Vec<f64> = (0..=60).map(|i| i as f64 * 0.01).collect();
        let grid = snr_landscape(&log_space(0.01, 1.0, 41), &contrasts)?;
        fs::write(ctx.out.join("fig5_grid.csv"), grid.to_csv())?;
    }
    Ok(())
}

fn cmd_g2(ctx: &Context, csv: &Path) -> Result<()> {
    let h = G2Histogram::load_csv(csv)?;
    let v = is_single_emitter(&h)?;
    ctx.write_resolved(&serde_json::json!({ "input": csv }))?;
    write_json(&ctx.out.join("g2.json"), &v)?;
    println!(
        "g2(0) = {:.3} -> {}",
        v.g2_zero,
        if v.single { "single emitter" } else { "not single" }
    );
    Ok(())
}

fn cmd_report(ctx: &Context, args: &ReportArgs) -> Result<()> {
    let store = match &args.store {
        Some(p) => ResultStore::open(p.clone())?,
        None => ctx.store()?,
    };
    ctx.write_resolved(&serde_json::json!({
        "store": store.root(),
        "devices": args.devices,
        "calibration": args.calibration,
        "through_origin": args.through_origin,
        "bin_width": args.bin_width,
    }))?;
    let mut table = String::from(
        "digest,h_um,r_top_nm,r_mid_nm,base_radius_nm,cell_nm,na,eta_bar,na_080,status\n",
    );
    let records = store.records()?;
    for r in &records {
        let g = &r.config.geometry;
        let (eta, na080) = r
            .result
            .as_ref()
            .map_or((String::new(), String::new()), |c| (c.eta_bar.to_string(), c.na_080.to_string()));
        let status = match &r.status {
            RecordStatus::Completed => "ok".to_string(),
            RecordStatus::Failed { reason, .. } => format!("failed: {}", reason.replace([',', '\n'], " ")),
        };
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{},{},{}",
            r.digest,
            g.total_height_nm() / 1000.0,
            g.top_radius_nm(),
            g.mid_radius_nm().map_or(String::new(), |v| v.to_string()),
            g.base_radius_nm(),
            r.config.solver.cell_nm,
            r.config.na,
            eta,
            na080,
            status
        );
    }
    fs::write(ctx.out.join("store_results.csv"), table)?;
    println!("{} stored records", records.len());
    if let Some(path) = &args.devices {
        let (hist, fits) = device_histogram(path, args.bin_width)?;
        fs::write(ctx.out.join("fig4c.csv"), hist)?;
        fs::write(ctx.out.join("fig4c_fits.csv"), fits)?;
    }
    if let Some(path) = &args.calibration {
        let pts = load_calibration_csv(path)?;
        let fit = eta_vs_iinf_fit(&pts, !args.through_origin)?;
        let mut csv = String::from("i_inf_kcts,eta_bar,fit\n");
        for p in &pts {
            let _ = writeln!(csv, "{},{},{}", p.i_inf_kcts, p.eta_bar, fit.slope * p.i_inf_kcts + fit.intercept);
        }
        fs::write(ctx.out.join("fig4d.csv"), csv)?;
        write_json(&ctx.out.join("fig4d_fit.json"), &fit)?;
        println!("slope = {:.3e} s/kct", fit.slope);
    }
    Ok(())
}

/// Count-rate histogram per geometry label with moment-matched Gaussians.
fn device_histogram(path: &Path, bin: f64) -> Result<(String, String)> {
    if !(bin > 0.0) {
        return Err(validation("bin width must be positive"));
    }
    let text = fs::read_to_string(path)?;
    let mut groups: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (label, value) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match value.parse::<f64>() {
            Ok(v) if v.is_finite() => groups.entry(label.to_string()).or_default().push(v),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("expected `geometry, i_inf_kcts`, got `{line}`"),
                })
            }
        }
    }
    let mut hist = String::from("geometry,bin_lo_kcts,bin_hi_kcts,count\n");
    let mut fits = String::from("geometry,devices,mean_kcts,std_kcts\n");
    for (label, vals) in &groups {
        let mut counts = std::collections::BTreeMap::<i64, usize>::new();
        for v in vals {
            *counts.entry((v / bin).floor() as i64).or_default() += 1;
        }
        for (k, c) in counts {
            let _ = writeln!(hist, "{label},{},{},{c}", k as f64 * bin, (k + 1) as f64 * bin);
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let _ = writeln!(fits, "{label},{},{mean},{}", vals.len(), var.sqrt());
    }
    Ok((hist, fits))
}

/// Maps clap failures onto the crate's exit codes.
pub fn parse_or_exit() -> Cli {
    match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    }
}

/// Bin entry point: parse, run, report, exit.
pub fn main() -> ! {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = parse_or_exit();
    match run(cli) {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
