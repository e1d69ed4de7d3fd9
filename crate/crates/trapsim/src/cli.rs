//! Command-line front end: layout generation, end-to-end site reports,
//! parameter scans, noise estimates, detuning patterns, and waveform
//! sampling. Every output file is accompanied by a run manifest so reruns
//! are reproducible and verifiable.

use crate::analysis::{
    barrier_between, characterize_site, find_sites, fit_double_well, SearchRegion, TrapSite,
};
use crate::fields::{write_grid_csv, FieldModel, GridAxis, PreparedDrive};
use crate::geometry::{build_layout, LayoutParams, TrapLayout};
use crate::noise::{detuning_pattern, noise_report, CircuitModel};
use crate::shuttle::{
    interaction_zone_config, path_to_waveform, refine_site, scan_axial_translation,
    static_array_scan, tune_lattice_spacing, tune_twin_spacing, write_waveform_csv, AxialPoint,
    AxialScan, RailSelection, ScanOptions, TwinContext,
};
use crate::units::{IonSpecies, TAU};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Error category mapped to the process exit code: 2 for validation
/// failures (bad arguments or inputs), 3 for numerical failures.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "trapsim", version, about = "Surface ion-trap array design toolkit")]
pub struct Cli {
    /// Worker threads for scans (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a trap layout JSON file.
    Layout(LayoutArgs),
    /// End-to-end site report for a twin-trap layout.
    Report(ReportArgs),
    /// Parameter scans (axial translation, RF spacing, static array).
    Scan(ScanArgs),
    /// Closed-form noise estimates for a supply-lead circuit.
    Noise(NoiseArgs),
    /// Motional-frequency detuning pattern for a site grid.
    Pattern(PatternArgs),
    /// Sample solved scan voltages along a transport path.
    Waveform(WaveformArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum LayoutVariant {
    Twin,
    Array,
    Static,
}

#[derive(Args, Debug)]
pub struct LayoutArgs {
    pub variant: LayoutVariant,
    /// Inner RF rail width in metres (twin).
    #[arg(long)]
    pub wi: Option<f64>,
    /// Outer RF rail width in metres (twin).
    #[arg(long)]
    pub wo: Option<f64>,
    /// RF rail width in metres (static array).
    #[arg(long)]
    pub wrf: Option<f64>,
    /// Site pitch in metres (static array).
    #[arg(long)]
    pub sx: Option<f64>,
    #[arg(long, default_value = "layout.json")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ReportConfig {
    Default,
    ReducedRf,
    InteractionZone,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Layout JSON produced by the `layout` subcommand.
    #[arg(long)]
    pub layout: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportConfig::Default)]
    pub config: ReportConfig,
    /// Target transverse site spacing in metres (reduced-rf config).
    #[arg(long, default_value_t = 40e-6)]
    pub sx: f64,
    /// Maximum RF amplitude in volts.
    #[arg(long, default_value_t = 400.0)]
    pub umax: f64,
    /// Stability-factor target.
    #[arg(long, default_value_t = 0.4)]
    pub q: f64,
    /// Output JSON path; a grid CSV is written next to it.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ScanKind {
    Axial,
    RfSpacing,
    StaticArray,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    pub kind: ScanKind,
    /// Layout JSON (axial and twin rf-spacing scans).
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Grid points per axis (axial scan).
    #[arg(long, default_value_t = 33)]
    pub n: usize,
    /// Axial frequency target in Hz (axial scan).
    #[arg(long, default_value_t = 1e6)]
    pub fz: f64,
    /// Target transverse spacing in metres (rf-spacing scan).
    #[arg(long, default_value_t = 40e-6)]
    pub sx: f64,
    /// Maximum RF amplitude in volts.
    #[arg(long, default_value_t = 400.0)]
    pub umax: f64,
    /// Stability-factor target.
    #[arg(long, default_value_t = 0.4)]
    pub q: f64,
    /// RF drive frequency in Hz (static-array scan).
    #[arg(long, default_value_t = 30e6)]
    pub frf: f64,
    #[arg(long, default_value = "scan.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    /// Circuit JSON file; the cryogenic defaults are used if omitted.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    /// Secular frequency in Hz.
    #[arg(long, default_value_t = 1e6)]
    pub fz: f64,
    /// RF drive frequency in Hz.
    #[arg(long, default_value_t = 23e6)]
    pub frf: f64,
    /// Characteristic electrode distance in metres.
    #[arg(long, default_value_t = 2.2e-3)]
    pub delta_c: f64,
    #[arg(long, default_value = "noise.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PatternArgs {
    #[arg(long, default_value_t = 10)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    /// Common secular frequency in Hz.
    #[arg(long, default_value_t = 1e6)]
    pub fz: f64,
    /// Nearest-neighbour coupling rate in rad/s.
    #[arg(long, default_value_t = 2.0 * std::f64::consts::PI * 1.4e3)]
    pub coupling: f64,
    /// Safety margin on the required detunings.
    #[arg(long, default_value_t = 10.0)]
    pub margin: f64,
    /// Highest neighbour order to detune (0..=4).
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value = "pattern.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct WaveformArgs {
    /// Axial-scan JSON file (written by `scan axial`).
    #[arg(long)]
    pub scan: PathBuf,
    /// Path as `zl,zr;zl,zr;...` in metres.
    #[arg(long)]
    pub path: String,
    /// Transport duration in seconds.
    #[arg(long, default_value_t = 1e-3)]
    pub duration: f64,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    #[arg(long, default_value = "waveform.csv")]
    pub out: PathBuf,
}

/// Reproducibility record written next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub overrides: BTreeMap<String, String>,
    pub version: String,
    /// SHA-256 over the contents of the input files, in order.
    pub content_hash: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        inputs: &[&Path],
        overrides: BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut hasher = Sha256::new();
        let mut names = Vec::new();
        for p in inputs {
            let bytes = fs::read(p)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            hasher.update(&bytes);
            names.push(p.display().to_string());
        }
        Ok(RunManifest {
            command: command.to_string(),
            inputs: names,
            overrides,
            version: env!("CARGO_PKG_VERSION").to_string(),
            content_hash: format!("{:x}", hasher.finalize()),
        })
    }

    pub fn write_next_to(&self, out: &Path) -> Result<(), CliError> {
        let mut path = out.as_os_str().to_owned();
        path.push(".manifest.json");
        let json = serde_json::to_string_pretty(self).map_err(validation)?;
        fs::write(PathBuf::from(path), json + "\n").map_err(validation)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).map_err(numerical)?;
    fs::write(path, json + "\n").map_err(validation)
}

fn load_layout(path: &Path) -> Result<TrapLayout, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(validation)
}

fn overrides_from<I: IntoIterator<Item = (&'static str, String)>>(
    pairs: I,
) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        // Ignore the error if a pool already exists (e.g. repeated calls
        // in tests); determinism does not depend on the thread count.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Layout(args) => cmd_layout(args),
        Command::Report(args) => cmd_report(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Noise(args) => cmd_noise(args),
        Command::Pattern(args) => cmd_pattern(args),
        Command::Waveform(args) => cmd_waveform(args),
    }
}

fn cmd_layout(args: LayoutArgs) -> Result<(), CliError> {
    let mut overrides = BTreeMap::new();
    let params = match args.variant {
        LayoutVariant::Twin => {
            let mut p = LayoutParams::twin_default();
            if let LayoutParams::TwinTrap { w_i, w_o, .. } = &mut p {
                if let Some(v) = args.wi {
                    *w_i = v;
                    overrides.insert("wi".to_string(), format!("{v:e}"));
                }
                if let Some(v) = args.wo {
                    *w_o = v;
                    overrides.insert("wo".to_string(), format!("{v:e}"));
                }
            }
            p
        }
        LayoutVariant::Array => LayoutParams::lattice_default(),
        LayoutVariant::Static => {
            let mut p = LayoutParams::static_default(args.wrf.unwrap_or(20e-6));
            if let LayoutParams::StaticArray { s_x, .. } = &mut p {
                if let Some(v) = args.sx {
                    *s_x = v;
                    overrides.insert("sx".to_string(), format!("{v:e}"));
                }
            }
            p
        }
    };
    let layout = build_layout(&params).map_err(validation)?;
    write_json(&args.out, &layout)?;
    RunManifest::new("layout", &[], overrides)?.write_next_to(&args.out)?;
    let groups = layout.groups();
    println!(
        "layout: {} electrodes in {} groups -> {}",
        layout.electrodes.len(),
        groups.len(),
        args.out.display()
    );
    Ok(())
}

/// Site report written by `report`.
#[derive(Debug, Serialize)]
struct SiteReport {
    config: String,
    rf_frequency_hz: f64,
    rf_amplitudes_v: BTreeMap<String, f64>,
    dc_voltages_v: BTreeMap<String, f64>,
    sites: Vec<TrapSite>,
    double_well_barrier_mev: Option<f64>,
    double_well_fit_barrier_mev: Option<f64>,
    axial_barrier_mev: Option<f64>,
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let layout = load_layout(&args.layout)?;
    let species = IonSpecies::ca40();
    let ctx = TwinContext::new(&layout, &species, args.umax, args.q).map_err(numerical)?;
    let mut report = SiteReport {
        config: format!("{:?}", args.config),
        rf_frequency_hz: ctx.drive.rf_angular_frequency / TAU,
        rf_amplitudes_v: ctx.drive.rf_amplitudes.clone(),
        dc_voltages_v: BTreeMap::new(),
        sites: Vec::new(),
        double_well_barrier_mev: None,
        double_well_fit_barrier_mev: None,
        axial_barrier_mev: None,
    };
    let (model, drive) = match args.config {
        ReportConfig::Default => {
            let targets = crate::voltsolver::SolveTargets::axial(&species, TAU * 1e6, TAU * 1e6);
            let sl = Vector3::new(ctx.null.x, ctx.null.y, 0.0);
            let sr = Vector3::new(-ctx.null.x, ctx.null.y, 0.0);
            let sys =
                crate::voltsolver::solve_voltages(&ctx.model, &ctx.grouping, &sl, &sr, &targets)
                    .map_err(numerical)?;
            report.dc_voltages_v = sys.voltage_map();
            (ctx.model, sys.apply_to(ctx.drive.clone()))
        }
        ReportConfig::ReducedRf => {
            let tune = tune_twin_spacing(
                &layout,
                &species,
                args.sx,
                ctx.drive.rf_angular_frequency,
                args.q,
                args.umax,
            )
            .map_err(numerical)?;
            report.rf_amplitudes_v = tune.drive.rf_amplitudes.clone();
            let model = FieldModel::new(&ctx.grouping.apply(&layout).map_err(numerical)?);
            (model, tune.drive)
        }
        ReportConfig::InteractionZone => {
            let iz = interaction_zone_config(&layout, &species, &ctx.drive, 50e-6, TAU * 1e6, 459e-6)
                .map_err(numerical)?;
            report.dc_voltages_v = iz.system.voltage_map();
            report.axial_barrier_mev = Some(iz.central_barrier_ev * 1e3);
            report.sites = vec![iz.central, iz.outer];
            report.rf_amplitudes_v = iz.drive.rf_amplitudes.clone();
            let grouping = crate::voltsolver::ElectrodeGrouping::twin_interaction(&layout, 16);
            let model = FieldModel::new(&grouping.apply(&layout).map_err(numerical)?);
            (model, iz.drive)
        }
    };
    let prep = PreparedDrive::new(&model, &drive).map_err(numerical)?;
    if report.sites.is_empty() {
        match args.config {
            ReportConfig::ReducedRf => {
                // Characterize the tuned double well around z = 0.
                let mut positions = Vec::new();
                for x0 in [-args.sx / 2.0, args.sx / 2.0] {
                    let guess = Vector3::new(x0, ctx.null.y, 0.0);
                    let p = refine_site(&model, &prep, &species, &guess).ok_or_else(|| {
                        CliError::Numerical("reduced-rf well did not converge".into())
                    })?;
                    report.sites.push(
                        characterize_site(&model, &prep, &species, &p).map_err(numerical)?,
                    );
                    positions.push(p);
                }
                let ub = barrier_between(&model, &prep, &species, &positions[0], &positions[1]);
                report.double_well_barrier_mev = Some(ub * 1e3);
                // Quartic fit of the transverse double-well profile.
                let y0 = 0.5 * (positions[0].y + positions[1].y);
                let span = 1.2 * (positions[1].x - positions[0].x).abs();
                let samples: Vec<(f64, f64)> = (0..81)
                    .map(|i| {
                        let x = -span / 2.0 + span * i as f64 / 80.0;
                        let p = Vector3::new(x, y0, 0.0);
                        (x, crate::fields::total_potential_ev(&model, &prep, &species, &p))
                    })
                    .collect();
                if let Ok(fit) = fit_double_well(&samples, &species) {
                    report.double_well_fit_barrier_mev = Some(fit.barrier_ev * 1e3);
                }
            }
            _ => {
                let region = SearchRegion {
                    x: (-120e-6, 120e-6),
                    y: (0.5 * ctx.null.y, 2.0 * ctx.null.y),
                    z: (-480e-6, 480e-6),
                };
                let sites = find_sites(&model, &prep, &species, &region, [20e-6, 20e-6, 20e-6]);
                for p in &sites {
                    report
                        .sites
                        .push(characterize_site(&model, &prep, &species, p).map_err(numerical)?);
                }
            }
        }
    }
    write_json(&args.out, &report)?;
    // Grid CSV in the x-z plane at the site height.
    let grid_path = args.out.with_extension("grid.csv");
    let file = fs::File::create(&grid_path).map_err(validation)?;
    write_grid_csv(
        &model,
        &prep,
        &species,
        &GridAxis { lo: -150e-6, hi: 150e-6, n: 61 },
        &GridAxis { lo: ctx.null.y, hi: ctx.null.y, n: 1 },
        &GridAxis { lo: -480e-6, hi: 480e-6, n: 97 },
        file,
    )
    .map_err(numerical)?;
    RunManifest::new(
        "report",
        &[&args.layout],
        overrides_from([
            ("config", format!("{:?}", args.config)),
            ("sx", format!("{:e}", args.sx)),
        ]),
    )?
    .write_next_to(&args.out)?;
    println!(
        "report: {} sites -> {} (+ {})",
        report.sites.len(),
        args.out.display(),
        grid_path.display()
    );
    Ok(())
}

fn write_axial_scan_csv(scan: &AxialScan, path: &Path) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_path(path).map_err(validation)?;
    let labels: Vec<String> = scan
        .points
        .iter()
        .find(|p| p.converged)
        .map(|p| p.voltages.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec![
        "z0_left_um".to_string(),
        "z0_right_um".to_string(),
        "converged".to_string(),
        "s_x_um".to_string(),
        "omega_z_left_mhz".to_string(),
        "omega_r1_left_mhz".to_string(),
        "omega_r2_left_mhz".to_string(),
        "omega_z_right_mhz".to_string(),
        "diagnostic".to_string(),
    ];
    header.extend(labels.iter().map(|l| format!("{l}_V")));
    wr.write_record(&header).map_err(numerical)?;
    let fmt = |p: &AxialPoint| -> Vec<String> {
        let freq = |s: &Option<TrapSite>, i: usize| {
            s.as_ref()
                .map(|s| format!("{:.6}", s.secular_frequencies[i] / TAU / 1e6))
                .unwrap_or_default()
        };
        let mut rec = vec![
            format!("{:.3}", p.z0_left * 1e6),
            format!("{:.3}", p.z0_right * 1e6),
            p.converged.to_string(),
            p.s_x.map(|v| format!("{:.3}", v * 1e6)).unwrap_or_default(),
            freq(&p.site_left, 0),
            freq(&p.site_left, 1),
            freq(&p.site_left, 2),
            freq(&p.site_right, 0),
            p.diagnostic.clone().unwrap_or_default(),
        ];
        rec.extend(
            labels
                .iter()
                .map(|l| p.voltages.get(l).map(|v| format!("{v:.6}")).unwrap_or_default()),
        );
        rec
    };
    for p in &scan.points {
        wr.write_record(fmt(p)).map_err(numerical)?;
    }
    wr.flush().map_err(numerical)?;
    Ok(())
}

fn cmd_scan(args: ScanArgs) -> Result<(), CliError> {
    let species = IonSpecies::ca40();
    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(p) = &args.layout {
        inputs.push(p);
    }
    match args.kind {
        ScanKind::Axial => {
            let layout_path = args
                .layout
                .as_ref()
                .ok_or_else(|| CliError::Validation("axial scan needs --layout".into()))?;
            let layout = load_layout(layout_path)?;
            if args.n == 0 {
                return Err(CliError::Validation("--n must be positive".into()));
            }
            let ctx = TwinContext::new(&layout, &species, args.umax, args.q).map_err(numerical)?;
            let scan = scan_axial_translation(
                &ctx,
                &species,
                args.n,
                TAU * args.fz,
                &ScanOptions::default(),
            );
            write_axial_scan_csv(&scan, &args.out)?;
            // JSON twin of the scan for waveform sampling.
            write_json(&args.out.with_extension("json"), &scan)?;
            let ok = scan.points.iter().filter(|p| p.converged).count();
            println!("scan axial: {}/{} points converged -> {}", ok, scan.points.len(), args.out.display());
        }
        ScanKind::RfSpacing => {
            let layout_path = args
                .layout
                .as_ref()
                .ok_or_else(|| CliError::Validation("rf-spacing scan needs --layout".into()))?;
            let layout = load_layout(layout_path)?;
            let mut wr = csv::Writer::from_path(&args.out).map_err(validation)?;
            wr.write_record(["rails", "attenuation_ratio", "spacing_um", "u_low_v", "u_high_v"])
                .map_err(numerical)?;
            if layout.has_group("RFi") {
                let ctx = TwinContext::new(&layout, &species, args.umax, args.q).map_err(numerical)?;
                let tune = tune_twin_spacing(
                    &layout,
                    &species,
                    args.sx,
                    ctx.drive.rf_angular_frequency,
                    args.q,
                    args.umax,
                )
                .map_err(numerical)?;
                wr.write_record([
                    "inner".to_string(),
                    format!("{:.6}", tune.ratio),
                    format!("{:.3}", tune.achieved_spacing * 1e6),
                    format!("{:.3}", tune.drive.rf_amplitudes["RFi"]),
                    format!("{:.3}", tune.drive.rf_amplitudes["RFo"]),
                ])
                .map_err(numerical)?;
            } else {
                for (which, name) in [(RailSelection::Even, "even"), (RailSelection::Odd, "odd")] {
                    let tune =
                        tune_lattice_spacing(&layout, args.sx, 350.0, which, TAU * args.frf)
                            .map_err(numerical)?;
                    let (lo, hi) = match which {
                        RailSelection::Even => ("RFe", "RFo"),
                        _ => ("RFo", "RFe"),
                    };
                    wr.write_record([
                        name.to_string(),
                        format!("{:.6}", tune.ratio),
                        format!("{:.3}", tune.achieved_spacing * 1e6),
                        format!("{:.3}", tune.drive.rf_amplitudes[lo]),
                        format!("{:.3}", tune.drive.rf_amplitudes[hi]),
                    ])
                    .map_err(numerical)?;
                }
            }
            wr.flush().map_err(numerical)?;
            println!("scan rf-spacing -> {}", args.out.display());
        }
        ScanKind::StaticArray => {
            let widths: Vec<f64> = (1..=12).map(|i| args.sx * i as f64 / 13.0).collect();
            let scan = static_array_scan(&species, args.sx, &widths, args.q, TAU * args.frf);
            let mut wr = csv::Writer::from_path(&args.out).map_err(validation)?;
            wr.write_record(["w_rf_um", "converged", "d_um", "u_rf_v", "u0_mev", "diagnostic"])
                .map_err(numerical)?;
            for p in &scan.points {
                wr.write_record([
                    format!("{:.3}", p.w_rf * 1e6),
                    p.converged.to_string(),
                    p.d.map(|v| format!("{:.3}", v * 1e6)).unwrap_or_default(),
                    p.u_rf.map(|v| format!("{v:.3}")).unwrap_or_default(),
                    p.u0.map(|v| format!("{:.4}", v * 1e3)).unwrap_or_default(),
                    p.diagnostic.clone().unwrap_or_default(),
                ])
                .map_err(numerical)?;
            }
            wr.flush().map_err(numerical)?;
            if let Some(best) = scan.max_d_point() {
                println!(
                    "scan static-array: d_max = {:.1} um at w_rf = {:.1} um -> {}",
                    best.d.unwrap_or(0.0) * 1e6,
                    best.w_rf * 1e6,
                    args.out.display()
                );
            }
        }
    }
    RunManifest::new(
        "scan",
        &inputs,
        overrides_from([
            ("kind", format!("{:?}", args.kind)),
            ("n", args.n.to_string()),
            ("sx", format!("{:e}", args.sx)),
        ]),
    )?
    .write_next_to(&args.out)?;
    Ok(())
}

fn cmd_noise(args: NoiseArgs) -> Result<(), CliError> {
    let species = IonSpecies::ca40();
    let mut inputs: Vec<&Path> = Vec::new();
    let circuit = match &args.circuit {
        Some(p) => {
            inputs.push(p);
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<CircuitModel>(&text).map_err(validation)?
        }
        None => CircuitModel::cryogenic_default(),
    };
    let report = noise_report(&species, &circuit, args.delta_c, TAU * args.fz, TAU * args.frf);
    write_json(&args.out, &report)?;
    RunManifest::new(
        "noise",
        &inputs,
        overrides_from([("fz", format!("{:e}", args.fz)), ("frf", format!("{:e}", args.frf))]),
    )?
    .write_next_to(&args.out)?;
    println!(
        "noise: R = {:.3} ohm, heating = {:.4} quanta/s -> {}",
        report.lead_resistance_ohm,
        report.heating_rate_quanta_s,
        args.out.display()
    );
    Ok(())
}

fn cmd_pattern(args: PatternArgs) -> Result<(), CliError> {
    let pattern = detuning_pattern(
        args.rows,
        args.cols,
        TAU * args.fz,
        args.coupling,
        &[5.0, 5.0 * 2f64.sqrt(), 10.0, 5.0 * 5f64.sqrt()],
        args.margin,
        args.order,
    )
    .map_err(validation)?;
    let file = fs::File::create(&args.out).map_err(validation)?;
    pattern.write_csv(file).map_err(numerical)?;
    RunManifest::new(
        "pattern",
        &[],
        overrides_from([
            ("rows", args.rows.to_string()),
            ("cols", args.cols.to_string()),
            ("order", args.order.to_string()),
        ]),
    )?
    .write_next_to(&args.out)?;
    println!(
        "pattern: {} distinct frequencies -> {}",
        pattern.distinct_frequencies(),
        args.out.display()
    );
    Ok(())
}

fn cmd_waveform(args: WaveformArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.scan)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.scan.display())))?;
    let scan: AxialScan = serde_json::from_str(&text).map_err(validation)?;
    let mut path = Vec::new();
    for part in args.path.split(';') {
        let mut it = part.split(',');
        let zl: f64 = it
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Validation(format!("bad path point '{part}'")))?;
        let zr: f64 = it
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Validation(format!("bad path point '{part}'")))?;
        path.push((zl, zr));
    }
    if path.len() < 2 {
        return Err(CliError::Validation("path needs at least two points".into()));
    }
    if args.samples < 2 {
        return Err(CliError::Validation("--samples must be at least 2".into()));
    }
    let rows = path_to_waveform(&scan, &path, args.duration, args.samples).map_err(numerical)?;
    let file = fs::File::create(&args.out).map_err(validation)?;
    write_waveform_csv(&rows, file).map_err(numerical)?;
    RunManifest::new(
        "waveform",
        &[&args.scan],
        overrides_from([("samples", args.samples.to_string())]),
    )?
    .write_next_to(&args.out)?;
    println!("waveform: {} samples -> {}", rows.len(), args.out.display());
    Ok(())
}
