//! Parameter scans and configuration search: independent axial
//! translations, RF-ratio tuning of the transverse site spacing, the
//! interaction-zone axial squeeze, the static-array trade-off study, and
//! path-to-waveform sampling.

use crate::analysis::{barrier_between, characterize_site, global_depth, DepthOptions, TrapSite};
use crate::fields::{
    total_gradient_ev, total_potential_ev, DriveConfig, FieldModel, PreparedDrive,
};
use crate::geometry::{LayoutParams, TrapLayout};
use crate::optim::newton_descent_3d;
use crate::units::IonSpecies;
use crate::voltsolver::{
    amplitude_for_q, attenuation_for_spacing, choose_rf_drive_twin, rf_null_xy, solve_voltages,
    ElectrodeGrouping, SolveTargets, VoltSolverError,
};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShuttleError {
    #[error(transparent)]
    Solver(#[from] VoltSolverError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("path point ({0:.3e}, {1:.3e}) lies outside the scanned grid")]
    PathOutsideScan(f64, f64),
    #[error("scan point failed: {0}")]
    PointFailed(String),
    #[error("no stable site found: {0}")]
    NoSite(String),
}

/// One record of an axial-translation scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxialPoint {
    /// Target well position on the left column (m).
    pub z0_left: f64,
    /// Target well position on the right column (m).
    pub z0_right: f64,
    pub converged: bool,
    pub diagnostic: Option<String>,
    /// Solved channel voltages (V).
    pub voltages: BTreeMap<String, f64>,
    pub site_left: Option<TrapSite>,
    pub site_right: Option<TrapSite>,
    /// Transverse distance between the two columns' sites (m).
    pub s_x: Option<f64>,
}

/// Grid scan over independent axial translations of the two columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxialScan {
    /// Grid values for the left/right well positions (m).
    pub z_left_axis: Vec<f64>,
    pub z_right_axis: Vec<f64>,
    /// Row-major points: index = i_left * len(z_right_axis) + i_right.
    pub points: Vec<AxialPoint>,
}

/// What to compute per scan point beyond the solve + characterization.
#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub compute_barriers: bool,
    pub compute_depth: bool,
    /// Watershed spacing for per-point depths (m).
    pub depth_spacing: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            compute_barriers: false,
            compute_depth: false,
            depth_spacing: 2e-6,
        }
    }
}

/// Everything fixed across a twin-trap scan: relabeled model, grouping,
/// RF drive, and the RF-null cross-section position.
pub struct TwinContext {
    pub model: FieldModel,
    pub grouping: ElectrodeGrouping,
    pub drive: DriveConfig,
    /// RF null in the x-y plane at z = 0 (left column; the right column
    /// mirrors it at -x).
    pub null: Vector3<f64>,
    /// Axial lattice period 3 l_dc (m).
    pub period: f64,
}

impl TwinContext {
    /// Build the default twin-trap context: 8-channel grouping and an RF
    /// drive selected for the target stability factor.
    pub fn new(
        layout: &TrapLayout,
        species: &IonSpecies,
        u_max: f64,
        q_target: f64,
    ) -> Result<Self, ShuttleError> {
        let sel = choose_rf_drive_twin(layout, species, u_max, q_target, 40e-6)?;
        let grouping = ElectrodeGrouping::twin_default(layout);
        let relabeled = grouping.apply(layout)?;
        let model = FieldModel::new(&relabeled);
        let null = rf_null_xy(&model, &[("RFi", 1.0), ("RFo", 1.0)], 0.0, (-52e-6, 120e-6))?;
        let drive = DriveConfig::new(sel.omega)
            .with_rf("RFi", sel.u_default)
            .with_rf("RFo", sel.u_default);
        Ok(TwinContext {
            model,
            grouping,
            drive,
            null,
            period: 3.0 * 102e-6,
        })
    }
}

/// Refine a total-potential minimum from a guess; returns the position.
pub fn refine_site(
    model: &FieldModel,
    prep: &PreparedDrive,
    species: &IonSpecies,
    guess: &Vector3<f64>,
) -> Option<Vector3<f64>> {
    let f = |p: &Vector3<f64>| total_potential_ev(model, prep, species, p);
    let g = |p: &Vector3<f64>| total_gradient_ev(model, prep, species, p);
    newton_descent_3d(&f, &g, *guess, 1e-4, 25e-6, 80).map(|(p, _)| p)
}

/// Solve and characterize one (z0_left, z0_right) configuration.
fn axial_point(
    ctx: &TwinContext,
    species: &IonSpecies,
    omega_target: f64,
    z0l: f64,
    z0r: f64,
    opts: &ScanOptions,
) -> AxialPoint {
    let mut point = AxialPoint {
        z0_left: z0l,
        z0_right: z0r,
        converged: false,
        diagnostic: None,
        voltages: BTreeMap::new(),
        site_left: None,
        site_right: None,
        s_x: None,
    };
    let sl = Vector3::new(ctx.null.x, ctx.null.y, z0l);
    let sr = Vector3::new(-ctx.null.x, ctx.null.y, z0r);
    let targets = SolveTargets::axial(species, omega_target, omega_target);
    let sys = match solve_voltages(&ctx.model, &ctx.grouping, &sl, &sr, &targets) {
        Ok(s) => s,
        Err(e) => {
            point.diagnostic = Some(format!("solve: {e}"));
            return point;
        }
    };
    point.voltages = sys.voltage_map();
    let drive = sys.apply_to(ctx.drive.clone());
    let prep = match PreparedDrive::new(&ctx.model, &drive) {
        Ok(p) => p,
        Err(e) => {
            point.diagnostic = Some(format!("drive: {e}"));
            return point;
        }
    };
    let mut characterized = Vec::new();
    for (guess, label) in [(sl, "left"), (sr, "right")] {
        let refined = match refine_site(&ctx.model, &prep, species, &guess) {
            Some(p) if (p - guess).norm() < 30e-6 => p,
            _ => {
                point.diagnostic = Some(format!("{label}: no converged minimum near target"));
                return point;
            }
        };
        match characterize_site(&ctx.model, &prep, species, &refined) {
            Ok(site) => characterized.push((refined, site)),
            Err(e) => {
                point.diagnostic = Some(format!("{label}: {e}"));
                return point;
            }
        }
    }
    let (pos_l, mut site_l) = characterized[0].clone();
    let (pos_r, mut site_r) = characterized[1].clone();
    point.s_x = Some(pos_r.x - pos_l.x);
    if opts.compute_barriers {
        let ub = barrier_between(&ctx.model, &prep, species, &pos_l, &pos_r);
        site_l.barrier_rf_ev = Some(ub);
        site_r.barrier_rf_ev = Some(ub);
        // One axial barrier per point: the left site's +z neighbour. The
        // other three (left -z, right +-z) are equivalent by the layout's
        // mirror symmetry and the solution's axial periodicity.
        let nb_guess = pos_l + Vector3::new(0.0, 0.0, ctx.period);
        if let Some(nb) = refine_site(&ctx.model, &prep, species, &nb_guess) {
            let umw = barrier_between(&ctx.model, &prep, species, &pos_l, &nb);
            site_l.barrier_axial_right_ev = Some(umw);
            site_r.barrier_axial_right_ev = Some(umw);
        }
    }
    if opts.compute_depth {
        let mut depth_opts = DepthOptions::around(&pos_l, ctx.model.top_height);
        depth_opts.spacing = opts.depth_spacing;
        match global_depth(&ctx.model, &prep, species, &pos_l, &depth_opts) {
            Ok(u0) => {
                site_l.depth_global_ev = Some(u0);
                site_r.depth_global_ev = Some(u0);
            }
            Err(e) => {
                point.diagnostic = Some(format!("depth: {e}"));
            }
        }
    }
    point.site_left = Some(site_l);
    point.site_right = Some(site_r);
    point.converged = true;
    point
}

/// Scan independent axial translations of both columns over
/// `[-period/2, period/2]²` on an `n x n` grid.
pub fn scan_axial_translation(
    ctx: &TwinContext,
    species: &IonSpecies,
    n: usize,
    omega_target: f64,
    opts: &ScanOptions,
) -> AxialScan {
    let half = ctx.period / 2.0;
    let axis: Vec<f64> = (0..n)
        .map(|i| -half + ctx.period * i as f64 / (n - 1).max(1) as f64)
        .collect();
    let mut jobs = Vec::new();
    for &zl in &axis {
        for &zr in &axis {
            jobs.push((zl, zr));
        }
    }
    let points: Vec<AxialPoint> = jobs
        .par_iter()
        .map(|&(zl, zr)| axial_point(ctx, species, omega_target, zl, zr, opts))
        .collect();
    AxialScan {
        z_left_axis: axis.clone(),
        z_right_axis: axis,
        points,
    }
}

/// Which rails to attenuate when tuning the site spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RailSelection {
    /// Twin trap: the shared inner rail.
    Inner,
    /// Lattice array: the even-index rails.
    Even,
    /// Lattice array: the odd-index rails.
    Odd,
}

/// Result of an RF spacing tune.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpacingTune {
    /// Attenuation ratio: attenuated amplitude / reference amplitude.
    pub ratio: f64,
    /// Achieved spacing at z = 0 (m).
    pub achieved_spacing: f64,
    /// Full drive realizing the tune.
    pub drive: DriveConfig,
    /// Null positions of the tuned pair (m).
    pub nulls: [Vector3<f64>; 2],
}

/// Twin-trap spacing tune: attenuate the inner rail until the null pair
/// sits `target_sx` apart, then scale the outer amplitude so the DC-free
/// stability factor equals `q_target` at `omega` (chosen beforehand so
/// that q = q_target needs the full `u_max` at the reference spacing).
pub fn tune_twin_spacing(
    layout: &TrapLayout,
    species: &IonSpecies,
    target_sx: f64,
    omega: f64,
    q_target: f64,
    u_max: f64,
) -> Result<SpacingTune, ShuttleError> {
    let model = FieldModel::new(layout);
    let ratio = attenuation_for_spacing(&model, target_sx)?;
    let null = rf_null_xy(&model, &[("RFi", ratio), ("RFo", 1.0)], 0.0, (-target_sx / 2.0, 120e-6))?;
    // Outer amplitude for the target q in the tuned configuration. q is
    // linear in the common amplitude scale.
    let wr_unit = crate::voltsolver::radial_frequency_dc_free(
        &model,
        &[("RFi", ratio), ("RFo", 1.0)],
        omega,
        species,
        &null,
    )?;
    let q_unit = 8.0f64.sqrt() * wr_unit / omega;
    let u_outer = q_target / q_unit;
    let _ = u_max;
    let drive = DriveConfig::new(omega)
        .with_rf("RFi", ratio * u_outer)
        .with_rf("RFo", u_outer);
    Ok(SpacingTune {
        ratio,
        achieved_spacing: -2.0 * null.x,
        drive,
        nulls: [null, Vector3::new(-null.x, null.y, 0.0)],
    })
}

/// Null x-positions of the lattice array in the z = 0 cross-section for
/// the given even/odd rail amplitudes, sorted by x.
pub fn lattice_nulls(
    model: &FieldModel,
    layout: &TrapLayout,
    amp_even: f64,
    amp_odd: f64,
) -> Vec<Vector3<f64>> {
    // One seed above each DC lane (between consecutive rails).
    let mut lane_centers = Vec::new();
    let mut rails: Vec<(f64, f64)> = layout
        .electrodes
        .iter()
        .filter(|e| e.name.starts_with("RF"))
        .map(|e| {
            let xs: Vec<f64> = e.polygons[0].iter().map(|v| v[0]).collect();
            (xs.iter().cloned().fold(f64::MAX, f64::min), xs.iter().cloned().fold(f64::MIN, f64::max))
        })
        .collect();
    rails.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in rails.windows(2) {
        lane_centers.push(0.5 * (w[0].1 + w[1].0));
    }
    let mut nulls: Vec<Vector3<f64>> = Vec::new();
    for &xc in &lane_centers {
        if let Ok(p) = rf_null_xy(model, &[("RFe", amp_even), ("RFo", amp_odd)], 0.0, (xc, 100e-6))
        {
            // Keep genuine nulls only: interior, above the surface, and
            // not duplicates.
            if p.y > 20e-6
                && p.y < 400e-6
                && (p.x - xc).abs() < 170e-6
                && !nulls.iter().any(|q| (p - q).norm() < 1e-6)
            {
                nulls.push(p);
            }
        }
    }
    nulls.sort_by(|a, b| a.x.total_cmp(&b.x));
    nulls
}

/// Lattice-array spacing tune: attenuate the selected rail parity until
/// the minimum adjacent null spacing reaches `target_sx`, holding the
/// other parity at `u_ref`.
pub fn tune_lattice_spacing(
    layout: &TrapLayout,
    target_sx: f64,
    u_ref: f64,
    which: RailSelection,
    omega: f64,
) -> Result<SpacingTune, ShuttleError> {
    let model = FieldModel::new(layout);
    let (att_group, amps): (&str, Box<dyn Fn(f64) -> (f64, f64)>) = match which {
        RailSelection::Even => ("RFe", Box::new(move |r: f64| (r * u_ref, u_ref))),
        RailSelection::Odd => ("RFo", Box::new(move |r: f64| (u_ref, r * u_ref))),
        RailSelection::Inner => unreachable!("inner rail selection is for the twin trap"),
    };
    // Reference rail: the attenuated rail closest to the array center.
    // Nulls merge pairwise across the attenuated rails, so the spacing is
    // measured between the null pair straddling this rail; edge pairs are
    // perturbed by the widened outermost rails and are not representative.
    let rail_x = layout
        .electrodes
        .iter()
        .filter(|e| e.group == att_group)
        .map(|e| {
            let xs: Vec<f64> = e.polygons[0].iter().map(|v| v[0]).collect();
            0.5 * (xs.iter().cloned().fold(f64::MAX, f64::min)
                + xs.iter().cloned().fold(f64::MIN, f64::max))
        })
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .ok_or_else(|| ShuttleError::PointFailed("no rails in attenuated group".into()))?;
    // A genuine tuned pair hugs the reference rail; once the pair merges
    // and annihilates, the nearest straddling nulls belong to the
    // neighbouring lanes. Treat that as "gap below target".
    let hug = 140e-6;
    let straddling = move |nulls: &[Vector3<f64>]| -> Option<[Vector3<f64>; 2]> {
        nulls
            .windows(2)
            .find(|w| {
                w[0].x < rail_x
                    && rail_x < w[1].x
                    && rail_x - w[0].x < hug
                    && w[1].x - rail_x < hug
            })
            .map(|w| [w[0], w[1]])
    };
    let min_gap = |ratio: f64| -> f64 {
        let (ae, ao) = amps(ratio);
        let nulls = lattice_nulls(&model, layout, ae, ao);
        straddling(&nulls).map(|p| p[1].x - p[0].x).unwrap_or(0.0)
    };
    // Bracket: ratio 1 gives the default gap; shrink until below target.
    let mut lo = 0.05;
    let hi = 1.0;
    if min_gap(hi) <= target_sx {
        return Err(ShuttleError::PointFailed(
            "default spacing already below target".into(),
        ));
    }
    while min_gap(lo) > target_sx {
        lo += 0.05;
        if lo >= hi {
            return Err(ShuttleError::PointFailed(
                "could not bracket the attenuation ratio".into(),
            ));
        }
    }
    let mut a = lo;
    let mut b = hi;
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if (b - a) * u_ref < 1e-3 || (min_gap(m) - target_sx).abs() < 0.2e-6 {
            a = m;
            break;
        }
        if min_gap(m) > target_sx {
            b = m;
        } else {
            a = m;
        }
    }
    let ratio = a;
    let (ae, ao) = amps(ratio);
    let nulls = lattice_nulls(&model, layout, ae, ao);
    let pair = straddling(&nulls)
        .ok_or_else(|| ShuttleError::PointFailed("tuned null pair not found".into()))?;
    Ok(SpacingTune {
        ratio,
        achieved_spacing: pair[1].x - pair[0].x,
        drive: DriveConfig::new(omega).with_rf("RFe", ae).with_rf("RFo", ao),
        nulls: pair,
    })
}

/// Interaction-zone configuration: a solved voltage set placing a central
/// site pair `target_sz` apart (one solved site at +target_sz/2; mirror
/// symmetry creates the partner) while an outer site keeps the regular
/// lattice registration.
#[derive(Debug, Clone)]
pub struct InteractionZone {
    pub system: crate::voltsolver::ConstraintSystem,
    pub drive: DriveConfig,
    /// Refined central-pair site at +z (m).
    pub central_site: Vector3<f64>,
    /// Refined outer site (m).
    pub outer_site: Vector3<f64>,
    /// Axial barrier between the central pair (eV).
    pub central_barrier_ev: f64,
    pub central: TrapSite,
    pub outer: TrapSite,
}

/// Solve the interaction-zone squeeze on the twin trap.
pub fn interaction_zone_config(
    layout: &TrapLayout,
    species: &IonSpecies,
    base_drive: &DriveConfig,
    target_sz: f64,
    omega_target: f64,
    outer_z: f64,
) -> Result<InteractionZone, ShuttleError> {
    let n_segments = match layout.electrodes.iter().filter(|e| e.name.starts_with("DCseg") && e.name.ends_with('l')).count() {
        0 => 16,
        n => n / 2,
    };
    let grouping = ElectrodeGrouping::twin_interaction(layout, n_segments);
    let relabeled = grouping.apply(layout)?;
    let model = FieldModel::new(&relabeled);
    let null = rf_null_xy(&model, &[("RFi", 1.0), ("RFo", 1.0)], 0.0, (-52e-6, 120e-6))?;
    let sc = Vector3::new(null.x, null.y, target_sz / 2.0);
    let so = Vector3::new(null.x, null.y, outer_z);
    let targets = SolveTargets::axial(species, omega_target, omega_target);
    let sys = solve_voltages(&model, &grouping, &sc, &so, &targets)?;
    let drive = sys.apply_to(base_drive.clone());
    let prep = PreparedDrive::new(&model, &drive)
        .map_err(|e| ShuttleError::PointFailed(e.to_string()))?;
    let central_site = refine_site(&model, &prep, species, &sc)
        .ok_or_else(|| ShuttleError::NoSite("central interaction site".into()))?;
    let outer_site = refine_site(&model, &prep, species, &so)
        .ok_or_else(|| ShuttleError::NoSite("outer interaction site".into()))?;
    let mirror = Vector3::new(central_site.x, central_site.y, -central_site.z);
    let barrier = barrier_between(&model, &prep, species, &mirror, &central_site);
    let central = characterize_site(&model, &prep, species, &central_site)?;
    let outer = characterize_site(&model, &prep, species, &outer_site)?;
    Ok(InteractionZone {
        system: sys,
        drive,
        central_site,
        outer_site,
        central_barrier_ev: barrier,
        central,
        outer,
    })
}

/// One record of the static-array trade-off scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticPoint {
    /// RF rail width (m).
    pub w_rf: f64,
    pub converged: bool,
    pub diagnostic: Option<String>,
    /// Ion-surface separation (m).
    pub d: Option<f64>,
    /// Amplitude giving the target stability factor (V).
    pub u_rf: Option<f64>,
    /// Global depth at that amplitude (eV), from the vertical escape
    /// profile above the site.
    pub u0: Option<f64>,
}

/// Static-array trade-off scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticScan {
    pub s_x: f64,
    pub points: Vec<StaticPoint>,
}

impl StaticScan {
    /// The converged point with the largest ion height.
    pub fn max_d_point(&self) -> Option<&StaticPoint> {
        self.points
            .iter()
            .filter(|p| p.converged)
            .max_by(|a, b| a.d.unwrap_or(0.0).total_cmp(&b.d.unwrap_or(0.0)))
    }
}

/// Scan the static array's RF rail width at fixed pitch: per width, find
/// the central site height, the amplitude for the target q, and the
/// resulting depth.
pub fn static_array_scan(
    species: &IonSpecies,
    s_x: f64,
    widths: &[f64],
    q_target: f64,
    omega_rf: f64,
) -> StaticScan {
    let points: Vec<StaticPoint> = widths
        .par_iter()
        .map(|&w| {
            let mut point = StaticPoint {
                w_rf: w,
                converged: false,
                diagnostic: None,
                d: None,
                u_rf: None,
                u0: None,
            };
            let params = LayoutParams::StaticArray {
                s_x,
                w_rf: w,
                n_rails: 15,
                rail_length: 2e-3,
                top_ground_height: 1e-3,
            };
            let layout = match crate::geometry::build_layout(&params) {
                Ok(l) => l,
                Err(e) => {
                    point.diagnostic = Some(e.to_string());
                    return point;
                }
            };
            let model = FieldModel::new(&layout);
            let null = match rf_null_xy(&model, &[("RF", 1.0)], 0.0, (s_x / 2.0, 0.8 * s_x)) {
                Ok(p) if p.y > 1e-6 && p.y < 20.0 * s_x => p,
                _ => {
                    point.diagnostic = Some("no RF null above the lane".into());
                    return point;
                }
            };
            let u = match amplitude_for_q(&model, species, &["RF"], omega_rf, q_target, &null, 1000.0)
            {
                Ok(u) => u,
                Err(e) => {
                    point.diagnostic = Some(e.to_string());
                    return point;
                }
            };
            let drive = DriveConfig::new(omega_rf).with_rf("RF", u);
            let prep = match PreparedDrive::new(&model, &drive) {
                Ok(p) => p,
                Err(e) => {
                    point.diagnostic = Some(e.to_string());
                    return point;
                }
            };
            // Depth: the maximum of the total potential on the vertical
            // escape line above the site, up to (well below) the top
            // plane.
            let y_top = (8.0 * null.y).min(0.9e-3);
            let mut u0 = 0.0f64;
            let f0 = total_potential_ev(&model, &prep, species, &null);
            for i in 0..=400 {
                let y = null.y + (y_top - null.y) * i as f64 / 400.0;
                let v = total_potential_ev(&model, &prep, species, &Vector3::new(null.x, y, null.z));
                u0 = u0.max(v - f0);
            }
            point.d = Some(null.y);
            point.u_rf = Some(u);
            point.u0 = Some(u0);
            point.converged = true;
            point
        })
        .collect();
    StaticScan { s_x, points }
}

/// Bilinearly interpolate the solved voltages of an axial scan along a
/// path, sampled uniformly in time.
pub fn path_to_waveform(
    scan: &AxialScan,
    path: &[(f64, f64)],
    duration: f64,
    samples: usize,
) -> Result<Vec<(f64, BTreeMap<String, f64>)>, ShuttleError> {
    assert!(samples >= 2 && path.len() >= 2);
    let labels: Vec<String> = scan
        .points
        .iter()
        .find(|p| p.converged)
        .map(|p| p.voltages.keys().cloned().collect())
        .unwrap_or_default();
    let interp = |zl: f64, zr: f64| -> Result<BTreeMap<String, f64>, ShuttleError> {
        let locate = |axis: &[f64], v: f64| -> Option<(usize, f64)> {
            if v < axis[0] - 1e-12 || v > axis[axis.len() - 1] + 1e-12 {
                return None;
            }
            let i = axis
                .windows(2)
                .position(|w| v <= w[1] + 1e-12)
                .unwrap_or(axis.len() - 2);
            let t = ((v - axis[i]) / (axis[i + 1] - axis[i])).clamp(0.0, 1.0);
            Some((i, t))
        };
        let (il, tl) =
            locate(&scan.z_left_axis, zl).ok_or(ShuttleError::PathOutsideScan(zl, zr))?;
        let (ir, tr) =
            locate(&scan.z_right_axis, zr).ok_or(ShuttleError::PathOutsideScan(zl, zr))?;
        let nc = scan.z_right_axis.len();
        let corner = |a: usize, b: usize| -> Result<&AxialPoint, ShuttleError> {
            let p = &scan.points[a * nc + b];
            if !p.converged {
                return Err(ShuttleError::PointFailed(format!(
                    "corner ({a}, {b}) did not converge"
                )));
            }
            Ok(p)
        };
        let c00 = corner(il, ir)?;
        let c01 = corner(il, ir + 1)?;
        let c10 = corner(il + 1, ir)?;
        let c11 = corner(il + 1, ir + 1)?;
        let mut out = BTreeMap::new();
        for label in &labels {
            let v00 = c00.voltages[label];
            let v01 = c01.voltages[label];
            let v10 = c10.voltages[label];
            let v11 = c11.voltages[label];
            let v = (1.0 - tl) * ((1.0 - tr) * v00 + tr * v01) + tl * ((1.0 - tr) * v10 + tr * v11);
            out.insert(label.clone(), v);
        }
        Ok(out)
    };
    let mut rows = Vec::with_capacity(samples);
    // Path arc-length parametrization over the polyline.
    let mut cum = vec![0.0f64];
    for w in path.windows(2) {
        let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total: f64 = *cum.last().unwrap();
    for k in 0..samples {
        let t = k as f64 / (samples - 1) as f64;
        let target = t * total;
        let (mut zl, mut zr) = *path.last().unwrap();
        for (i, w) in path.windows(2).enumerate() {
            if target <= cum[i + 1] || i == path.len() - 2 {
                let seg = (cum[i + 1] - cum[i]).max(1e-300);
                let u = ((target - cum[i]) / seg).clamp(0.0, 1.0);
                zl = w[0].0 + u * (w[1].0 - w[0].0);
                zr = w[0].1 + u * (w[1].1 - w[0].1);
                break;
            }
        }
        rows.push((t * duration, interp(zl, zr)?));
    }
    Ok(rows)
}

/// Write a waveform as CSV: t_s plus one voltage column per channel.
pub fn write_waveform_csv<W: std::io::Write>(
    rows: &[(f64, BTreeMap<String, f64>)],
    w: W,
) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let labels: Vec<&String> = rows.first().map(|r| r.1.keys().collect()).unwrap_or_default();
    let mut header = vec!["t_s".to_string()];
    header.extend(labels.iter().map(|l| format!("{l}_V")));
    wr.write_record(&header)?;
    for (t, volts) in rows {
        let mut rec = vec![format!("{t:.9}")];
        rec.extend(labels.iter().map(|l| format!("{:.6}", volts[*l])));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
