//! Electrostatic basis potentials in the gapless-plane approximation, and
//! assembled DC + RF-pseudopotential landscapes.
//!
//! In the gapless-plane approximation the potential above an infinite
//! grounded plane containing one polygonal patch held at 1 V equals the
//! solid angle the patch subtends at the observation point, divided by 2π.
//! Gradients are evaluated analytically from a line integral over the
//! polygon edges; Hessians by Richardson-extrapolated central differences
//! of the analytic gradient.

use crate::geometry::{PolygonElectrode, Role, TrapLayout};
use crate::units::{IonSpecies, ELEMENTARY_CHARGE};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("observation point must be above the electrode plane (y > 0), got y = {0}")]
    BelowPlane(f64),
    #[error("drive references unknown group: {0}")]
    UnknownGroup(String),
    #[error("RF angular frequency must be positive")]
    NonPositiveOmega,
}

/// Solid-angle fraction (potential per volt) of a single planar polygon at
/// `y = 0`, seen from `p` with `p.y > 0`. Uses a signed triangle fan
/// (Van Oosterom–Strackee) so any simple polygon orientation works.
pub fn polygon_solid_angle_fraction(poly: &[[f64; 2]], p: &Vector3<f64>) -> f64 {
    signed_polygon_solid_angle(poly, p).abs() / (2.0 * std::f64::consts::PI)
}

fn signed_polygon_solid_angle(poly: &[[f64; 2]], p: &Vector3<f64>) -> f64 {
    let v0 = vertex(poly[0], p);
    let mut total = 0.0;
    for i in 1..poly.len() - 1 {
        let v1 = vertex(poly[i], p);
        let v2 = vertex(poly[i + 1], p);
        total += triangle_solid_angle(&v0, &v1, &v2);
    }
    total
}

#[inline]
fn vertex(v: [f64; 2], p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v[0] - p.x, -p.y, v[1] - p.z)
}

/// Signed solid angle of a triangle given vertex vectors relative to the
/// observation point (Van Oosterom & Strackee).
#[inline]
fn triangle_solid_angle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let la = a.norm();
    let lb = b.norm();
    let lc = c.norm();
    let numer = a.dot(&b.cross(c));
    let denom = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * numer.atan2(denom)
}

/// Analytic gradient of the signed polygon solid angle with respect to the
/// observation point: a sum over polygon edges.
fn signed_solid_angle_gradient(poly: &[[f64; 2]], p: &Vector3<f64>) -> Vector3<f64> {
    let n = poly.len();
    let mut g = Vector3::zeros();
    for i in 0..n {
        let a = vertex(poly[i], p);
        let b = vertex(poly[(i + 1) % n], p);
        let la = a.norm();
        let lb = b.norm();
        let denom = la * lb * (la * lb + a.dot(&b));
        if denom.abs() < f64::MIN_POSITIVE {
            continue;
        }
        g += a.cross(&b) * ((la + lb) / denom);
    }
    g
}

/// Gradient (1/m) of the solid-angle-fraction potential of one polygon.
pub fn polygon_potential_gradient(poly: &[[f64; 2]], p: &Vector3<f64>) -> Vector3<f64> {
    let sign = signed_polygon_solid_angle(poly, p).signum();
    signed_solid_angle_gradient(poly, p) * (sign / (2.0 * std::f64::consts::PI))
}

/// Basis potential of a whole electrode (additive over its polygons).
/// Errors if the point is not strictly above the plane.
pub fn basis_potential(electrode: &PolygonElectrode, p: &Vector3<f64>) -> Result<f64, FieldError> {
    if p.y <= 0.0 {
        return Err(FieldError::BelowPlane(p.y));
    }
    Ok(electrode
        .polygons
        .iter()
        .map(|poly| polygon_solid_angle_fraction(poly, p))
        .sum())
}

/// Gradient and Hessian of the electrode basis potential.
pub fn basis_derivatives(
    electrode: &PolygonElectrode,
    p: &Vector3<f64>,
) -> Result<(Vector3<f64>, Matrix3<f64>), FieldError> {
    if p.y <= 0.0 {
        return Err(FieldError::BelowPlane(p.y));
    }
    let grad_fn = |q: &Vector3<f64>| {
        let mut g = Vector3::zeros();
        for poly in &electrode.polygons {
            g += polygon_potential_gradient(poly, q);
        }
        g
    };
    Ok((grad_fn(p), hessian_of_gradient(&grad_fn, p)))
}

/// Richardson-extrapolated central-difference Hessian of a gradient field,
/// symmetrized. Base step 10 nm.
pub fn hessian_of_gradient<F>(grad: &F, p: &Vector3<f64>) -> Matrix3<f64>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let h = 1e-8;
    let col = |j: usize, step: f64| -> Vector3<f64> {
        let mut pp = *p;
        let mut pm = *p;
        pp[j] += step;
        pm[j] -= step;
        (grad(&pp) - grad(&pm)) / (2.0 * step)
    };
    let mut m = Matrix3::zeros();
    for j in 0..3 {
        let d1 = col(j, h);
        let d2 = col(j, h / 2.0);
        let c = (d2 * 4.0 - d1) / 3.0;
        m.set_column(j, &c);
    }
    (m + m.transpose()) * 0.5
}

/// RF/DC drive configuration: amplitudes per RF group (volts at drive
/// peak), RF angular frequency, and DC voltages per group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriveConfig {
    pub rf_amplitudes: BTreeMap<String, f64>,
    /// Ω_RF in rad/s.
    pub rf_angular_frequency: f64,
    pub dc_voltages: BTreeMap<String, f64>,
}

impl DriveConfig {
    pub fn new(rf_omega: f64) -> Self {
        DriveConfig {
            rf_amplitudes: BTreeMap::new(),
            rf_angular_frequency: rf_omega,
            dc_voltages: BTreeMap::new(),
        }
    }

    pub fn with_rf(mut self, group: &str, volts: f64) -> Self {
        self.rf_amplitudes.insert(group.to_string(), volts);
        self
    }

    pub fn with_dc(mut self, group: &str, volts: f64) -> Self {
        self.dc_voltages.insert(group.to_string(), volts);
        self
    }
}

/// One fully evaluated field point.
#[derive(Debug, Clone, Serialize)]
pub struct FieldSample {
    /// Observation point (m).
    pub point: [f64; 3],
    /// DC potential (V).
    pub phi_dc: f64,
    /// DC field −∇φ_dc (V/m).
    pub e_dc: [f64; 3],
    /// RF potential at the applied amplitudes (V, drive peak).
    pub phi_rf: f64,
    /// RF field amplitude −∇φ_rf (V/m, drive peak).
    pub e_rf: [f64; 3],
    /// DC Hessian (V/m²), row-major.
    pub hessian_dc: [[f64; 3]; 3],
    /// Pseudopotential (eV).
    pub pseudo: f64,
    /// Total potential = pseudo + charge-weighted DC (eV).
    pub total: f64,
}

/// A layout compiled for fast field evaluation: per-group polygon lists
/// plus the optional top-ground-plane image series.
#[derive(Debug, Clone)]
pub struct FieldModel {
    groups: Vec<GroupBasis>,
    rf_group_indices: Vec<usize>,
    /// Top ground plane height (m), if present.
    pub top_height: Option<f64>,
    /// Number of image-series terms for the top plane. A single image is
    /// not accurate enough at millimetre plane spacings; two terms (image
    /// plus first re-reflection) are.
    pub n_image_terms: usize,
}

#[derive(Debug, Clone)]
struct GroupBasis {
    name: String,
    role: Role,
    polys: Vec<Vec<[f64; 2]>>,
}

impl FieldModel {
    pub fn new(layout: &TrapLayout) -> Self {
        let mut groups: Vec<GroupBasis> = Vec::new();
        for e in &layout.electrodes {
            match groups.iter_mut().find(|g| g.name == e.group) {
                Some(g) => g.polys.extend(e.polygons.iter().cloned()),
                None => groups.push(GroupBasis {
                    name: e.group.clone(),
                    role: e.role,
                    polys: e.polygons.clone(),
                }),
            }
        }
        let rf_group_indices = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.role == Role::Rf)
            .map(|(i, _)| i)
            .collect();
        FieldModel {
            groups,
            rf_group_indices,
            top_height: layout.top_ground_height_m,
            n_image_terms: if layout.top_ground_height_m.is_some() { 2 } else { 1 },
        }
    }

    pub fn group_names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.name.as_str()).collect()
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn rf_groups(&self) -> Vec<&str> {
        self.rf_group_indices
            .iter()
            .map(|&i| self.groups[i].name.as_str())
            .collect()
    }

    pub fn dc_groups(&self) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|g| g.role == Role::Dc)
            .map(|g| g.name.as_str())
            .collect()
    }

    /// Basis potential of group `idx` at `p` (image-corrected).
    pub fn group_phi(&self, idx: usize, p: &Vector3<f64>) -> f64 {
        let g = &self.groups[idx];
        match self.top_height {
            None => g
                .polys
                .iter()
                .map(|poly| polygon_solid_angle_fraction(poly, p))
                .sum(),
            Some(h) => {
                let mut s = 0.0;
                for poly in &g.polys {
                    for k in 0..self.n_image_terms {
                        let kf = k as f64;
                        let q_up = Vector3::new(p.x, p.y + 2.0 * kf * h, p.z);
                        let q_dn = Vector3::new(p.x, 2.0 * (kf + 1.0) * h - p.y, p.z);
                        s += polygon_solid_angle_fraction(poly, &q_up)
                            - polygon_solid_angle_fraction(poly, &q_dn);
                    }
                }
                s
            }
        }
    }

    /// Analytic gradient of the group basis potential.
    pub fn group_grad(&self, idx: usize, p: &Vector3<f64>) -> Vector3<f64> {
        let g = &self.groups[idx];
        match self.top_height {
            None => {
                let mut out = Vector3::zeros();
                for poly in &g.polys {
                    out += polygon_potential_gradient(poly, p);
                }
                out
            }
            Some(h) => {
                let mut out = Vector3::zeros();
                for poly in &g.polys {
                    for k in 0..self.n_image_terms {
                        let kf = k as f64;
                        let q_up = Vector3::new(p.x, p.y + 2.0 * kf * h, p.z);
                        let q_dn = Vector3::new(p.x, 2.0 * (kf + 1.0) * h - p.y, p.z);
                        let gu = polygon_potential_gradient(poly, &q_up);
                        let gd = polygon_potential_gradient(poly, &q_dn);
                        // The image term is -f(x, 2(k+1)H - y, z), whose
                        // y-derivative picks up d(y')/dy = -1.
                        out += Vector3::new(gu.x - gd.x, gu.y + gd.y, gu.z - gd.z);
                    }
                }
                out
            }
        }
    }

    /// Hessian of the group basis potential.
    pub fn group_hessian(&self, idx: usize, p: &Vector3<f64>) -> Matrix3<f64> {
        let f = |q: &Vector3<f64>| self.group_grad(idx, q);
        hessian_of_gradient(&f, p)
    }
}

/// A drive resolved against a model: group indices with weights, for
/// allocation-free evaluation in hot loops.
#[derive(Debug, Clone)]
pub struct PreparedDrive {
    rf: Vec<(usize, f64)>,
    dc: Vec<(usize, f64)>,
    /// Ω_RF (rad/s).
    pub omega: f64,
}

impl PreparedDrive {
    pub fn new(model: &FieldModel, drive: &DriveConfig) -> Result<Self, FieldError> {
        if drive.rf_angular_frequency <= 0.0 {
            return Err(FieldError::NonPositiveOmega);
        }
        let resolve = |m: &BTreeMap<String, f64>| -> Result<Vec<(usize, f64)>, FieldError> {
            m.iter()
                .map(|(name, &v)| {
                    model
                        .group_index(name)
                        .map(|i| (i, v))
                        .ok_or_else(|| FieldError::UnknownGroup(name.clone()))
                })
                .collect()
        };
        Ok(PreparedDrive {
            rf: resolve(&drive.rf_amplitudes)?,
            dc: resolve(&drive.dc_voltages)?,
            omega: drive.rf_angular_frequency,
        })
    }

    /// RF potential at drive peak (V).
    pub fn rf_phi(&self, model: &FieldModel, p: &Vector3<f64>) -> f64 {
        self.rf.iter().map(|&(i, v)| v * model.group_phi(i, p)).sum()
    }

    /// RF potential gradient at drive peak (V/m).
    pub fn rf_grad(&self, model: &FieldModel, p: &Vector3<f64>) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        for &(i, v) in &self.rf {
            g += model.group_grad(i, p) * v;
        }
        g
    }

    /// DC potential (V).
    pub fn dc_phi(&self, model: &FieldModel, p: &Vector3<f64>) -> f64 {
        self.dc.iter().map(|&(i, v)| v * model.group_phi(i, p)).sum()
    }

    /// DC potential gradient (V/m).
    pub fn dc_grad(&self, model: &FieldModel, p: &Vector3<f64>) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        for &(i, v) in &self.dc {
            g += model.group_grad(i, p) * v;
        }
        g
    }
}

/// Pseudopotential in eV: Q²|E_RF|² / (4 M Ω²), converted from joules.
pub fn pseudopotential_ev(
    model: &FieldModel,
    drive: &PreparedDrive,
    species: &IonSpecies,
    p: &Vector3<f64>,
) -> f64 {
    let e = drive.rf_grad(model, p); // -E_RF, same squared norm
    let e2 = e.norm_squared();
    species.charge * species.charge * e2
        / (4.0 * species.mass * drive.omega * drive.omega)
        / ELEMENTARY_CHARGE
}

/// Total potential in eV: pseudopotential plus charge-weighted DC
/// potential.
pub fn total_potential_ev(
    model: &FieldModel,
    drive: &PreparedDrive,
    species: &IonSpecies,
    p: &Vector3<f64>,
) -> f64 {
    pseudopotential_ev(model, drive, species, p)
        + (species.charge / ELEMENTARY_CHARGE) * drive.dc_phi(model, p)
}

/// Gradient of the total potential (eV/m). The pseudopotential part uses
/// ∇|∇φ|² = 2 H_φ ∇φ with the RF Hessian from finite differences of the
/// analytic gradient.
pub fn total_gradient_ev(
    model: &FieldModel,
    drive: &PreparedDrive,
    species: &IonSpecies,
    p: &Vector3<f64>,
) -> Vector3<f64> {
    let g_rf = drive.rf_grad(model, p);
    let grad_fn = |q: &Vector3<f64>| drive.rf_grad(model, q);
    let h_rf = hessian_of_gradient(&grad_fn, p);
    let scale = species.charge * species.charge
        / (4.0 * species.mass * drive.omega * drive.omega)
        / ELEMENTARY_CHARGE;
    h_rf * g_rf * (2.0 * scale) + drive.dc_grad(model, p) * (species.charge / ELEMENTARY_CHARGE)
}

/// Full field sample at one point.
pub fn sample(
    model: &FieldModel,
    drive: &PreparedDrive,
    species: &IonSpecies,
    p: &Vector3<f64>,
) -> Result<FieldSample, FieldError> {
    if p.y <= 0.0 {
        return Err(FieldError::BelowPlane(p.y));
    }
    let phi_dc = drive.dc_phi(model, p);
    let g_dc = drive.dc_grad(model, p);
    let phi_rf = drive.rf_phi(model, p);
    let g_rf = drive.rf_grad(model, p);
    let dc_grad_fn = |q: &Vector3<f64>| drive.dc_grad(model, q);
    let h_dc = hessian_of_gradient(&dc_grad_fn, p);
    let pseudo = pseudopotential_ev(model, drive, species, p);
    let total = pseudo + (species.charge / ELEMENTARY_CHARGE) * phi_dc;
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            hess[i][j] = h_dc[(i, j)];
        }
    }
    Ok(FieldSample {
        point: [p.x, p.y, p.z],
        phi_dc,
        e_dc: [-g_dc.x, -g_dc.y, -g_dc.z],
        phi_rf,
        e_rf: [-g_rf.x, -g_rf.y, -g_rf.z],
        hessian_dc: hess,
        pseudo,
        total,
    })
}

/// Axis definition for grid exports: uniform samples over `[lo, hi]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.n <= 1 {
            return vec![(self.lo + self.hi) / 2.0];
        }
        (0..self.n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64)
            .collect()
    }
}

/// Evaluate the potential on a rectangular grid and write the CSV format
/// used for regenerating the potential-landscape figures. Rows are emitted
/// in fixed (x, y, z) lexicographic order regardless of worker count.
pub fn write_grid_csv<W: std::io::Write>(
    model: &FieldModel,
    drive: &PreparedDrive,
    species: &IonSpecies,
    xs: &GridAxis,
    ys: &GridAxis,
    zs: &GridAxis,
    out: W,
) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let xv = xs.values();
    let yv = ys.values();
    let zv = zs.values();
    let mut points = Vec::with_capacity(xv.len() * yv.len() * zv.len());
    for &x in &xv {
        for &y in &yv {
            for &z in &zv {
                points.push(Vector3::new(x, y, z));
            }
        }
    }
    let rows: Vec<(f64, f64, f64, f64, f64, f64)> = points
        .par_iter()
        .map(|p| {
            let phi_dc = drive.dc_phi(model, p);
            let ps = pseudopotential_ev(model, drive, species, p);
            let tot = ps + (species.charge / ELEMENTARY_CHARGE) * phi_dc;
            (p.x * 1e6, p.y * 1e6, p.z * 1e6, phi_dc, ps * 1e3, tot * 1e3)
        })
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_um", "y_um", "z_um", "phi_dc_V", "pseudo_meV", "total_meV"])?;
    for r in rows {
        w.write_record([
            format!("{:.6}", r.0),
            format!("{:.6}", r.1),
            format!("{:.6}", r.2),
            format!("{:.9e}", r.3),
            format!("{:.9e}", r.4),
            format!("{:.9e}", r.5),
        ])?;
    }
    w.flush()?;
    Ok(())
}
