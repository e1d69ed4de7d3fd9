//! Electrode layout construction and validation.
//!
//! Layouts are collections of named planar polygon electrodes in the
//! `y = 0` plane. Everything not covered by a named electrode is implicit
//! grounded plane (the gapless-plane approximation). Physical inter-electrode
//! gaps are absorbed into the stated electrode widths, so neighboring
//! electrodes abut exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Electrical role of an electrode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Rf,
    Dc,
    Ground,
}

/// A named electrode: one or more simple polygons in the chip plane, all
/// tied to one voltage-supply group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolygonElectrode {
    pub name: String,
    pub role: Role,
    pub group: String,
    /// Polygons as counterclockwise vertex lists of `[x, z]` in meters.
    pub polygons: Vec<Vec<[f64; 2]>>,
}

impl PolygonElectrode {
    /// Axis-aligned rectangle helper: `x1 < x2`, `z1 < z2`.
    pub fn rect(name: &str, role: Role, group: &str, x1: f64, x2: f64, z1: f64, z2: f64) -> Self {
        PolygonElectrode {
            name: name.to_string(),
            role,
            group: group.to_string(),
            polygons: vec![vec![[x1, z1], [x2, z1], [x2, z2], [x1, z2]]],
        }
    }

    /// Total area of all polygons (shoelace; polygons assumed simple).
    pub fn area(&self) -> f64 {
        self.polygons.iter().map(|p| polygon_area(p).abs()).sum()
    }
}

/// Signed area (positive for counterclockwise orientation).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

/// A complete chip layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapLayout {
    /// Height of an optional grounded plane above the chip (meters).
    pub top_ground_height_m: Option<f64>,
    pub electrodes: Vec<PolygonElectrode>,
}

impl TrapLayout {
    pub fn electrode(&self, name: &str) -> Option<&PolygonElectrode> {
        self.electrodes.iter().find(|e| e.name == name)
    }

    /// All distinct group labels, in first-appearance order.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.electrodes {
            if !out.contains(&e.group) {
                out.push(e.group.clone());
            }
        }
        out
    }

    /// Group labels with the given role.
    pub fn groups_with_role(&self, role: Role) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.electrodes {
            if e.role == role && !out.contains(&e.group) {
                out.push(e.group.clone());
            }
        }
        out
    }

    pub fn has_group(&self, group: &str) -> bool {
        self.electrodes.iter().any(|e| e.group == group)
    }

    /// Bounding box of all electrodes: `(x_min, x_max, z_min, z_max)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut bb = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for e in &self.electrodes {
            for poly in &e.polygons {
                for v in poly {
                    bb.0 = bb.0.min(v[0]);
                    bb.1 = bb.1.max(v[0]);
                    bb.2 = bb.2.min(v[1]);
                    bb.3 = bb.3.max(v[1]);
                }
            }
        }
        bb
    }
}

/// Which of the built-in layouts to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TwinTrap,
    LatticeArray,
    StaticArray,
}

/// Parameters for the layout builders. All lengths in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LayoutParams {
    /// Two parallel linear traps sharing a central RF rail.
    TwinTrap {
        /// Outer RF rail width (252 µm).
        w_o: f64,
        /// Inner RF rail width (73 µm).
        w_i: f64,
        /// Segmented DC rail width (102 µm).
        w_dc: f64,
        /// DC segment length (102 µm).
        l_dc: f64,
        /// Outer DC rail width (202 µm).
        w_dco: f64,
        /// Independent central segment length of the outer DC rails (306 µm).
        l_dcd: f64,
        /// RF rail length (6 mm).
        l_r: f64,
        /// Number of regular segments per rail on each side of the
        /// interaction zone (16, matching the fabricated chip's 80
        /// electrodes).
        n_segments: usize,
    },
    /// 15-rail array forming a 10×10 usable site lattice.
    LatticeArray {
        /// Even RF rail width (88 µm).
        w_e: f64,
        /// Odd RF rail width (70.4 µm).
        w_o: f64,
        /// Outermost RF rail width (228.8 µm).
        w_edge: f64,
        /// DC lane width (79.2 µm).
        w_dc: f64,
        /// DC segment length (74.8 µm).
        l_dc: f64,
        /// Number of RF rails (odd; 15).
        n_rails: usize,
        /// Number of DC segments per lane (odd; 47).
        n_segments: usize,
        /// Top ground plane height (1 mm).
        top_ground_height: f64,
    },
    /// Uniform-drive array of alternating RF and ground rails.
    StaticArray {
        /// Lattice pitch s_x = w_rf + w_gnd (40 µm).
        s_x: f64,
        /// RF rail width, 0 < w_rf < s_x.
        w_rf: f64,
        /// Number of RF rails (odd; 15).
        n_rails: usize,
        /// Rail length (2 mm).
        rail_length: f64,
        /// Top ground plane height (1 mm).
        top_ground_height: f64,
    },
}

impl LayoutParams {
    /// Reference twin-trap dimensions.
    pub fn twin_default() -> Self {
        LayoutParams::TwinTrap {
            w_o: 252e-6,
            w_i: 73e-6,
            w_dc: 102e-6,
            l_dc: 102e-6,
            w_dco: 202e-6,
            l_dcd: 306e-6,
            l_r: 6e-3,
            n_segments: 16,
        }
    }

    /// Reference 10×10 lattice-array dimensions.
    pub fn lattice_default() -> Self {
        LayoutParams::LatticeArray {
            w_e: 88e-6,
            w_o: 70.4e-6,
            w_edge: 228.8e-6,
            w_dc: 79.2e-6,
            l_dc: 74.8e-6,
            n_rails: 15,
            n_segments: 47,
            top_ground_height: 1e-3,
        }
    }

    /// Static array at pitch 40 µm with the given RF rail width.
    pub fn static_default(w_rf: f64) -> Self {
        LayoutParams::StaticArray {
            s_x: 40e-6,
            w_rf,
            n_rails: 15,
            rail_length: 2e-3,
            top_ground_height: 1e-3,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            LayoutParams::TwinTrap { .. } => Variant::TwinTrap,
            LayoutParams::LatticeArray { .. } => Variant::LatticeArray,
            LayoutParams::StaticArray { .. } => Variant::StaticArray,
        }
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("non-positive dimension: {0}")]
    NonPositiveDimension(&'static str),
    #[error("segments exceed rail length: {total} m > {rail} m")]
    SegmentsExceedRail { total: f64, rail: f64 },
    #[error("parameter variant mismatch: expected {expected}")]
    VariantMismatch { expected: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Build the twin-trap layout (two parallel linear traps around a shared
/// inner RF rail, segmented DC rails with a finer-segmented interaction
/// zone at the center, and unsegmented outer DC rails with an independent
/// central segment).
///
/// Group labels: RF rails are `RFi`/`RFo`. Regular DC segments carry the
/// quadrant-periodic labels `DC1l…DC3l`, `DC1r…DC3r`; the interaction-zone
/// thirds are `DCc1l…DCc3l` (and `r`); the outer DC rails split into the
/// central `DCDl`/`DCDr` and the remainder `DCEl`/`DCEr`.
pub fn build_twin_trap_layout(params: &LayoutParams) -> Result<TrapLayout, GeometryError> {
    let (w_o, w_i, w_dc, l_dc, w_dco, l_dcd, l_r, n_segments) = match *params {
        LayoutParams::TwinTrap {
            w_o,
            w_i,
            w_dc,
            l_dc,
            w_dco,
            l_dcd,
            l_r,
            n_segments,
        } => (w_o, w_i, w_dc, l_dc, w_dco, l_dcd, l_r, n_segments),
        _ => return Err(GeometryError::VariantMismatch { expected: "TwinTrap" }),
    };
    for (v, name) in [
        (w_o, "w_o"),
        (w_i, "w_i"),
        (w_dc, "w_dc"),
        (l_dc, "l_dc"),
        (w_dco, "w_dco"),
        (l_dcd, "l_dcd"),
        (l_r, "l_r"),
        (n_segments as f64, "n_segments"),
    ] {
        if v <= 0.0 {
            return Err(GeometryError::NonPositiveDimension(name));
        }
    }
    let seg_total = l_dc / 2.0 + n_segments as f64 * l_dc;
    if seg_total > l_r / 2.0 {
        return Err(GeometryError::SegmentsExceedRail {
            total: 2.0 * seg_total,
            rail: l_r,
        });
    }
    if l_dcd > l_r {
        return Err(GeometryError::SegmentsExceedRail { total: l_dcd, rail: l_r });
    }

    let mut els: Vec<PolygonElectrode> = Vec::new();
    let zr = l_r / 2.0;

    // RF rails.
    els.push(PolygonElectrode::rect("RFi", Role::Rf, "RFi", -w_i / 2.0, w_i / 2.0, -zr, zr));
    let x_rfo = w_i / 2.0 + w_dc;
    els.push(PolygonElectrode::rect("RFo_r", Role::Rf, "RFo", x_rfo, x_rfo + w_o, -zr, zr));
    els.push(PolygonElectrode::rect("RFo_l", Role::Rf, "RFo", -(x_rfo + w_o), -x_rfo, -zr, zr));

    // Segmented DC rails, one per side of the inner rail.
    for (side, sgn) in [("r", 1.0f64), ("l", -1.0f64)] {
        let (x1, x2) = if sgn > 0.0 {
            (w_i / 2.0, w_i / 2.0 + w_dc)
        } else {
            (-(w_i / 2.0 + w_dc), -w_i / 2.0)
        };
        // Interaction zone: the central segment split in exact thirds.
        let t = l_dc / 6.0;
        for (i, (z1, z2)) in [(-3.0 * t, -t), (-t, t), (t, 3.0 * t)].iter().enumerate() {
            let name = format!("DCc{}{}", i + 1, side);
            els.push(PolygonElectrode::rect(&name, Role::Dc, &name, x1, x2, *z1, *z2));
        }
        // Regular segments, period-3 group labels continuing the pattern
        // symmetrically through the center (segment n at +z and its -z
        // mirror carry complementary labels so the 3-periodicity is
        // seamless across the interaction zone).
        for n in 1..=n_segments {
            let z1 = l_dc / 2.0 + (n as f64 - 1.0) * l_dc;
            let z2 = z1 + l_dc;
            let g_pos = format!("DC{}{}", (n % 3) + 1, side);
            let g_neg = format!("DC{}{}", (3 - (n % 3)) % 3 + 1, side);
            els.push(PolygonElectrode::rect(
                &format!("DCseg{}p{}", n, side),
                Role::Dc,
                &g_pos,
                x1,
                x2,
                z1,
                z2,
            ));
            els.push(PolygonElectrode::rect(
                &format!("DCseg{}m{}", n, side),
                Role::Dc,
                &g_neg,
                x1,
                x2,
                -z2,
                -z1,
            ));
        }
        // Outer DC rail: independent central segment + edge remainder.
        let (xo1, xo2) = if sgn > 0.0 {
            (x_rfo + w_o, x_rfo + w_o + w_dco)
        } else {
            (-(x_rfo + w_o + w_dco), -(x_rfo + w_o))
        };
        let dcd = format!("DCD{side}");
        els.push(PolygonElectrode::rect(&dcd, Role::Dc, &dcd, xo1, xo2, -l_dcd / 2.0, l_dcd / 2.0));
        let dce = format!("DCE{side}");
        let mut e = PolygonElectrode::rect(&dce, Role::Dc, &dce, xo1, xo2, l_dcd / 2.0, zr);
        e.polygons
            .push(vec![[xo1, -zr], [xo2, -zr], [xo2, -l_dcd / 2.0], [xo1, -l_dcd / 2.0]]);
        els.push(e);
    }

    Ok(TrapLayout {
        top_ground_height_m: None,
        electrodes: els,
    })
}

/// Build either array layout (lattice array with segmented DC lanes, or the
/// static array of alternating RF/ground rails).
///
/// Lattice array group labels: `RFe` (the wide-rail family, including the
/// widened outermost rails), `RFo` (the narrow-rail family, including the
/// central rail), and per-lane period-3 DC labels `DC{lane}_{0,1,2}`.
pub fn build_array_layout(params: &LayoutParams) -> Result<TrapLayout, GeometryError> {
    match *params {
        LayoutParams::LatticeArray {
            w_e,
            w_o,
            w_edge,
            w_dc,
            l_dc,
            n_rails,
            n_segments,
            top_ground_height,
        } => {
            for (v, name) in [
                (w_e, "w_e"),
                (w_o, "w_o"),
                (w_edge, "w_edge"),
                (w_dc, "w_dc"),
                (l_dc, "l_dc"),
                (top_ground_height, "top_ground_height"),
            ] {
                if v <= 0.0 {
                    return Err(GeometryError::NonPositiveDimension(name));
                }
            }
            if n_rails < 3 || n_rails % 2 == 0 {
                return Err(GeometryError::InvalidParameter(
                    "n_rails must be odd and >= 3".into(),
                ));
            }
            if n_segments % 2 == 0 {
                return Err(GeometryError::InvalidParameter("n_segments must be odd".into()));
            }
            // Rail widths keyed to the distance from the central rail: the
            // central rail and its alternating family are the narrow (odd)
            // rails, the interleaved family are the wide (even) rails, and
            // the outermost two rails are widened members of the even
            // family.
            let center = (n_rails + 1) / 2;
            let family = |i: usize| -> (f64, &'static str) {
                let d = i.abs_diff(center);
                if i == 1 || i == n_rails {
                    (w_edge, "RFe")
                } else if d % 2 == 1 {
                    (w_e, "RFe")
                } else {
                    (w_o, "RFo")
                }
            };
            let width = |i: usize| family(i).0;
            let total: f64 =
                (1..=n_rails).map(width).sum::<f64>() + (n_rails - 1) as f64 * w_dc;
            let rail_len = n_segments as f64 * l_dc;
            let zr = rail_len / 2.0;

            let mut els = Vec::new();
            let mut x = -total / 2.0;
            for i in 1..=n_rails {
                let (w, group) = family(i);
                els.push(PolygonElectrode::rect(
                    &format!("RF{i}"),
                    Role::Rf,
                    group,
                    x,
                    x + w,
                    -zr,
                    zr,
                ));
                x += w;
                if i < n_rails {
                    // DC lane between rail i and i+1, segmented along z.
                    let half = (n_segments as i64 - 1) / 2;
                    for k in -half..=half {
                        let z1 = k as f64 * l_dc - l_dc / 2.0;
                        let z2 = z1 + l_dc;
                        let phase = k.rem_euclid(3);
                        els.push(PolygonElectrode::rect(
                            &format!("DC{i}s{k}"),
                            Role::Dc,
                            &format!("DC{i}_{phase}"),
                            x,
                            x + w_dc,
                            z1,
                            z2,
                        ));
                    }
                    x += w_dc;
                }
            }
            Ok(TrapLayout {
                top_ground_height_m: Some(top_ground_height),
                electrodes: els,
            })
        }
        LayoutParams::StaticArray {
            s_x,
            w_rf,
            n_rails,
            rail_length,
            top_ground_height,
        } => {
            if s_x <= 0.0 || rail_length <= 0.0 || top_ground_height <= 0.0 {
                return Err(GeometryError::NonPositiveDimension("s_x/rail_length/height"));
            }
            if w_rf <= 0.0 || w_rf >= s_x {
                return Err(GeometryError::InvalidParameter(
                    "w_rf must satisfy 0 < w_rf < s_x".into(),
                ));
            }
            if n_rails < 3 || n_rails % 2 == 0 {
                return Err(GeometryError::InvalidParameter(
                    "n_rails must be odd and >= 3".into(),
                ));
            }
            let zr = rail_length / 2.0;
            let half = (n_rails as i64 - 1) / 2;
            let mut els = Vec::new();
            for k in -half..=half {
                let xc = k as f64 * s_x;
                els.push(PolygonElectrode::rect(
                    &format!("RF{k}"),
                    Role::Rf,
                    "RF",
                    xc - w_rf / 2.0,
                    xc + w_rf / 2.0,
                    -zr,
                    zr,
                ));
            }
            Ok(TrapLayout {
                top_ground_height_m: Some(top_ground_height),
                electrodes: els,
            })
        }
        LayoutParams::TwinTrap { .. } => Err(GeometryError::VariantMismatch {
            expected: "LatticeArray or StaticArray",
        }),
    }
}

/// Build whatever layout the parameters describe.
pub fn build_layout(params: &LayoutParams) -> Result<TrapLayout, GeometryError> {
    match params.variant() {
        Variant::TwinTrap => build_twin_trap_layout(params),
        _ => build_array_layout(params),
    }
}

/// A diagnosed invariant violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: String,
    pub electrodes: Vec<String>,
    pub detail: String,
}

/// Check all layout invariants; returns an empty list iff the layout is
/// valid. `extra_groups` lists group labels referenced by a drive
/// configuration that must exist in the layout.
pub fn validate_layout(layout: &TrapLayout, extra_groups: &[String]) -> Vec<Violation> {
    let mut out = Vec::new();

    if let Some(h) = layout.top_ground_height_m {
        if h <= 0.0 {
            out.push(Violation {
                kind: "top-plane-height".into(),
                electrodes: vec![],
                detail: format!("top_ground_height_m = {h} must be > 0"),
            });
        }
    }

    for e in &layout.electrodes {
        for (i, poly) in e.polygons.iter().enumerate() {
            if poly.len() < 3 {
                out.push(Violation {
                    kind: "degenerate-polygon".into(),
                    electrodes: vec![e.name.clone()],
                    detail: format!("polygon {i} has {} vertices", poly.len()),
                });
                continue;
            }
            if polygon_area(poly).abs() < f64::EPSILON {
                out.push(Violation {
                    kind: "zero-area".into(),
                    electrodes: vec![e.name.clone()],
                    detail: format!("polygon {i} has zero area"),
                });
            }
            if !is_simple_polygon(poly) {
                out.push(Violation {
                    kind: "self-intersection".into(),
                    electrodes: vec![e.name.clone()],
                    detail: format!("polygon {i} is self-intersecting"),
                });
            }
        }
    }

    // Pairwise interior overlap between distinct electrodes.
    for i in 0..layout.electrodes.len() {
        for j in i + 1..layout.electrodes.len() {
            let a = &layout.electrodes[i];
            let b = &layout.electrodes[j];
            if polygons_overlap(a, b) {
                out.push(Violation {
                    kind: "overlap".into(),
                    electrodes: vec![a.name.clone(), b.name.clone()],
                    detail: "electrode interiors intersect".into(),
                });
            }
        }
    }

    // Role consistency: an RF group must not contain DC electrodes.
    for g in layout.groups() {
        let roles: Vec<Role> = layout
            .electrodes
            .iter()
            .filter(|e| e.group == g)
            .map(|e| e.role)
            .collect();
        if roles.contains(&Role::Rf) && roles.contains(&Role::Dc) {
            out.push(Violation {
                kind: "mixed-role-group".into(),
                electrodes: layout
                    .electrodes
                    .iter()
                    .filter(|e| e.group == g)
                    .map(|e| e.name.clone())
                    .collect(),
                detail: format!("group {g} mixes RF and DC electrodes"),
            });
        }
    }

    for g in extra_groups {
        if !layout.has_group(g) {
            out.push(Violation {
                kind: "unknown-group".into(),
                electrodes: vec![],
                detail: format!("drive references group {g} absent from layout"),
            });
        }
    }

    out
}

fn is_simple_polygon(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        for j in i + 1..n {
            // Skip adjacent edges (they share an endpoint).
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (vi, vj) = (poly[i], poly[j]);
        if ((vi[1] > p[1]) != (vj[1] > p[1]))
            && p[0] < (vj[0] - vi[0]) * (p[1] - vi[1]) / (vj[1] - vi[1]) + vi[0]
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn polygon_centroid(poly: &[[f64; 2]]) -> [f64; 2] {
    let n = poly.len() as f64;
    let mut c = [0.0, 0.0];
    for v in poly {
        c[0] += v[0] / n;
        c[1] += v[1] / n;
    }
    c
}

fn polygons_overlap(a: &PolygonElectrode, b: &PolygonElectrode) -> bool {
    for pa in &a.polygons {
        for pb in &b.polygons {
            // AABB prefilter with a tolerance so abutting edges don't count.
            let tol = 1e-12;
            let (bxa, bxb) = (aabb(pa), aabb(pb));
            if bxa.1 - tol <= bxb.0 || bxb.1 - tol <= bxa.0 || bxa.3 - tol <= bxb.2 || bxb.3 - tol <= bxa.2
            {
                continue;
            }
            // Edge crossings imply interior overlap for simple polygons.
            let na = pa.len();
            let nb = pb.len();
            let mut crossing = false;
            'outer: for i in 0..na {
                for j in 0..nb {
                    if segments_intersect(pa[i], pa[(i + 1) % na], pb[j], pb[(j + 1) % nb]) {
                        crossing = true;
                        break 'outer;
                    }
                }
            }
            if crossing
                || point_in_polygon(polygon_centroid(pa), pb)
                || point_in_polygon(polygon_centroid(pb), pa)
            {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twin_default_builds_and_validates() {
        let layout = build_twin_trap_layout(&LayoutParams::twin_default()).unwrap();
        assert!(validate_layout(&layout, &[]).is_empty());
        // 3 RF rails + per side: 3 thirds + 32 segments + DCD + DCE.
        assert_eq!(layout.electrodes.len(), 3 + 2 * (3 + 32 + 2));
        // 8 quadrant-periodic DC channels once the interaction zone and the
        // outer-rail split are folded: DC1..3 l/r plus DCE l/r.
        let dc_groups = layout.groups_with_role(Role::Dc);
        for g in ["DC1l", "DC2l", "DC3l", "DCEl", "DC1r", "DC2r", "DC3r", "DCEr"] {
            assert!(dc_groups.iter().any(|x| x == g), "missing {g}");
        }
    }

    #[test]
    fn twin_rejects_degenerate_rail() {
        let mut p = LayoutParams::twin_default();
        if let LayoutParams::TwinTrap { ref mut w_i, .. } = p {
            *w_i = 0.0;
        }
        assert!(build_twin_trap_layout(&p).is_err());
    }

    #[test]
    fn twin_rejects_overlong_segments() {
        let mut p = LayoutParams::twin_default();
        if let LayoutParams::TwinTrap { ref mut n_segments, .. } = p {
            *n_segments = 100;
        }
        assert!(matches!(
            build_twin_trap_layout(&p),
            Err(GeometryError::SegmentsExceedRail { .. })
        ));
    }

    #[test]
    fn twin_mirror_symmetry() {
        // Vertex sets map onto each other under x -> -x and z -> -z.
        let layout = build_twin_trap_layout(&LayoutParams::twin_default()).unwrap();
        let mut verts: Vec<[f64; 2]> = Vec::new();
        for e in &layout.electrodes {
            for p in &e.polygons {
                verts.extend_from_slice(p);
            }
        }
        for map in [|v: [f64; 2]| [-v[0], v[1]], |v: [f64; 2]| [v[0], -v[1]]] {
            for v in &verts {
                let m = map(*v);
                assert!(
                    verts
                        .iter()
                        .any(|w| (w[0] - m[0]).abs() < 1e-9 && (w[1] - m[1]).abs() < 1e-9),
                    "no mirror partner for {v:?}"
                );
            }
        }
    }

    #[test]
    fn twin_group_periodicity() {
        // In each quadrant, regular segments i and i+3 share a group.
        let layout = build_twin_trap_layout(&LayoutParams::twin_default()).unwrap();
        for side in ["l", "r"] {
            for n in 1..=13usize {
                let a = layout.electrode(&format!("DCseg{n}p{side}")).unwrap();
                let b = layout.electrode(&format!("DCseg{}p{side}", n + 3)).unwrap();
                assert_eq!(a.group, b.group);
            }
        }
    }

    #[test]
    fn lattice_default_builds() {
        let layout = build_array_layout(&LayoutParams::lattice_default()).unwrap();
        assert!(validate_layout(&layout, &[]).is_empty());
        let rf: Vec<_> = layout.electrodes.iter().filter(|e| e.role == Role::Rf).collect();
        assert_eq!(rf.len(), 15);
        let dc_count = layout.electrodes.iter().filter(|e| e.role == Role::Dc).count();
        assert_eq!(dc_count, 14 * 47);
        // Multiwell period is 3 segment lengths.
        if let LayoutParams::LatticeArray { l_dc, .. } = LayoutParams::lattice_default() {
            assert!((3.0 * l_dc - 224.4e-6).abs() < 1e-9);
        }
    }

    #[test]
    fn lattice_period3_labels() {
        let layout = build_array_layout(&LayoutParams::lattice_default()).unwrap();
        let a = layout.electrode("DC7s0").unwrap();
        let b = layout.electrode("DC7s3").unwrap();
        let c = layout.electrode("DC7s-3").unwrap();
        assert_eq!(a.group, b.group);
        assert_eq!(a.group, c.group);
    }

    #[test]
    fn static_array_builds() {
        let layout = build_array_layout(&LayoutParams::static_default(20e-6)).unwrap();
        assert!(validate_layout(&layout, &[]).is_empty());
        assert_eq!(layout.electrodes.len(), 15);
        // Pitch check: adjacent rail centers 40 µm apart.
        let bb0 = aabb(&layout.electrode("RF0").unwrap().polygons[0]);
        let bb1 = aabb(&layout.electrode("RF1").unwrap().polygons[0]);
        let c0 = (bb0.0 + bb0.1) / 2.0;
        let c1 = (bb1.0 + bb1.1) / 2.0;
        assert!((c1 - c0 - 40e-6).abs() < 1e-12);
    }

    #[test]
    fn static_array_rejects_bad_width() {
        assert!(build_array_layout(&LayoutParams::static_default(0.0)).is_err());
        assert!(build_array_layout(&LayoutParams::static_default(40e-6)).is_err());
    }

    #[test]
    fn validate_flags_overlap_and_unknown_group() {
        let mut layout = build_twin_trap_layout(&LayoutParams::twin_default()).unwrap();
        let dup = layout.electrodes[0].clone();
        layout.electrodes.push(PolygonElectrode {
            name: "RFi_copy".into(),
            ..dup
        });
        let v = validate_layout(&layout, &["DC9x".to_string()]);
        assert!(v.iter().any(|x| x.kind == "overlap"
            && x.electrodes.contains(&"RFi".to_string())
            && x.electrodes.contains(&"RFi_copy".to_string())));
        assert!(v.iter().any(|x| x.kind == "unknown-group" && x.detail.contains("DC9x")));
    }

    #[test]
    fn layout_json_round_trip() {
        let layout = build_twin_trap_layout(&LayoutParams::twin_default()).unwrap();
        let s = serde_json::to_string(&layout).unwrap();
        assert!(s.contains("\"top_ground_height_m\""));
        let back: TrapLayout = serde_json::from_str(&s).unwrap();
        assert_eq!(back.electrodes.len(), layout.electrodes.len());
        assert_eq!(back.electrodes[0].name, layout.electrodes[0].name);
    }
}

pub(crate) fn aabb(poly: &[[f64; 2]]) -> (f64, f64, f64, f64) {
    let mut bb = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in poly {
        bb.0 = bb.0.min(v[0]);
        bb.1 = bb.1.max(v[0]);
        bb.2 = bb.2.min(v[1]);
        bb.3 = bb.3.max(v[1]);
    }
    bb
}
