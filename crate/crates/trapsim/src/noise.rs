//! Closed-form estimators: inter-site motional coupling, lead resistance,
//! Johnson-noise heating, RF pickup through parasitic coupling, and the
//! multi-order well-detuning pattern for parasitic-coupling suppression.

use crate::fields::FieldModel;
use crate::units::{IonSpecies, BOLTZMANN, EPSILON_0, HBAR, TAU};
use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("group {0} produces no field along the requested direction")]
    ZeroProjectedField(String),
    #[error("unknown electrode group {0}")]
    UnknownGroup(String),
    #[error("pattern dims must be even, got {rows}x{cols}")]
    OddDims { rows: usize, cols: usize },
    #[error("pattern order must be <= 4, got {0}")]
    OrderTooHigh(usize),
}

/// Coupling axis relative to the inter-site separation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingAxis {
    /// Motion transverse to the separation (prefactor 1/2).
    X,
    /// Motion along the separation (prefactor 1).
    Z,
}

/// Resonant motional coupling rate between two ions (rad/s):
/// Ω_c = ς Q² / (2π ε₀ M ω s³), with ς = 1 along the separation and 1/2
/// transverse to it.
pub fn coupling_rate(species: &IonSpecies, omega: f64, s: f64, axis: CouplingAxis) -> f64 {
    assert!(omega > 0.0 && s > 0.0);
    let sigma = match axis {
        CouplingAxis::X => 0.5,
        CouplingAxis::Z => 1.0,
    };
    sigma * species.charge * species.charge
        / (TAU * EPSILON_0 * species.mass)
        / (omega * s * s * s)
}

/// Electrical model of one DC supply lead and its filtering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitModel {
    /// Lead layer resistivity (Ω·m).
    pub resistivity_ohm_m: f64,
    /// Lead length (m).
    pub lead_length_m: f64,
    /// Lead width (m).
    pub lead_width_m: f64,
    /// Lead thickness (m).
    pub lead_thickness_m: f64,
    /// Lead inductance (H).
    pub lead_inductance_h: f64,
    /// Parasitic RF-electrode coupling capacitance (F).
    pub parasitic_capacitance_f: f64,
    /// Filter/grounding capacitance (F).
    pub filter_capacitance_f: f64,
    /// Temperature (K).
    pub temperature_k: f64,
}

impl CircuitModel {
    /// Cryogenic defaults for a sputtered-metal lead with on-chip
    /// filtering.
    pub fn cryogenic_default() -> Self {
        CircuitModel {
            resistivity_ohm_m: 2.58e-9,
            lead_length_m: 3.56e-3,
            lead_width_m: 20e-6,
            lead_thickness_m: 1000e-9,
            lead_inductance_h: 0.2e-9,
            parasitic_capacitance_f: 0.01e-12,
            filter_capacitance_f: 330e-9,
            temperature_k: 20.0,
        }
    }

    pub fn lead_resistance(&self) -> f64 {
        lead_resistance(
            self.resistivity_ohm_m,
            self.lead_length_m,
            self.lead_width_m,
            self.lead_thickness_m,
        )
    }
}

/// DC sheet-lead resistance R = l ρ / (w t).
pub fn lead_resistance(rho: f64, l: f64, w: f64, t: f64) -> f64 {
    assert!(rho > 0.0 && w > 0.0 && t > 0.0 && l >= 0.0);
    l * rho / (w * t)
}

/// Characteristic distance of an electrode group at a site: δ_c such that
/// one volt on the group produces a field 1/δ_c along `direction`.
pub fn characteristic_distance(
    model: &FieldModel,
    group: &str,
    site: &Vector3<f64>,
    direction: &Vector3<f64>,
) -> Result<f64, NoiseError> {
    let idx = model
        .group_index(group)
        .ok_or_else(|| NoiseError::UnknownGroup(group.to_string()))?;
    let e = -model.group_grad(idx, site);
    let proj = e.dot(&direction.normalize()).abs();
    if proj < 1e-12 {
        return Err(NoiseError::ZeroProjectedField(group.to_string()));
    }
    Ok(1.0 / proj)
}

/// Johnson-noise field spectral density and the resulting heating rate:
/// S_E = 4 k_B T R / δ_c², Γ_h = Q² S_E / (4 M ħ ω).
pub fn johnson_heating(
    species: &IonSpecies,
    circuit: &CircuitModel,
    delta_c: f64,
    omega: f64,
) -> (f64, f64) {
    assert!(delta_c > 0.0 && omega > 0.0);
    let r = circuit.lead_resistance();
    let s_e = 4.0 * BOLTZMANN * circuit.temperature_k * r / (delta_c * delta_c);
    let gamma = species.charge * species.charge * s_e / (4.0 * species.mass * HBAR * omega);
    (s_e, gamma)
}

/// Complex RF pickup ratio ε_p = (Z_lead + Z_Cf) / (Z_Cp + Z_lead + Z_Cf)
/// with Z_C = −i/(Ω C) and Z_lead = R + i Ω L.
pub fn rf_pickup(circuit: &CircuitModel, omega_rf: f64) -> Complex64 {
    assert!(circuit.parasitic_capacitance_f > 0.0 && omega_rf > 0.0);
    let z_lead = Complex64::new(circuit.lead_resistance(), omega_rf * circuit.lead_inductance_h);
    let z_cp = Complex64::new(0.0, -1.0 / (omega_rf * circuit.parasitic_capacitance_f));
    let z_cf = if circuit.filter_capacitance_f > 0.0 {
        Complex64::new(0.0, -1.0 / (omega_rf * circuit.filter_capacitance_f))
    } else {
        Complex64::new(0.0, 0.0)
    };
    (z_lead + z_cf) / (z_cp + z_lead + z_cf)
}

/// Per-site axial-frequency assignment suppressing parasitic couplings up
/// to a given order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetuningPattern {
    pub rows: usize,
    pub cols: usize,
    /// Base axial frequency (rad/s).
    pub omega_z: f64,
    /// Suppression order (0..=4).
    pub order: usize,
    /// Required minimum detuning per order (rad/s), index 0 = order 1.
    pub deltas: Vec<f64>,
    /// Frequencies (rad/s), row-major over sites.
    pub frequencies: Vec<f64>,
}

impl DetuningPattern {
    pub fn frequency(&self, row: usize, col: usize) -> f64 {
        self.frequencies[row * self.cols + col]
    }

    /// Distinct frequency count.
    pub fn distinct_frequencies(&self) -> usize {
        let mut v: Vec<u64> = self.frequencies.iter().map(|f| f.to_bits()).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    /// Write the pattern as CSV: row, col, frequency_Hz.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row", "col", "frequency_Hz"])?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                wr.write_record([
                    r.to_string(),
                    c.to_string(),
                    format!("{:.6}", self.frequency(r, c) / TAU),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Build the detuning pattern over a `rows x cols` site lattice whose
/// sites pair up along the column direction (one shared frequency per
/// pair). Orders suppress pair-lattice separations s_1 (adjacent), s_2
/// (diagonal), s_3 (next-nearest) and s_4 (knight's move); the required
/// detuning per order is `margin * omega_c0 * (s_0 / s_i)^3`. Lower-order
/// detunings are inflated to survive partial cancellation by the
/// higher-order offsets.
pub fn detuning_pattern(
    rows: usize,
    cols: usize,
    omega_z: f64,
    omega_c0: f64,
    spacing_ratios: &[f64; 4],
    margin: f64,
    order: usize,
) -> Result<DetuningPattern, NoiseError> {
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(NoiseError::OddDims { rows, cols });
    }
    if order > 4 {
        return Err(NoiseError::OrderTooHigh(order));
    }
    assert!(margin >= 1.0);
    let delta: Vec<f64> = spacing_ratios
        .iter()
        .map(|&r| margin * omega_c0 / (r * r * r))
        .collect();
    // Inflation: the stripe offsets of orders 2 and 4 partially cancel
    // the checkerboard offsets of orders 1 and 3 on half the lattice, and
    // the doubled-cell offsets (3, 4) shift entire order-1/2 classes; the
    // base amplitudes grow so every class keeps its required minimum.
    let d4 = if order >= 4 { delta[3] } else { 0.0 };
    let d3 = if order >= 3 { delta[2] } else { 0.0 };
    let d2 = if order >= 2 { delta[1] + d3 + 2.0 * d4 } else { 0.0 };
    let d1 = if order >= 1 { delta[0] + d3 + 2.0 * d4 } else { 0.0 };
    let mut freqs = vec![0.0f64; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let nc = c / 2;
            let s1 = if (r + nc) % 2 == 0 { 1.0 } else { -1.0 };
            let s2 = if r % 2 == 0 { 1.0 } else { -1.0 };
            let s3 = if ((r / 2) + (nc / 2)) % 2 == 0 { 1.0 } else { -1.0 };
            let s4 = if (r / 2) % 2 == 0 { 1.0 } else { -1.0 };
            freqs[r * cols + c] = omega_z + s1 * d1 + (s1 + s2) * d2 + s3 * d3 + (s3 + s4) * d4;
        }
    }
    Ok(DetuningPattern {
        rows,
        cols,
        omega_z,
        order,
        deltas: delta[..order].to_vec(),
        frequencies: freqs,
    })
}

/// Noise report bundling the closed-form estimates for one operating
/// point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseReport {
    pub circuit: CircuitModel,
    pub secular_frequency_rad_s: f64,
    pub rf_frequency_rad_s: f64,
    pub characteristic_distance_m: f64,
    pub lead_resistance_ohm: f64,
    pub johnson_field_psd_v2_m2_hz: f64,
    pub heating_rate_quanta_s: f64,
    pub rf_pickup_magnitude: f64,
}

/// Evaluate all closed-form noise estimates at once.
pub fn noise_report(
    species: &IonSpecies,
    circuit: &CircuitModel,
    delta_c: f64,
    omega: f64,
    omega_rf: f64,
) -> NoiseReport {
    let (s_e, gamma) = johnson_heating(species, circuit, delta_c, omega);
    NoiseReport {
        circuit: circuit.clone(),
        secular_frequency_rad_s: omega,
        rf_frequency_rad_s: omega_rf,
        characteristic_distance_m: delta_c,
        lead_resistance_ohm: circuit.lead_resistance(),
        johnson_field_psd_v2_m2_hz: s_e,
        heating_rate_quanta_s: gamma,
        rf_pickup_magnitude: rf_pickup(circuit, omega_rf).norm(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_rate_scaling_structure() {
        let species = IonSpecies::ca40();
        let w = TAU * 1e6;
        let z1 = coupling_rate(&species, w, 40e-6, CouplingAxis::Z);
        let z2 = coupling_rate(&species, w, 80e-6, CouplingAxis::Z);
        let x1 = coupling_rate(&species, w, 40e-6, CouplingAxis::X);
        assert!((z1 / z2 - 8.0).abs() < 1e-12);
        assert!((x1 / z1 - 0.5).abs() < 1e-12);
        // Independent oracle: direct formula evaluation.
        let expect = species.charge * species.charge
            / (TAU * EPSILON_0 * species.mass * w * 40e-6f64.powi(3));
        assert!((z1 - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn lead_resistance_formula() {
        let r = lead_resistance(2.58e-9, 3.56e-3, 20e-6, 1000e-9);
        assert!((r - 0.45924).abs() < 1e-4, "{r}");
        assert!((lead_resistance(2.58e-9, 3.56e-3, 40e-6, 1000e-9) - r / 2.0).abs() < 1e-12);
        assert_eq!(lead_resistance(2.58e-9, 0.0, 20e-6, 1000e-9), 0.0);
    }

    #[test]
    fn johnson_heating_oracle_values() {
        let species = IonSpecies::ca40();
        let circuit = CircuitModel::cryogenic_default();
        let (s_e, gamma) = johnson_heating(&species, &circuit, 2.19e-3, TAU * 1e6);
        // Oracle: 4 k_B T R / dc^2 with T=20 K, R=0.459 Ohm, dc=2.19 mm.
        let r = circuit.lead_resistance();
        let s_ref = 4.0 * BOLTZMANN * 20.0 * r / (2.19e-3f64 * 2.19e-3);
        assert!((s_e - s_ref).abs() < 1e-12 * s_ref);
        assert!((s_e / 1.06e-16 - 1.0).abs() < 0.02, "S_E = {s_e}");
        assert!((gamma / 0.0154 - 1.0).abs() < 0.03, "Gamma = {gamma}");
        // T = 0 gives zeros.
        let mut cold = circuit.clone();
        cold.temperature_k = 0.0;
        let (s0, g0) = johnson_heating(&species, &cold, 2.19e-3, TAU * 1e6);
        assert_eq!(s0, 0.0);
        assert_eq!(g0, 0.0);
        // Gamma proportional to 1/omega.
        let (_, g2) = johnson_heating(&species, &circuit, 2.19e-3, TAU * 2e6);
        assert!((g2 * 2.0 - gamma).abs() < 1e-12 * gamma);
    }

    #[test]
    fn rf_pickup_limits_and_reference_magnitude() {
        let circuit = CircuitModel::cryogenic_default();
        let eps = rf_pickup(&circuit, TAU * 25e6);
        assert!((eps.norm() / 7.23e-7 - 1.0).abs() < 0.02, "{}", eps.norm());
        // Perfect ground: zero lead impedance, infinite filter capacitance.
        let mut ideal = circuit.clone();
        ideal.resistivity_ohm_m = 1e-30;
        ideal.lead_inductance_h = 0.0;
        ideal.filter_capacitance_f = 0.0; // treated as a short to ground
        assert!(rf_pickup(&ideal, TAU * 25e6).norm() < 1e-12);
        // Direct short through a huge parasitic capacitance.
        let mut short = circuit.clone();
        short.parasitic_capacitance_f = 1e3;
        assert!((rf_pickup(&short, TAU * 25e6).norm() - 1.0).abs() < 1e-3);
        // Monotone in R and C_p around the reference point.
        let mut prev = 0.0;
        for scale in [0.3, 1.0, 3.0] {
            let mut c = circuit.clone();
            c.resistivity_ohm_m *= scale;
            let m = rf_pickup(&c, TAU * 25e6).norm();
            assert!(m > prev);
            prev = m;
        }
        prev = 0.0;
        for scale in [0.3, 1.0, 3.0] {
            let mut c = circuit.clone();
            c.parasitic_capacitance_f *= scale;
            let m = rf_pickup(&c, TAU * 25e6).norm();
            assert!(m > prev);
            prev = m;
        }
    }

    fn ratios() -> [f64; 4] {
        [5.0, 5.0 * 2.0f64.sqrt(), 10.0, 5.0 * 5.0f64.sqrt()]
    }

    #[test]
    fn detuning_pattern_brute_force_separation_check() {
        let omega = TAU * 1e6;
        let oc0 = TAU * 1e3;
        for order in 0..=4usize {
            let pat = detuning_pattern(8, 16, omega, oc0, &ratios(), 10.0, order).unwrap();
            // Pair partners share a frequency exactly.
            for r in 0..8 {
                for c in (0..16).step_by(2) {
                    assert_eq!(pat.frequency(r, c), pat.frequency(r, c + 1));
                }
            }
            // Brute force over the pair lattice.
            let node = |r: usize, nc: usize| pat.frequency(r, 2 * nc);
            let offsets: [&[(i64, i64)]; 4] = [
                &[(1, 0), (0, 1)],
                &[(1, 1), (1, -1)],
                &[(2, 0), (0, 2)],
                &[(2, 1), (1, 2), (2, -1), (1, -2)],
            ];
            for i in 0..order {
                let need = 10.0 * oc0 / ratios()[i].powi(3);
                let mut min_df = f64::INFINITY;
                for r in 0..8i64 {
                    for c in 0..8i64 {
                        for &(dr, dc) in offsets[i] {
                            let (r2, c2) = (r + dr, c + dc);
                            if (0..8).contains(&r2) && (0..8).contains(&c2) {
                                let df = (node(r as usize, c as usize)
                                    - node(r2 as usize, c2 as usize))
                                .abs();
                                min_df = min_df.min(df);
                            }
                        }
                    }
                }
                assert!(
                    min_df >= need - 1e-9,
                    "order {order}, class {}: min {min_df} < required {need}",
                    i + 1
                );
            }
            match order {
                0 => assert_eq!(pat.distinct_frequencies(), 1),
                4 => assert_eq!(pat.distinct_frequencies(), 16),
                _ => assert!(pat.distinct_frequencies() <= 16),
            }
            // Detunings stay well below a kHz.
            let max_det = pat
                .frequencies
                .iter()
                .map(|f| (f - omega).abs())
                .fold(0.0f64, f64::max);
            assert!(max_det < TAU * 1e3, "max detuning {max_det}");
        }
    }

    #[test]
    fn detuning_pattern_rejects_bad_dims_and_order() {
        let omega = TAU * 1e6;
        assert!(matches!(
            detuning_pattern(7, 16, omega, TAU * 1e3, &ratios(), 10.0, 2),
            Err(NoiseError::OddDims { .. })
        ));
        assert!(matches!(
            detuning_pattern(8, 16, omega, TAU * 1e3, &ratios(), 10.0, 5),
            Err(NoiseError::OrderTooHigh(5))
        ));
    }

    #[test]
    fn pattern_csv_is_deterministic() {
        let pat = detuning_pattern(4, 4, TAU * 1e6, TAU * 1e3, &ratios(), 10.0, 2).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        pat.write_csv(&mut a).unwrap();
        pat.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("row,col,frequency_Hz\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
