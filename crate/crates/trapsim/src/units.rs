//! Physical constants, ion species, and unit helpers.

/// Elementary charge in coulombs (2019 SI exact value).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Unified atomic mass unit in kilograms.
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
/// Vacuum permittivity in F/m.
pub const EPSILON_0: f64 = 8.854_187_8128e-12;
/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant in J/K (2019 SI exact value).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Convenience: 2π.
pub const TAU: f64 = std::f64::consts::TAU;

/// An ion species: everything the field/mode formulas need to know about
/// the trapped particle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IonSpecies {
    /// Ion mass in kg.
    pub mass: f64,
    /// Ion charge in C.
    pub charge: f64,
    /// Optical wavenumber (rad/m) used for the micromotion modulation
    /// index β = k·z_mm. Defaults to 2π/729 nm (Ca⁺ quadrupole line).
    pub wavenumber: f64,
}

impl IonSpecies {
    /// Singly charged calcium-40, the species used throughout.
    pub fn ca40() -> Self {
        IonSpecies {
            mass: 40.0 * ATOMIC_MASS,
            charge: ELEMENTARY_CHARGE,
            wavenumber: TAU / 729e-9,
        }
    }

    /// Custom species from mass number and charge state.
    pub fn new(mass_amu: f64, charge_states: i32, wavelength_m: f64) -> Self {
        IonSpecies {
            mass: mass_amu * ATOMIC_MASS,
            charge: f64::from(charge_states) * ELEMENTARY_CHARGE,
            wavenumber: TAU / wavelength_m,
        }
    }

    /// Curvature ∂²φ/∂z² (V/m²) that yields axial angular frequency `omega`
    /// for this species: κ = M·ω²/Q.
    pub fn curvature_for_frequency(&self, omega: f64) -> f64 {
        self.mass * omega * omega / self.charge
    }

    /// Secular angular frequency for a potential curvature λ in V/m²:
    /// ω = √(Q·λ/M). Negative curvatures map to 0 (unstable direction).
    pub fn frequency_for_curvature(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            0.0
        } else {
            (self.charge * lambda / self.mass).sqrt()
        }
    }
}

/// Convert an angular frequency (rad/s) to the conventional ω/2π in MHz.
pub fn rad_per_s_to_mhz(omega: f64) -> f64 {
    omega / TAU / 1e6
}

/// Convert meters to micrometers for display.
pub fn m_to_um(x: f64) -> f64 {
    x * 1e6
}

/// Convert eV to meV for display.
pub fn ev_to_mev(e: f64) -> f64 {
    e * 1e3
}
