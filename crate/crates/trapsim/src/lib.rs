//! Simulation and design toolkit for two-dimensional arrays of linear
//! surface ion traps.
//!
//! The crate models planar electrode layouts in the gapless-plane
//! approximation, evaluates RF pseudopotentials and DC potentials, locates
//! and characterizes trapping sites, solves constrained linear systems for
//! DC voltage sets, runs shuttling/tuning parameter scans, and provides
//! closed-form noise and motional-coupling estimators.
//!
//! Coordinate convention: the electrode plane is `y = 0`; `x` is the
//! lateral (inter-trap) direction, `y` the surface normal, `z` the trap
//! axis. All geometry is stored in SI meters; energies are reported in eV
//! internally and meV at the interfaces.

pub mod analysis;
pub mod cli;
pub mod fields;
pub mod geometry;
pub mod noise;
pub mod optim;
pub mod shuttle;
pub mod units;
pub mod voltsolver;

pub use fields::{DriveConfig, FieldSample};
pub use geometry::{LayoutParams, PolygonElectrode, Role, TrapLayout};
pub use units::IonSpecies;
