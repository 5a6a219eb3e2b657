//! Discrete energies, laminates, an alternating minimiser and property
//! oracles for single-plane strain-gradient crystal plasticity on structured
//! 3-d grids.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the CLI and the acceptance
//! suite use.

pub mod config;
pub mod crystal;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod laminate;
pub mod linalg;
pub mod oracle;
pub mod scalar;
pub mod solve;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3f = linalg::Vec3<f64>;
pub type Mat3f = linalg::Mat3<f64>;
pub type GridSpec64 = grid::GridSpec<f64>;
pub type SlipSystemSet64 = crystal::SlipSystemSet<f64>;
pub type SlipField64 = grid::SlipField<f64>;
pub type DisplacementField64 = grid::DisplacementField<f64>;
pub type TensorField64 = grid::TensorField<f64>;
pub type EnergyReport64 = energy::EnergyReport;
pub type LaminationPlan64 = laminate::LaminationPlan<f64>;

pub type SlipField32 = grid::SlipField<f32>;
pub type GridSpec32 = grid::GridSpec<f32>;

/// Version of the on-disk JSON/CSV formats.
pub const FORMAT_VERSION: &str = "1";
