//! Simulator and heater tuner for silicon microwave-photonic spectral shapers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod netlist;
pub mod rf;
pub mod scalar;
pub mod transfer;
pub mod tuner;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases of the generic types.
pub type Circuit = circuit::CircuitGraph<f64>;
pub type Response = circuit::CircuitResponse<f64>;
pub type Grid = circuit::FrequencyGrid<f64>;
pub type Ring = transfer::RingParams<f64>;
pub type Spectrum = rf::ModulatedSpectrum<f64>;
pub type RfTrace = rf::RfResponse<f64>;
pub type Heaters = circuit::TuningVector<f64>;

/// Single-precision aliases.
pub type CircuitF32 = circuit::CircuitGraph<f32>;
pub type ResponseF32 = circuit::CircuitResponse<f32>;
