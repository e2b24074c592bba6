//! Simulation of heralded error distillation for single photons with Fourier
//! interferometers: permanents, Fock-space bookkeeping, interference
//! polynomials, herald scans and the closed-form cost models.

pub mod analysis;
pub mod distill;
pub mod error;
pub mod fock;
pub mod interference;
pub mod linalg;

pub use error::{Error, Result};
