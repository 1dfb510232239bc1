//! Numerics for harmonic lattices with random masses: lattice operators, mass
//! models, the lattice Green's function and restricted correctors, the
//! effective wave solution, the lattice integrator and error analysis.

pub mod analysis;
pub mod corrector;
pub mod error;
pub mod fft;
pub mod green;
pub mod lattice;
pub mod mass;
pub mod quad;
pub mod sim;
pub mod wave;

pub use error::{Error, Result};
