//! Numerical laboratory for the semiclassical Schrodinger flow on the Friedlander
//! half-space model of a strictly convex domain.
//!
//! The crate evaluates the Green function of the flow in two independent ways
//! (a sum over Airy eigenmodes and a sum over boundary reflections), checks the
//! dispersive decay laws against both, and ships an Airy-Fourier split-step
//! solver for the cubic NLS on the periodized domain.

pub mod airy;
pub mod error;
pub mod green_reflection;
pub mod green_spectral;
pub mod harness;
pub mod model;
pub mod nls;
pub mod quad;

pub use error::{Error, Result};
pub use num_complex::Complex64;
