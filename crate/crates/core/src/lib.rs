//! Numerical laboratory for elliptic problems with nonlocal boundary
//! conditions whose support reaches two conjugation points.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod geometry;
pub mod spectral;

pub use num_complex::Complex64 as C64;
