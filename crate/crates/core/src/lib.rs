//! Pseudo-spectral toolkit for the density-dependent incompressible Euler
//! equations on the periodic square `[0, L)²`.
//!
//! The crate is organised around a plain data model: a [`Grid`] fixes the
//! sampling lattice and its Fourier modes, a [`Field`] carries scalar or
//! vector samples with a lazily synchronised physical/spectral pair, and the
//! remaining modules build on those two:
//!
//! * [`ops`] — spectral derivatives, Leray projection, Biot–Savart inversion,
//!   dealiased products;
//! * [`dyadic`] — smooth dyadic frequency decomposition, Besov norms,
//!   paraproduct/remainder calculus, Bernstein ratio checks;
//! * [`pressure`] — the variable-coefficient elliptic solve
//!   `−div(a ∇Π) = div F` by fixed-point absorption, with a preconditioned
//!   conjugate-gradient solver as an independent route;
//! * [`transport`] — RK4 spectral advection and the 2-D vorticity wedge
//!   source;
//! * [`solver`] — time integration in velocity–pressure and
//!   vorticity–pressure form, diagnostics, the Picard approximation scheme
//!   and the stability functional;
//! * [`config`] / [`init`] / [`experiments`] — experiment configuration,
//!   initial-data recipes, rescaling checks and lifespan scans.

pub mod config;
pub mod dyadic;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod grid;
pub mod init;
pub mod norms;
pub mod ops;
pub mod pressure;
pub mod solver;
pub mod transport;

pub use config::ExperimentConfig;
pub use field::Field;
pub use grid::Grid;
