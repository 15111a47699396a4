//! Spectral laboratory for Steklov, Neumann and dynamical eigenvalue problems
//! on planar domains, with periodically perforated domains in the critical
//! regime.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`] builds structured conforming triangulations (rectangles, polar
//!   disks and annuli, perforated rectangles, a punctured torus cell).
//! * [`fem`] assembles P1 stiffness, mass and boundary-mass operators and
//!   solves the auxiliary Poisson problems (harmonic extension, cell problem).
//! * [`eigen`] computes the smallest eigenpairs of a symmetric pencil
//!   `K x = λ C x` with a possibly singular `C`.
//! * [`analytic`] holds closed-form and Bessel-based reference spectra and the
//!   per-mode annulus energy calculator.
//! * [`problems`] composes the above into the eigenproblems and the limit
//!   experiments.
//! * [`report`] and [`cli`] handle slope fitting, CSV/SVG output and the
//!   command-line front end.

pub mod analytic;
pub mod cholesky;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod par;
pub mod problems;
pub mod report;
pub mod sparse;

pub use error::{Error, Result};

/// Surface area of the unit circle, `A_2 = 2π`.
pub const A2: f64 = 2.0 * std::f64::consts::PI;
