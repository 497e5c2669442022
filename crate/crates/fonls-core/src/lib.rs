//! Numerical verification toolkit for the fourth-order dispersive cubic NLS
//!
//!     i u_t + u_xx - u_xxxx + |u|^2 u = 0
//!
//! centered on the explicit standing wave u(x,t) = e^{i alpha t} phi(x) with
//! phi(x) = a sech^2(bx), a = sqrt(3/10), b = sqrt(1/20), alpha = 4/25.
//!
//! The crate provides: a periodic spectral grid with exact band-limited
//! calculus (`grid`), the wave profile and conserved functionals (`wave`),
//! dense discretizations and spectra of the linearized operators (`linops`),
//! total-positivity certification of the involved convolution kernels and the
//! frequency-side operator family S_theta (`totalpos`), the coercivity chain
//! culminating in a calibrated Lyapunov quadratic form (`coercivity`),
//! split-step time integration (`dynamics`), and the orbital pseudo-metric
//! with end-to-end stability experiments (`orbit`).

pub mod coercivity;
pub mod dynamics;
pub mod error;
pub mod grid;
mod linalg;
pub mod linops;
pub mod orbit;
pub mod totalpos;
pub mod wave;

pub use error::{Error, Result};
pub use grid::{inner, make_grid, ComplexField, GridSpec, InnerProductKind, RealField};
pub use num_complex::Complex64;
pub use wave::{profile, WaveProfile};

/// Temporal frequency of the standing wave, alpha = 4/25.
pub const ALPHA: f64 = 0.16;

/// Eigenvalues with |lambda| at or below this are counted as numerical kernel.
pub const TOL_ZERO: f64 = 1e-6;
