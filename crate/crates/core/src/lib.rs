//! Numerical laboratory for the subcritical Keller-Segel system in
//! self-similar variables,
//!
//! ```text
//! ∂n/∂t = Δn + ∇·(n x) − ∇·(n ∇c),   c = (−Δ)⁻¹ n,   x ∈ ℝ²,
//! ```
//!
//! restricted to radial geometry plus angular Fourier modes for the
//! linearized problem. The crate builds the stationary pair `(n_M, c_M)` for
//! masses `0 < M < 8π`, evaluates the free energy and the logarithmic HLS /
//! Onofri / Poincaré deficits, assembles the quadratic forms of the
//! linearized operator per angular mode and measures the decay rates of the
//! linearized and nonlinear radial dynamics.
//!
//! Non-radial functions are represented mode by mode as `u(r)·cos(kθ)`; the
//! `sin(kθ)` copies carry the same spectra and are never assembled.

pub mod corpus;
pub mod error;
pub mod evolution;
pub mod field;
mod flux;
pub mod functionals;
pub mod green;
pub mod grid;
pub mod io;
pub mod spectral;
pub mod stationary;
pub mod stencil;

pub use error::{Error, Result};
pub use field::ModeField;
pub use grid::{make_grid, RadialGrid};
pub use stationary::{solve_stationary, SpecialModes, StationaryState};

/// The critical mass `8π` separating global existence from blow-up.
pub const CRITICAL_MASS: f64 = 8.0 * std::f64::consts::PI;
