//! Simulation, feedback stabilisation and actuator placement for the
//! generalised Kuramoto-Sivashinsky equation
//!
//! ```text
//! u_t + ν u_xxxx + μ H[u_xxx] + δ u_xxx + u_xx + u u_x = Σ b_i(x) f_i(t)
//! ```
//!
//! on the 2π-periodic interval, discretised with an orthonormal
//! Fourier-Galerkin basis.

pub mod coupled;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod feedback;
pub mod optimal;
pub mod spectral;

pub use dynamics::{simulate, ControlLaw, StepperConfig, Trajectory, Uncontrolled};
pub use error::{GksError, Result};
pub use spectral::{
    count_unstable, eigenvalues, linear_symbol, nonlinear_galerkin, GksParams, Norms, SpectralField,
};
