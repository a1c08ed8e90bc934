//! Pseudospectral solver and diagnostics for the coupled Schrödinger–KdV system
//!
//! ```text
//! i u_t + u_xx = alpha u v + beta u |u|^2
//! v_t + v_xxx + v v_x = gamma (|u|^2)_x
//! ```
//!
//! on a periodic box `[-L, L)`.

pub mod conservation;
pub mod decay;
pub mod error;
pub mod integrator;
pub mod io;
pub mod model;
pub mod momentum;
pub mod mollify;
pub mod spectral;
pub mod studies;
pub mod virial;

pub use error::{Error, Result};
pub use model::{InitialData, ModelParams, Profile, Regime, SystemState};
pub use spectral::{ComplexField, RealField, SpectralGrid, C64};
