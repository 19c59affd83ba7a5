//! Galerkin reduction, deterministic RBF learning and estimator-bank fault
//! detection and isolation for 1-D parabolic PDEs.

pub mod error;
pub mod analysis;
pub mod fdi;
pub mod identifier;
pub mod io;
pub mod ode;
pub mod par;
pub mod pdesim;
pub mod pipeline;
pub mod rbf;
pub mod scenario;
pub mod spectral;

pub use error::{FdiError, Result};
