//! Reconstruction of stochastic differential equations from trajectory
//! ensembles by minimizing squared Wasserstein-2 losses.

pub mod error;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod sde;
pub mod trainer;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
