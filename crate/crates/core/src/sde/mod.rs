//! SDE models, time grids, trajectory ensembles and the Euler–Maruyama
//! simulator.

mod ensemble;
mod grid;
mod model;
mod simulate;

pub use ensemble::Ensemble;
pub use grid::TimeGrid;
pub use model::{catalog_model, CatalogModel, ModelSpec, SdeModel};
pub use simulate::{euler_maruyama, euler_maruyama_with_noise, BrownianIncrements, InitialCondition};

pub(crate) use simulate::euler_step;
