//! Relative reconstruction errors and numerical checks of the
//! projection bound and the decoupled/coupled inequality.

mod bounds;
mod errors;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bounds::{
    check_decoupled_leq_coupled, estimate_f_sigma, projection_convergence, theorem3_bound, write_projection_csv,
    BoundInputs, FSigmaEstimate, InequalityReport, ProjectionRow, PROJECTION_CSV_HEADER,
};
pub use errors::{relative_err_f, relative_err_sigma};

/// Evaluation summary of one fitted model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rel_err_f: f64,
    pub rel_err_sigma: f64,
    /// Loss name to value, computed on a fresh predicted ensemble.
    pub losses: BTreeMap<String, f64>,
    pub runtime_seconds: f64,
    /// Bytes held by the ensembles and network caches during evaluation.
    pub peak_memory_bytes: u64,
}

impl MetricsReport {
    pub fn is_finite(&self) -> bool {
        self.rel_err_f.is_finite() && self.rel_err_sigma.is_finite() && self.losses.values().all(|v| v.is_finite())
    }
}
