//! Exact squared 2-Wasserstein distances between empirical measures, their
//! sliced variant, and the kernel MMD statistic.

mod assignment;
mod emd;
mod mmd;
mod quantile;
mod sliced;

pub use assignment::linear_assignment;
pub use emd::{emd_sq, plan_from_cost, CouplingPlan, EmpiricalDist};
pub use mmd::{median_pairwise_sq_distance, mmd_sq, mmd_sq_grad, MmdConfig};
pub use quantile::{w2sq_1d, w2sq_1d_grad};
pub use sliced::{sliced_w2sq_weighted, sliced_w2sq_weighted_grad};

pub(crate) use emd::sq_dist;
