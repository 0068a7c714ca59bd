use super::{check_pair, LossEval};
use crate::error::Result;
use crate::sde::Ensemble;
use crate::transport::{median_pairwise_sq_distance, mmd_sq_grad, EmpiricalDist, MmdConfig};

/// Five-kernel ladder whose base bandwidth is the median within-step
/// pairwise squared distance of the ground truth, pooled over `t_1..t_N`.
pub fn mmd_config_for(gt: &Ensemble) -> Result<MmdConfig> {
    let clouds = (1..gt.grid().len())
        .map(|i| EmpiricalDist::new(gt.marginal(i), gt.dim()))
        .collect::<Result<Vec<_>>>()?;
    MmdConfig::new(median_pairwise_sq_distance(&clouds))
}

/// `Σ_{i=1}^N MMD²(μ(t_i), μ̂(t_i)) Δt`.
pub fn loss_mmd(gt: &Ensemble, pred: &Ensemble, cfg: &MmdConfig) -> Result<LossEval> {
    check_pair(gt, pred, false)?;
    let grid = gt.grid();
    let dt = grid.dt();
    let (d, len) = (pred.dim(), grid.len());
    let mut grad = vec![0.0; pred.data().len()];
    let mut value = 0.0;
    for i in 1..len {
        let src = EmpiricalDist::new(gt.marginal(i), d)?;
        let dst = EmpiricalDist::new(pred.marginal(i), d)?;
        let (v, g) = mmd_sq_grad(&src, &dst, cfg)?;
        value += v * dt;
        for j in 0..pred.n_traj() {
            for a in 0..d {
                grad[(j * len + i) * d + a] = g[j * d + a] * dt;
            }
        }
    }
    Ok(LossEval { value, grad_paths: grad })
}
