use super::{check_pair, LossEval};
use crate::error::Result;
use crate::sde::Ensemble;

/// `Σ_{i=1}^N Σ_j |X_j(t_i) - X̂_j(t_i)|² Δt`, pairing trajectories by index.
pub fn loss_mse(gt: &Ensemble, pred: &Ensemble) -> Result<LossEval> {
    check_pair(gt, pred, true)?;
    let grid = gt.grid();
    let dt = grid.dt();
    let d = gt.dim();
    let mut grad = vec![0.0; pred.data().len()];
    let mut value = 0.0;
    for j in 0..gt.n_traj() {
        for i in 1..grid.len() {
            let at = (j * grid.len() + i) * d;
            for a in 0..d {
                let diff = pred.data()[at + a] - gt.data()[at + a];
                value += diff * diff * dt;
                grad[at + a] = 2.0 * diff * dt;
            }
        }
    }
    Ok(LossEval { value, grad_paths: grad })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// `Σ_{i=1}^N [(mean - mean̂)² + |var - var̂|] Δt` per coordinate, with
/// population variances. The subgradient of `|·|` at zero is taken as zero.
pub fn loss_mean2_var(gt: &Ensemble, pred: &Ensemble) -> Result<LossEval> {
    check_pair(gt, pred, false)?;
    let grid = gt.grid();
    let dt = grid.dt();
    let (d, len, m) = (pred.dim(), grid.len(), pred.n_traj());
    let mut grad = vec![0.0; pred.data().len()];
    let mut value = 0.0;
    for i in 1..len {
        for a in 0..d {
            let (mu, var) = mean_var(&gt.marginal_coord(i, a));
            let ys = pred.marginal_coord(i, a);
            let (mu_hat, var_hat) = mean_var(&ys);
            let dm = mu_hat - mu;
            let dv = var_hat - var;
            value += (dm * dm + dv.abs()) * dt;
            let sign = if dv > 0.0 {
                1.0
            } else if dv < 0.0 {
                -1.0
            } else {
                0.0
            };
            for (j, y) in ys.iter().enumerate() {
                grad[(j * len + i) * d + a] = (2.0 * dm + sign * 2.0 * (y - mu_hat)) * dt / m as f64;
            }
        }
    }
    Ok(LossEval { value, grad_paths: grad })
}
