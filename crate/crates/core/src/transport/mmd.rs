use serde::{Deserialize, Serialize};

use super::emd::{sq_dist, EmpiricalDist};
use crate::error::{Error, Result};

/// Gaussian kernel ladder `K_k(x, y) = exp(-|x - y|² / γ_k)` with
/// `γ_k = base · multiplier^k`, `k = 0..kernels`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub kernels: usize,
    pub multiplier: f64,
    pub base: f64,
}

impl MmdConfig {
    pub fn new(base: f64) -> Result<Self> {
        let cfg = Self {
            kernels: 5,
            multiplier: 2.0,
            base,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels == 0 {
            return Err(Error::invalid("mmd needs at least one kernel"));
        }
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(Error::invalid(format!("mmd multiplier must be positive, got {}", self.multiplier)));
        }
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(Error::invalid(format!("mmd base bandwidth must be positive, got {}", self.base)));
        }
        Ok(())
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        (0..self.kernels)
            .map(|k| self.base * self.multiplier.powi(k as i32))
            .collect()
    }
}

/// Median of all within-cloud pairwise squared distances, pooled over the
/// given clouds. Falls back to 1 when every pair coincides.
pub fn median_pairwise_sq_distance(clouds: &[EmpiricalDist]) -> f64 {
    let mut all = Vec::new();
    for c in clouds {
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                all.push(sq_dist(c.point(i), c.point(j)));
            }
        }
    }
    if all.is_empty() {
        return 1.0;
    }
    let mid = all.len() / 2;
    let (_, median, _) = all.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        *median
    } else {
        1.0
    }
}

fn kernel_sum(d2: f64, inv: &[f64]) -> (f64, f64) {
    // Σ_k K_k and Σ_k K_k / γ_k.
    let mut k = 0.0;
    let mut dk = 0.0;
    for &g in inv {
        let e = (-d2 * g).exp();
        k += e;
        dk += e * g;
    }
    (k, dk)
}

/// Biased (V-statistic) squared MMD summed over the kernel ladder.
pub fn mmd_sq(src: &EmpiricalDist, dst: &EmpiricalDist, cfg: &MmdConfig) -> Result<f64> {
    Ok(mmd_sq_grad(src, dst, cfg)?.0)
}

/// [`mmd_sq`] and its gradient with respect to the `dst` points.
pub fn mmd_sq_grad(src: &EmpiricalDist, dst: &EmpiricalDist, cfg: &MmdConfig) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if src.dim() != dst.dim() {
        return Err(Error::DimMismatch {
            expected: src.dim(),
            got: dst.dim(),
        });
    }
    let inv: Vec<f64> = cfg.bandwidths().iter().map(|g| 1.0 / g).collect();
    let (n, m, d) = (src.len(), dst.len(), src.dim());
    let mut grad = vec![0.0; m * d];

    let mut xx = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            xx += 2.0 * kernel_sum(sq_dist(src.point(i), src.point(j)), &inv).0;
        }
    }
    xx += n as f64 * cfg.kernels as f64;

    let mut yy = 0.0;
    let wyy = 1.0 / (m as f64 * m as f64);
    for i in 0..m {
        for j in i + 1..m {
            let (a, b) = (dst.point(i), dst.point(j));
            let (k, dk) = kernel_sum(sq_dist(a, b), &inv);
            yy += 2.0 * k;
            // ∂/∂y_i of 2·K(y_i, y_j) is -4 (y_i - y_j) Σ K_k/γ_k.
            for c in 0..d {
                let g = -4.0 * wyy * dk * (a[c] - b[c]);
                grad[i * d + c] += g;
                grad[j * d + c] -= g;
            }
        }
    }
    yy += m as f64 * cfg.kernels as f64;

    let mut xy = 0.0;
    let wxy = 2.0 / (n as f64 * m as f64);
    for i in 0..n {
        let a = src.point(i);
        for j in 0..m {
            let b = dst.point(j);
            let (k, dk) = kernel_sum(sq_dist(a, b), &inv);
            xy += k;
            // ∂/∂y_j of -(2/nm) K(x_i, y_j) is -(2/nm)·2 (x_i - y_j) Σ K_k/γ_k.
            for c in 0..d {
                grad[j * d + c] -= wxy * 2.0 * dk * (a[c] - b[c]);
            }
        }
    }
    let value = xx / (n * n) as f64 - wxy * xy + yy * wyy;
    Ok((value.max(0.0), grad))
}
