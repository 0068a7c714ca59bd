use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{loss_full_coupled, loss_time_decoupled, LossOptions};
use crate::sde::{euler_maruyama, Ensemble, InitialCondition, SdeModel, TimeGrid};

/// Monte Carlo estimates of `E ∫ |f|² dt` and `E ∫ ‖σ‖_F² dt` with their
/// standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FSigmaEstimate {
    pub f: f64,
    pub f_se: f64,
    pub sigma: f64,
    pub sigma_se: f64,
}

impl FSigmaEstimate {
    /// Estimates moved up by `k` standard errors.
    pub fn inflated(&self, k: f64) -> (f64, f64) {
        (self.f + k * self.f_se, self.sigma + k * self.sigma_se)
    }
}

/// Inputs of the projection bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub f: f64,
    pub sigma: f64,
    pub f_hat: f64,
    pub sigma_hat: f64,
    pub dt: f64,
    pub s: usize,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Left-endpoint time quadrature of both integrals along each path, then
/// averaged over the ensemble.
pub fn estimate_f_sigma(model: &dyn SdeModel, ens: &Ensemble) -> Result<FSigmaEstimate> {
    let d = model.dim_state();
    if ens.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            got: ens.dim(),
        });
    }
    let s = model.dim_noise();
    let grid = ens.grid();
    let dt = grid.dt();
    let mut f = vec![0.0; d];
    let mut sig = vec![0.0; d * s];
    let mut fs = Vec::with_capacity(ens.n_traj());
    let mut ss = Vec::with_capacity(ens.n_traj());
    for j in 0..ens.n_traj() {
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..grid.steps() {
            let (x, t) = (ens.state(j, i), grid.point(i));
            model.drift(x, t, &mut f);
            model.diffusion(x, t, &mut sig);
            a += f.iter().map(|v| v * v).sum::<f64>() * dt;
            b += sig.iter().map(|v| v * v).sum::<f64>() * dt;
        }
        fs.push(a);
        ss.push(b);
    }
    let (f_mean, f_se) = mean_se(&fs);
    let (s_mean, s_se) = mean_se(&ss);
    Ok(FSigmaEstimate {
        f: f_mean,
        f_se,
        sigma: s_mean,
        sigma_se: s_se,
    })
}

/// `√((s+1)Δt) (√(FΔt + Σ) + √(F̂Δt + Σ̂))`: how far the W2 distance of the
/// piecewise-constant projections can sit from the continuous-time one.
pub fn theorem3_bound(b: &BoundInputs) -> f64 {
    ((b.s as f64 + 1.0) * b.dt).sqrt() * ((b.f * b.dt + b.sigma).sqrt() + (b.f_hat * b.dt + b.sigma_hat).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compare the time-decoupled loss with the coupled trajectory loss.
pub fn check_decoupled_leq_coupled(gt: &Ensemble, pred: &Ensemble, opts: &LossOptions) -> Result<InequalityReport> {
    let lhs = loss_time_decoupled(gt, pred, opts)?.value;
    let rhs = loss_full_coupled(gt, pred, opts)?.value;
    Ok(InequalityReport {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9 * (1.0 + rhs),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub dt: f64,
    pub coupled_w2sq: f64,
    pub decoupled_sum: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Simulate both models once on the finest grid, project onto each coarser
/// grid and tabulate the coupled and decoupled losses. A row holds when its
/// coupled W2 lies within `bound(Δt) + bound(Δt_min)` of the finest value,
/// with `F`, `Σ` inflated by three standard errors.
///
/// Every `Δt` must divide the horizon and be a multiple of the finest one.
pub fn projection_convergence(
    truth: &dyn SdeModel,
    fit: &dyn SdeModel,
    ic: &InitialCondition,
    t_end: f64,
    dts: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<Vec<ProjectionRow>> {
    if dts.is_empty() {
        return Err(Error::EmptyInput);
    }
    if truth.dim_noise() != fit.dim_noise() {
        return Err(Error::DimMismatch {
            expected: truth.dim_noise(),
            got: fit.dim_noise(),
        });
    }
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let fine = TimeGrid::from_dt(t_end, finest)?;
    let gt = euler_maruyama(truth, ic, &fine, n_traj, seed)?;
    let pred = euler_maruyama(fit, ic, &fine, n_traj, seed.wrapping_add(1))?;
    let (f, sigma) = estimate_f_sigma(truth, &gt)?.inflated(3.0);
    let (f_hat, sigma_hat) = estimate_f_sigma(fit, &pred)?.inflated(3.0);
    let bound_at = |dt: f64| {
        theorem3_bound(&BoundInputs {
            f,
            sigma,
            f_hat,
            sigma_hat,
            dt,
            s: truth.dim_noise(),
        })
    };
    let opts = LossOptions::default();
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let coarse = TimeGrid::from_dt(t_end, dt)?;
        let (a, b) = (gt.project_grid(&coarse)?, pred.project_grid(&coarse)?);
        rows.push(ProjectionRow {
            dt,
            coupled_w2sq: loss_full_coupled(&a, &b, &opts)?.value,
            decoupled_sum: loss_time_decoupled(&a, &b, &opts)?.value,
            bound: bound_at(dt),
            holds: false,
        });
    }
    let reference = rows
        .iter()
        .find(|r| r.dt == finest)
        .map(|r| r.coupled_w2sq.sqrt())
        .unwrap_or_default();
    let slack = bound_at(finest);
    for r in &mut rows {
        r.holds = (r.coupled_w2sq.sqrt() - reference).abs() <= r.bound + slack;
    }
    Ok(rows)
}

pub const PROJECTION_CSV_HEADER: &str = "dt,coupled_w2sq,decoupled_sum,bound,holds";

pub fn write_projection_csv<W: Write>(rows: &[ProjectionRow], mut w: W) -> Result<()> {
    writeln!(w, "{PROJECTION_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.dt, r.coupled_w2sq, r.decoupled_sum, r.bound, r.holds)?;
    }
    Ok(())
}
