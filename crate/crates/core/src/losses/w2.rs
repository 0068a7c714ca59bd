use super::{check_pair, LossEval, LossOptions};
use crate::error::{Error, Result};
use crate::sde::Ensemble;
use crate::transport::{emd_sq, plan_from_cost, sliced_w2sq_weighted_grad, sq_dist, w2sq_1d_grad, EmpiricalDist};

fn cloud(e: &Ensemble, step: usize) -> Result<EmpiricalDist> {
    EmpiricalDist::new(e.marginal(step), e.dim())
}

/// `Σ_i W2²(μ(t_i), μ̂(t_i)) Δt` over the interior steps: the sorted-sample
/// form in 1D, exact assignment otherwise.
pub fn loss_time_decoupled(gt: &Ensemble, pred: &Ensemble, opts: &LossOptions) -> Result<LossEval> {
    check_pair(gt, pred, gt.dim() > 1)?;
    let grid = gt.grid();
    let dt = grid.dt();
    let (d, len) = (pred.dim(), grid.len());
    let mut grad = vec![0.0; pred.data().len()];
    let mut value = 0.0;
    for i in opts.w2_steps(grid) {
        let (v, g) = if d == 1 {
            w2sq_1d_grad(&gt.marginal(i), &pred.marginal(i))?
        } else {
            let (src, dst) = (cloud(gt, i)?, cloud(pred, i)?);
            let plan = emd_sq(&src, &dst)?;
            let g = plan.grad_dst(&src, &dst);
            (plan.cost, g)
        };
        value += v * dt;
        for j in 0..pred.n_traj() {
            for a in 0..d {
                grad[(j * len + i) * d + a] = g[j * d + a] * dt;
            }
        }
    }
    Ok(LossEval { value, grad_paths: grad })
}

/// Squared W2 between whole discretized trajectories: one assignment on
/// the cost `C_jk = Σ_i |X_j(t_i) - X̂_k(t_i)|² Δt` over the interior steps.
pub fn loss_full_coupled(gt: &Ensemble, pred: &Ensemble, opts: &LossOptions) -> Result<LossEval> {
    check_pair(gt, pred, true)?;
    let grid = gt.grid();
    let dt = grid.dt();
    let (m, d) = (gt.n_traj(), gt.dim());
    let steps = opts.w2_steps(grid);
    let mut cost = vec![0.0; m * m];
    for j in 0..m {
        for k in 0..m {
            let mut c = 0.0;
            for i in steps.clone() {
                c += sq_dist(gt.state(j, i), pred.state(k, i));
            }
            cost[j * m + k] = c * dt;
        }
    }
    let plan = plan_from_cost(m, &cost)?;
    let len = grid.len();
    let w = 2.0 * dt / m as f64;
    let mut grad = vec![0.0; pred.data().len()];
    for (j, &k) in plan.perm.iter().enumerate() {
        for i in steps.clone() {
            let (x, y) = (gt.state(j, i), pred.state(k, i));
            for a in 0..d {
                grad[(k * len + i) * d + a] = w * (y[a] - x[a]);
            }
        }
    }
    Ok(LossEval {
        value: plan.cost,
        grad_paths: grad,
    })
}

/// Coordinatewise 1D W2² summed over coordinates and interior steps.
pub fn loss_decorrelated_2d(gt: &Ensemble, pred: &Ensemble, opts: &LossOptions) -> Result<LossEval> {
    check_pair(gt, pred, false)?;
    let grid = gt.grid();
    let dt = grid.dt();
    let (d, len) = (pred.dim(), grid.len());
    let mut grad = vec![0.0; pred.data().len()];
    let mut value = 0.0;
    for i in opts.w2_steps(grid) {
        for a in 0..d {
            let (v, g) = w2sq_1d_grad(&gt.marginal_coord(i, a), &pred.marginal_coord(i, a))?;
            value += v * dt;
            for (j, gj) in g.iter().enumerate() {
                grad[(j * len + i) * d + a] = gj * dt;
            }
        }
    }
    Ok(LossEval { value, grad_paths: grad })
}

/// Angle-binned radial W2² per interior step, for planar ensembles.
pub fn loss_sliced(gt: &Ensemble, pred: &Ensemble, bins: usize, opts: &LossOptions) -> Result<LossEval> {
    check_pair(gt, pred, false)?;
    if gt.dim() != 2 {
        return Err(Error::DimMismatch {
            expected: 2,
            got: gt.dim(),
        });
    }
    let grid = gt.grid();
    let dt = grid.dt();
    let len = grid.len();
    let mut grad = vec![0.0; pred.data().len()];
    let mut value = 0.0;
    for i in opts.w2_steps(grid) {
        let (v, g) = sliced_w2sq_weighted_grad(&cloud(gt, i)?, &cloud(pred, i)?, bins)?;
        value += v * dt;
        for j in 0..pred.n_traj() {
            for a in 0..2 {
                grad[(j * len + i) * 2 + a] = g[j * 2 + a] * dt;
            }
        }
    }
    Ok(LossEval { value, grad_paths: grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{path_loss, LossKind};
    use crate::sde::TimeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ens(steps: usize, t_end: f64, dim: usize, paths: &[&[f64]]) -> Ensemble {
        let grid = TimeGrid::new(t_end, steps).unwrap();
        let data: Vec<f64> = paths.iter().flat_map(|p| p.iter().copied()).collect();
        Ensemble::new(grid, dim, paths.len(), data, 0, "test").unwrap()
    }

    fn random_pair(rng: &mut ChaCha8Rng, m: usize, steps: usize, d: usize) -> (Ensemble, Ensemble) {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let n = m * (steps + 1) * d;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..3.0)).collect();
        (
            Ensemble::new(grid.clone(), d, m, a, 0, "a").unwrap(),
            Ensemble::new(grid, d, m, b, 0, "b").unwrap(),
        )
    }

    #[test]
    fn identical_ensembles_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, _) = random_pair(&mut rng, 5, 4, 2);
        let opts = LossOptions::default();
        for kind in [LossKind::W2Coupled, LossKind::W2Decoupled, LossKind::W2Decorrelated2d, LossKind::W2Sliced] {
            let ev = path_loss(kind, &a, &a, &opts).unwrap();
            assert_eq!(ev.value, 0.0, "{kind}");
            assert!(ev.grad_paths.iter().all(|g| *g == 0.0), "{kind}");
        }
    }

    #[test]
    fn one_interior_step_hand_value() {
        // t_0, t_1, t_2 with dt = 0.5; only t_1 enters the sum.
        let gt = ens(2, 1.0, 1, &[&[0.0, 0.0, 7.0], &[0.0, 1.0, -3.0]]);
        let pred = ens(2, 1.0, 1, &[&[0.0, 1.0, 0.0], &[0.0, 2.0, 0.0]]);
        let ev = loss_time_decoupled(&gt, &pred, &LossOptions::default()).unwrap();
        assert!((ev.value - 0.5).abs() < 1e-15);
        assert_eq!(ev.grad_paths[0], 0.0);
        assert_eq!(ev.grad_paths[2], 0.0);
    }

    #[test]
    fn coupled_two_paths_by_hand() {
        // dt = 1/3, interior steps 1 and 2.
        let gt = ens(3, 1.0, 1, &[&[0.0, 0.0, 2.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        let pred = ens(3, 1.0, 1, &[&[0.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 2.0, 0.0]]);
        // Identity pairing: (0-0)² + (2-0)² and (1-1)² + (0-2)² → 8·dt / 2.
        // Swapped pairing: (0-1)² + (2-2)² and (1-0)² + (0-0)² → 2·dt / 2.
        let ev = loss_full_coupled(&gt, &pred, &LossOptions::default()).unwrap();
        assert!((ev.value - 1.0 / 3.0).abs() < 1e-15);
        let dec = loss_time_decoupled(&gt, &pred, &LossOptions::default()).unwrap();
        assert!(dec.value <= ev.value + 1e-12);
    }

    #[test]
    fn decoupled_never_exceeds_coupled() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let opts = LossOptions::default();
        for case in 0..100 {
            let d = 1 + case % 2;
            let (a, b) = random_pair(&mut rng, 6 + case % 5, 3 + case % 4, d);
            let lhs = loss_time_decoupled(&a, &b, &opts).unwrap().value;
            let rhs = loss_full_coupled(&a, &b, &opts).unwrap().value;
            assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
        }
    }

    #[test]
    fn relabeling_predictions_leaves_w2_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = random_pair(&mut rng, 7, 5, 1);
        let order: Vec<usize> = (0..7).rev().collect();
        let shuffled = b.select(&order).unwrap();
        let opts = LossOptions::default();
        for kind in [LossKind::W2Coupled, LossKind::W2Decoupled] {
            let x = path_loss(kind, &a, &b, &opts).unwrap().value;
            let y = path_loss(kind, &a, &shuffled, &opts).unwrap().value;
            assert!((x - y).abs() <= 1e-12 * (1.0 + x));
        }
    }

    #[test]
    fn decorrelated_axis_instance_and_rotation() {
        let gt = ens(2, 2.0, 2, &[&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]]);
        let pred = ens(2, 2.0, 2, &[&[0.0, 0.0, 2.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 3.0, 0.0, 0.0]]);
        // Coordinate 1: {1, 0} vs {2, 0} → 1/2; coordinate 2: {0, 1} vs {0, 3} → 2; dt = 1.
        let ev = loss_decorrelated_2d(&gt, &pred, &LossOptions::default()).unwrap();
        assert!((ev.value - 2.5).abs() < 1e-15);

        let rotate = |e: &Ensemble, th: f64| {
            let (c, s) = (th.cos(), th.sin());
            let data: Vec<f64> = e.data().chunks(2).flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
            Ensemble::new(e.grid().clone(), 2, e.n_traj(), data, 0, "rot").unwrap()
        };
        // Antipodal pairs on the two axes: decorrelated value 2, but 0 after a quarter-π turn,
        // while the exact marginal W2 does not move.
        let a = ens(2, 2.0, 2, &[&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0]]);
        let b = ens(2, 2.0, 2, &[&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, -1.0, 0.0, 0.0]]);
        let opts = LossOptions::default();
        let th = std::f64::consts::FRAC_PI_4;
        let before = loss_decorrelated_2d(&a, &b, &opts).unwrap().value;
        let after = loss_decorrelated_2d(&rotate(&a, th), &rotate(&b, th), &opts).unwrap().value;
        assert!((before - 2.0).abs() < 1e-15);
        assert!(after.abs() < 1e-15);
        let exact = loss_time_decoupled(&a, &b, &opts).unwrap().value;
        let exact_rot = loss_time_decoupled(&rotate(&a, th), &rotate(&b, th), &opts).unwrap().value;
        assert!((exact - exact_rot).abs() < 1e-12);
    }

    #[test]
    fn terminal_inclusion_is_configurable() {
        let gt = ens(2, 1.0, 1, &[&[0.0, 0.0, 1.0]]);
        let pred = ens(2, 1.0, 1, &[&[0.0, 0.0, 3.0]]);
        let off = loss_time_decoupled(&gt, &pred, &LossOptions::default()).unwrap();
        assert_eq!(off.value, 0.0);
        let on = LossOptions {
            include_terminal: true,
            ..LossOptions::default()
        };
        assert!((loss_time_decoupled(&gt, &pred, &on).unwrap().value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn directional_derivatives_match_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let opts = LossOptions::default();
        for (kind, d) in [
            (LossKind::W2Decoupled, 1),
            (LossKind::W2Decoupled, 2),
            (LossKind::W2Coupled, 1),
            (LossKind::W2Decorrelated2d, 2),
            (LossKind::W2Sliced, 2),
        ] {
            let (a, b) = random_pair(&mut rng, 6, 4, d);
            let ev = path_loss(kind, &a, &b, &opts).unwrap();
            let h = 1e-7;
            for _ in 0..5 {
                let k = rng.random_range(0..b.data().len());
                let bump = |s: f64| {
                    let mut data = b.data().to_vec();
                    data[k] += s;
                    let e = Ensemble::new(b.grid().clone(), d, b.n_traj(), data, 0, "b").unwrap();
                    path_loss(kind, &a, &e, &opts).unwrap().value
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                assert!(
                    (fd - ev.grad_paths[k]).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "{kind} d={d}: {fd} vs {}",
                    ev.grad_paths[k]
                );
            }
        }
    }
}
