use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{NetGrads, NeuralSde};
use crate::sde::{Ensemble, SdeModel};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const MIN_VARIANCE: f64 = 1e-12;

/// Which density the increments are scored under.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NllVariant {
    /// Standard normal density of `(ΔX + f̂Δt) / (σ̂²Δt)`.
    #[default]
    Verbatim,
    /// Euler transition density `N(f̂Δt, σ̂²Δt)` of `ΔX`.
    Corrected,
}

/// Likelihood value and its gradient with respect to both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct NllEval {
    pub value: f64,
    pub grads: NetGrads,
}

/// Negative log-likelihood of the ground-truth increments under the
/// candidate networks, evaluated at `(X_j(t_i), t_i)` for `i = 0..N-1`.
pub fn loss_neg_loglik(gt: &Ensemble, model: &NeuralSde, variant: NllVariant) -> Result<NllEval> {
    if gt.dim() != 1 || model.dim_state() != 1 || model.dim_noise() != 1 {
        return Err(Error::DimMismatch {
            expected: 1,
            got: gt.dim().max(model.dim_state()),
        });
    }
    let grid = gt.grid();
    let dt = grid.dt();
    let mut grads = NetGrads::zeros(model);
    let mut fcache = vec![0.0; model.drift.cache_len()];
    let mut scache = vec![0.0; model.diffusion.cache_len()];
    let mut input = [0.0; 2];
    let mut dx = [0.0; 2];
    let mut scratch = Vec::new();
    let mut value = 0.0;
    for j in 0..gt.n_traj() {
        for i in 0..grid.steps() {
            let x = gt.state(j, i);
            let inc = gt.state(j, i + 1)[0] - x[0];
            model.fill_input(x, grid.point(i), &mut input);
            model.drift.forward_cached(&input, &mut fcache);
            model.diffusion.forward_cached(&input, &mut scache);
            let f = fcache[fcache.len() - 1];
            let s = scache[scache.len() - 1];
            let var = s * s * dt;
            if !(var >= MIN_VARIANCE) {
                return Err(Error::DegenerateVariance {
                    value: var,
                    trajectory: j,
                    step: i,
                });
            }
            let (term, g_f, g_s) = match variant {
                NllVariant::Verbatim => {
                    let z = (inc + f * dt) / var;
                    (HALF_LN_2PI + 0.5 * z * z, z / (s * s), -2.0 * z * z / s)
                }
                NllVariant::Corrected => {
                    let r = inc - f * dt;
                    (
                        HALF_LN_2PI + 0.5 * var.ln() + r * r / (2.0 * var),
                        -r / (s * s),
                        1.0 / s - r * r / (s * var),
                    )
                }
            };
            value += term;
            model
                .drift
                .backward_cached(&fcache, &[g_f], &mut grads.drift, &mut dx, &mut scratch);
            model
                .diffusion
                .backward_cached(&scache, &[g_s], &mut grads.diffusion, &mut dx, &mut scratch);
        }
    }
    Ok(NllEval { value, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp};
    use crate::sde::{catalog_model, euler_maruyama, InitialCondition, TimeGrid};

    fn linear_model(drift: [f64; 3], diff: [f64; 3]) -> NeuralSde {
        NeuralSde::new(
            Mlp::from_params(&[2, 1], Activation::Relu, drift.to_vec()).unwrap(),
            Mlp::from_params(&[2, 1], Activation::Relu, diff.to_vec()).unwrap(),
            1,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_argument_costs_half_log_two_pi() {
        // ΔX = -f̂Δt makes the verbatim argument vanish: f̂ = -2, Δt = 0.5, ΔX = 1.
        let grid = TimeGrid::new(0.5, 1).unwrap();
        let gt = Ensemble::new(grid, 1, 1, vec![0.0, 1.0], 0, "t").unwrap();
        let model = linear_model([0.0, 0.0, -2.0], [0.0, 0.0, 0.7]);
        let ev = loss_neg_loglik(&gt, &model, NllVariant::Verbatim).unwrap();
        assert!((ev.value - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn corrected_variant_matches_direct_density_on_ou() {
        let truth = catalog_model("ou").unwrap();
        let grid = TimeGrid::from_dt(10.0, 0.5).unwrap();
        let gt = euler_maruyama(&truth, &InitialCondition::point([0.0]), &grid, 40, 3).unwrap();
        let model = linear_model([-0.1, 0.02, 0.0], [0.0, 0.0, 0.4]);
        let ev = loss_neg_loglik(&gt, &model, NllVariant::Corrected).unwrap();
        let (dt, sd) = (0.5, 0.4 * 0.5f64.sqrt());
        let mut direct = 0.0;
        for j in 0..40 {
            for i in 0..grid.steps() {
                let x = gt.state(j, i)[0];
                let mean = x + (0.02 * grid.point(i) - 0.1 * x) * dt;
                let y = gt.state(j, i + 1)[0];
                let density = (-(y - mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                direct -= density.ln();
            }
        }
        assert!((ev.value - direct).abs() < 1e-9 * direct.abs());
        // Under the true model the standardized increments are exact noise draws, so the
        // loss is M·N·(½ log 2π + log sd) plus half a χ² with M·N degrees of freedom.
        let n = 40.0 * 20.0;
        let expected = n * (HALF_LN_2PI + sd.ln() + 0.5);
        assert!((ev.value - expected).abs() < 4.0 * (n / 2.0f64).sqrt());
    }

    #[test]
    fn doubling_sigma_shifts_verbatim_terms() {
        // Verbatim term ½log2π + z²/2 with z = (ΔX + fΔt)/(σ²Δt); doubling σ divides z by 4.
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let gt = Ensemble::new(grid, 1, 1, vec![0.0, 0.6], 0, "t").unwrap();
        let a = loss_neg_loglik(&gt, &linear_model([0.0, 0.0, 0.2], [0.0, 0.0, 0.5]), NllVariant::Verbatim).unwrap();
        let b = loss_neg_loglik(&gt, &linear_model([0.0, 0.0, 0.2], [0.0, 0.0, 1.0]), NllVariant::Verbatim).unwrap();
        let z: f64 = 0.8 / 0.25;
        assert!((a.value - b.value - (0.5 * z * z - 0.5 * (z / 4.0).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn degenerate_variance_is_reported() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let gt = Ensemble::new(grid, 1, 1, vec![0.0, 0.1, 0.2], 0, "t").unwrap();
        let model = linear_model([0.0; 3], [0.0; 3]);
        assert!(matches!(
            loss_neg_loglik(&gt, &model, NllVariant::Verbatim),
            Err(Error::DegenerateVariance { trajectory: 0, step: 0, .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let model = NeuralSde::new(
            Mlp::init(&[2, 5, 1], Activation::Tanh, &mut rng).unwrap(),
            {
                let mut net = Mlp::init(&[2, 5, 1], Activation::Tanh, &mut rng).unwrap();
                let n = net.param_count();
                net.params_mut()[n - 1] = 1.0;
                net
            },
            1,
            0.5,
        )
        .unwrap();
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let gt = euler_maruyama(&catalog_model("cir").unwrap(), &InitialCondition::point([2.0]), &grid, 6, 1).unwrap();
        for variant in [NllVariant::Verbatim, NllVariant::Corrected] {
            let ev = loss_neg_loglik(&gt, &model, variant).unwrap();
            let h = 1e-6;
            for (net_idx, k) in [(0, 0), (0, 7), (0, 15), (1, 2), (1, 11), (1, 15)] {
                let bump = |s: f64| {
                    let mut m = model.clone();
                    let net = if net_idx == 0 { &mut m.drift } else { &mut m.diffusion };
                    net.params_mut()[k] += s;
                    loss_neg_loglik(&gt, &m, variant).unwrap().value
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let g = if net_idx == 0 { ev.grads.drift[k] } else { ev.grads.diffusion[k] };
                assert!((fd - g).abs() <= 1e-5 * fd.abs().max(1e-2), "{variant:?} {net_idx}/{k}: {fd} vs {g}");
            }
        }
    }
}
