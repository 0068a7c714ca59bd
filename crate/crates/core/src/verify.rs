//! Self-check suite: transport oracles, loss gradients, the decoupled ≤
//! coupled inequality and the projection band, with swappable transport
//! implementations so a planted bug can be shown to fail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::{loss_time_decoupled, LossOptions};
use crate::metrics::{check_decoupled_leq_coupled, projection_convergence, relative_err_f, ProjectionRow};
use crate::nn::{simulate_and_tape, Activation, Mlp, NeuralSde};
use crate::sde::{catalog_model, euler_maruyama, BrownianIncrements, Ensemble, InitialCondition, ModelSpec, SdeModel, TimeGrid};
use crate::transport::{emd_sq, w2sq_1d, CouplingPlan, EmpiricalDist};

/// Transport routines under test.
#[derive(Clone, Copy)]
pub struct VerifyImpls {
    pub w2sq_1d: fn(&[f64], &[f64]) -> Result<f64>,
    pub emd_sq: fn(&EmpiricalDist, &EmpiricalDist) -> Result<CouplingPlan>,
}

impl Default for VerifyImpls {
    fn default() -> Self {
        Self { w2sq_1d, emd_sq }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
    pub projection: Vec<ProjectionRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

/// Minimum of the mean matched squared distance over all `M!` pairings.
pub fn brute_force_w2sq(src: &EmpiricalDist, dst: &EmpiricalDist) -> f64 {
    fn go(src: &EmpiricalDist, dst: &EmpiricalDist, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        if row == used.len() {
            *best = acc;
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                let c: f64 = src.point(row).iter().zip(dst.point(k)).map(|(a, b)| (a - b).powi(2)).sum();
                go(src, dst, row + 1, used, acc + c, best);
                used[k] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(src, dst, 0, &mut vec![false; src.len()], 0.0, &mut best);
    best / src.len() as f64
}

fn random_cloud(rng: &mut ChaCha8Rng, m: usize, d: usize) -> EmpiricalDist {
    let pts = (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    EmpiricalDist::new(pts, d).expect("valid cloud")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn outcome(name: &'static str, worst: Option<String>) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst.is_none(),
        detail: worst.unwrap_or_else(|| "ok".into()),
    }
}

fn check_emd(impls: &VerifyImpls, rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    for case in 0..n {
        let (m, d) = (rng.random_range(1..=6), rng.random_range(1..=3));
        let (a, b) = (random_cloud(rng, m, d), random_cloud(rng, m, d));
        let exact = brute_force_w2sq(&a, &b);
        match (impls.emd_sq)(&a, &b) {
            Ok(p) if rel(p.cost, exact) <= 1e-12 => {}
            Ok(p) => return outcome("emd_matches_exhaustive", Some(format!("case {case}: {} vs {exact}", p.cost))),
            Err(e) => return outcome("emd_matches_exhaustive", Some(format!("case {case}: {e}"))),
        }
    }
    outcome("emd_matches_exhaustive", None)
}

fn check_quantile(impls: &VerifyImpls, rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    for case in 0..n {
        let m = rng.random_range(1..=256);
        let (a, b) = (random_cloud(rng, m, 1), random_cloud(rng, m, 1));
        let exact = if m <= 6 {
            brute_force_w2sq(&a, &b)
        } else {
            match (impls.emd_sq)(&a, &b) {
                Ok(p) => p.cost,
                Err(e) => return outcome("w2_1d_matches_assignment", Some(e.to_string())),
            }
        };
        match (impls.w2sq_1d)(a.points(), b.points()) {
            Ok(v) if rel(v, exact) <= 1e-10 => {}
            Ok(v) => return outcome("w2_1d_matches_assignment", Some(format!("case {case}: {v} vs {exact}"))),
            Err(e) => return outcome("w2_1d_matches_assignment", Some(e.to_string())),
        }
    }
    outcome("w2_1d_matches_assignment", None)
}

fn check_metric_axioms(impls: &VerifyImpls, rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    for case in 0..n {
        let m = rng.random_range(1..=32);
        let (a, b) = (random_cloud(rng, m, 1), random_cloud(rng, m, 1));
        let run = || -> Result<(f64, f64, f64)> {
            Ok((
                (impls.w2sq_1d)(a.points(), b.points())?,
                (impls.w2sq_1d)(b.points(), a.points())?,
                (impls.w2sq_1d)(a.points(), a.points())?,
            ))
        };
        match run() {
            Ok((ab, ba, aa)) if ab >= 0.0 && (ab - ba).abs() <= 1e-12 * (1.0 + ab) && aa == 0.0 => {}
            Ok(v) => return outcome("w2_1d_metric_axioms", Some(format!("case {case}: {v:?}"))),
            Err(e) => return outcome("w2_1d_metric_axioms", Some(e.to_string())),
        }
    }
    outcome("w2_1d_metric_axioms", None)
}

fn random_ou_pair(rng: &mut ChaCha8Rng, d: usize, m: usize, steps: usize) -> Result<(Ensemble, Ensemble)> {
    let grid = TimeGrid::new(1.0, steps)?;
    let seed = rng.random();
    if d == 1 {
        let a = catalog_model("ou")?;
        let b = ModelSpec::Ou {
            a: rng.random_range(-0.5..0.5),
            b: rng.random_range(0.0..2.0),
            sigma: rng.random_range(0.1..1.5),
        }
        .build()?;
        let ic = InitialCondition::point([0.0]);
        Ok((euler_maruyama(&a, &ic, &grid, m, seed)?, euler_maruyama(&b, &ic, &grid, m, seed ^ 1)?))
    } else {
        let g = catalog_model("gbm2d")?;
        let ic = InitialCondition::Gaussian {
            mean: vec![1.0, 0.5],
            stddev: rng.random_range(0.0..0.5),
        };
        Ok((euler_maruyama(&g, &ic, &grid, m, seed)?, euler_maruyama(&g, &ic, &grid, m, seed ^ 1)?))
    }
}

fn check_inequality(rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    for case in 0..n {
        let d = 1 + case % 2;
        let m = [8, 32][(case / 2) % 2];
        let steps = [4, 16][(case / 4) % 2];
        let r = random_ou_pair(rng, d, m, steps).and_then(|(a, b)| check_decoupled_leq_coupled(&a, &b, &LossOptions::default()));
        match r {
            Ok(r) if r.holds => {}
            Ok(r) => return outcome("decoupled_leq_coupled", Some(format!("case {case}: {} > {}", r.lhs, r.rhs))),
            Err(e) => return outcome("decoupled_leq_coupled", Some(e.to_string())),
        }
    }
    outcome("decoupled_leq_coupled", None)
}

fn check_gradient(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut run = || -> Result<Option<String>> {
        let model = NeuralSde::new(
            Mlp::init(&[2, 4, 1], Activation::Tanh, rng)?,
            Mlp::init(&[2, 4, 1], Activation::Tanh, rng)?,
            1,
            1.0,
        )?;
        let grid = TimeGrid::new(1.0, 5)?;
        let gt = euler_maruyama(&catalog_model("ou")?, &InitialCondition::point([0.5]), &grid, 8, 3)?;
        let noise = BrownianIncrements::generate(8, &grid, 1, 4);
        let x0 = gt.initial_states();
        let opts = LossOptions::default();
        let loss = |m: &NeuralSde| -> Result<f64> {
            let (p, _) = simulate_and_tape(m, &x0, &grid, &noise, 0)?;
            Ok(loss_time_decoupled(&gt, &p, &opts)?.value)
        };
        let (pred, tape) = simulate_and_tape(&model, &x0, &grid, &noise, 0)?;
        let grads = tape.backward(&loss_time_decoupled(&gt, &pred, &opts)?.grad_paths)?;
        let h = 1e-6;
        for k in 0..model.drift.param_count() {
            let mut up = model.clone();
            up.drift.params_mut()[k] += h;
            let mut dn = model.clone();
            dn.drift.params_mut()[k] -= h;
            let fd = (loss(&up)? - loss(&dn)?) / (2.0 * h);
            if (fd - grads.drift[k]).abs() > 1e-4 * fd.abs().max(1e-3) {
                return Ok(Some(format!("drift[{k}]: {fd} vs {}", grads.drift[k])));
            }
        }
        Ok(None)
    };
    match run() {
        Ok(w) => outcome("gradient_matches_finite_differences", w),
        Err(e) => outcome("gradient_matches_finite_differences", Some(e.to_string())),
    }
}

fn check_zero_predictor() -> CheckOutcome {
    struct Zero;
    impl SdeModel for Zero {
        fn dim_state(&self) -> usize {
            1
        }
        fn dim_noise(&self) -> usize {
            1
        }
        fn drift(&self, _: &[f64], _: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
        fn diffusion(&self, _: &[f64], _: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
    }
    let run = || -> Result<f64> {
        let cir = catalog_model("cir")?;
        let gt = euler_maruyama(&cir, &InitialCondition::point([2.0]), &TimeGrid::from_dt(2.0, 0.05)?, 50, 1)?;
        relative_err_f(&cir, &Zero, &gt)
    };
    match run() {
        Ok(v) if v == 1.0 => outcome("zero_predictor_error_is_one", None),
        Ok(v) => outcome("zero_predictor_error_is_one", Some(format!("got {v}"))),
        Err(e) => outcome("zero_predictor_error_is_one", Some(e.to_string())),
    }
}

/// OU against a perturbed OU on `Δt ∈ {1, ½, ¼, ⅛}` over `[0, 4]`.
pub fn projection_band(n_traj: usize, seed: u64) -> Result<Vec<ProjectionRow>> {
    let truth = catalog_model("ou")?;
    let fit = ModelSpec::Ou {
        a: 0.05,
        b: 0.3,
        sigma: 0.6,
    }
    .build()?;
    projection_convergence(&truth, &fit, &InitialCondition::point([0.0]), 4.0, &[1.0, 0.5, 0.25, 0.125], n_traj, seed)
}

/// Run every check. `scale` multiplies the number of random instances.
pub fn run_verify(impls: &VerifyImpls, seed: u64, scale: usize) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = scale.max(1);
    let mut checks = vec![
        check_emd(impls, &mut rng, 500 * s),
        check_quantile(impls, &mut rng, 200 * s),
        check_metric_axioms(impls, &mut rng, 50 * s),
        check_inequality(&mut rng, 500 * s),
        check_gradient(&mut rng),
        check_zero_predictor(),
    ];
    let projection = match projection_band(128, seed) {
        Ok(rows) => {
            let bad: Vec<String> = rows.iter().filter(|r| !r.holds).map(|r| format!("dt={}", r.dt)).collect();
            checks.push(outcome("projection_band", (!bad.is_empty()).then(|| bad.join(" "))));
            rows
        }
        Err(e) => {
            checks.push(outcome("projection_band", Some(e.to_string())));
            Vec::new()
        }
    };
    VerifyReport { checks, projection }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        let r = run_verify(&VerifyImpls::default(), 1, 1);
        assert!(r.passed(), "{:?}", r.checks);
        assert_eq!(r.projection.len(), 4);
    }

    #[test]
    fn planted_sign_bug_is_caught() {
        let impls = VerifyImpls {
            w2sq_1d: |a, b| Ok(-w2sq_1d(a, b)?),
            ..VerifyImpls::default()
        };
        let r = run_verify(&impls, 1, 1);
        assert!(!r.passed());
        assert!(r.failures().contains(&"w2_1d_matches_assignment"));
        assert!(!r.failures().contains(&"emd_matches_exhaustive"));
    }

    #[test]
    fn brute_force_small_case() {
        let a = EmpiricalDist::new(vec![0.0, 1.0], 1).unwrap();
        let b = EmpiricalDist::new(vec![1.0, 0.0], 1).unwrap();
        assert_eq!(brute_force_w2sq(&a, &b), 0.0);
        let c = EmpiricalDist::new(vec![2.0, 3.0], 1).unwrap();
        assert_eq!(brute_force_w2sq(&a, &c), 4.0);
    }
}
