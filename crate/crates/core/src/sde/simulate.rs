use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::{Ensemble, SdeModel, TimeGrid};

/// Seed offset separating initial-condition draws from the Brownian stream.
const IC_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Per-trajectory generator: stream `j` of the ChaCha8 keystream keyed by
/// `seed`, so trajectory `j`'s draws do not depend on how many others exist.
pub(crate) fn trajectory_rng(seed: u64, traj: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Point { x0: Vec<f64> },
    /// Independent `N(mean_k, stddev²)` per coordinate.
    Gaussian { mean: Vec<f64>, stddev: f64 },
}

impl InitialCondition {
    pub fn point(x0: impl Into<Vec<f64>>) -> Self {
        InitialCondition::Point { x0: x0.into() }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialCondition::Point { x0 } => x0.len(),
            InitialCondition::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialCondition::Point { x0 } if x0.iter().all(|v| v.is_finite()) => Ok(()),
            InitialCondition::Gaussian { mean, stddev }
                if *stddev >= 0.0 && stddev.is_finite() && mean.iter().all(|v| v.is_finite()) =>
            {
                Ok(())
            }
            _ => Err(Error::invalid(format!("invalid initial condition {self:?}"))),
        }
    }

    /// `M × d` initial states; deterministic in `(seed, j)` per trajectory.
    pub fn sample(&self, n_traj: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut out = Vec::with_capacity(n_traj * self.dim());
        match self {
            InitialCondition::Point { x0 } => {
                for _ in 0..n_traj {
                    out.extend_from_slice(x0);
                }
            }
            InitialCondition::Gaussian { mean, stddev } => {
                for j in 0..n_traj {
                    let mut rng = trajectory_rng(seed ^ IC_STREAM_SALT, j);
                    for m in mean {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        out.push(m + stddev * z);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `M × N × s` Brownian increments, each `N(0, dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianIncrements {
    n_traj: usize,
    steps: usize,
    dim_noise: usize,
    seed: u64,
    data: Vec<f64>,
}

impl BrownianIncrements {
    pub fn generate(n_traj: usize, grid: &TimeGrid, dim_noise: usize, seed: u64) -> Self {
        let steps = grid.steps();
        let scale = grid.dt().sqrt();
        let mut data = Vec::with_capacity(n_traj * steps * dim_noise);
        for j in 0..n_traj {
            let mut rng = trajectory_rng(seed, j);
            for _ in 0..steps * dim_noise {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(scale * z);
            }
        }
        Self {
            n_traj,
            steps,
            dim_noise,
            seed,
            data,
        }
    }

    pub fn from_raw(n_traj: usize, steps: usize, dim_noise: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_traj * steps * dim_noise {
            return Err(Error::DimMismatch {
                expected: n_traj * steps * dim_noise,
                got: data.len(),
            });
        }
        Ok(Self {
            n_traj,
            steps,
            dim_noise,
            seed: 0,
            data,
        })
    }

    pub fn n_traj(&self) -> usize {
        self.n_traj
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn step(&self, traj: usize, step: usize) -> &[f64] {
        let at = (traj * self.steps + step) * self.dim_noise;
        &self.data[at..at + self.dim_noise]
    }

    pub(crate) fn check(&self, n_traj: usize, grid: &TimeGrid, dim_noise: usize) -> Result<()> {
        if self.n_traj != n_traj || self.steps != grid.steps() || self.dim_noise != dim_noise {
            return Err(Error::invalid(format!(
                "noise shape {}x{}x{} does not match {}x{}x{}",
                self.n_traj,
                self.steps,
                self.dim_noise,
                n_traj,
                grid.steps(),
                dim_noise
            )));
        }
        Ok(())
    }
}

/// One Euler–Maruyama update `x + f·dt + σ·ΔB`, shared by every simulator so
/// analytic and neural models produce identical bits for identical inputs.
#[inline]
pub(crate) fn euler_step(x: &[f64], f: &[f64], sig: &[f64], db: &[f64], dt: f64, out: &mut [f64]) {
    let s = db.len();
    for a in 0..x.len() {
        let mut noise = 0.0;
        for k in 0..s {
            noise += sig[a * s + k] * db[k];
        }
        out[a] = x[a] + f[a] * dt + noise;
    }
}

/// Simulate `M` paths of `model` from the given initial states and frozen
/// increments.
pub fn euler_maruyama_with_noise(
    model: &dyn SdeModel,
    x0: &[f64],
    grid: &TimeGrid,
    noise: &BrownianIncrements,
    seed: u64,
) -> Result<Ensemble> {
    let d = model.dim_state();
    let s = model.dim_noise();
    if d == 0 || s == 0 {
        return Err(Error::invalid("model dimensions must be positive"));
    }
    if x0.is_empty() || x0.len() % d != 0 {
        return Err(Error::DimMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let n_traj = x0.len() / d;
    noise.check(n_traj, grid, s)?;
    let dt = grid.dt();
    let len = grid.len();
    let mut data = vec![0.0; n_traj * len * d];
    let mut f = vec![0.0; d];
    let mut sig = vec![0.0; d * s];
    for j in 0..n_traj {
        let path = &mut data[j * len * d..(j + 1) * len * d];
        path[..d].copy_from_slice(&x0[j * d..(j + 1) * d]);
        for i in 0..grid.steps() {
            let t = grid.point(i);
            let (head, tail) = path.split_at_mut((i + 1) * d);
            let x = &head[i * d..];
            model.drift(x, t, &mut f);
            model.diffusion(x, t, &mut sig);
            euler_step(x, &f, &sig, noise.step(j, i), dt, &mut tail[..d]);
            if tail[..d].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    trajectory: j,
                    step: i + 1,
                });
            }
        }
    }
    Ensemble::new(grid.clone(), d, n_traj, data, seed, model.tag())
}

/// Euler–Maruyama ensemble of `n_traj` paths; bitwise reproducible in `seed`.
pub fn euler_maruyama(
    model: &dyn SdeModel,
    ic: &InitialCondition,
    grid: &TimeGrid,
    n_traj: usize,
    seed: u64,
) -> Result<Ensemble> {
    if n_traj == 0 {
        return Err(Error::invalid("need at least one trajectory"));
    }
    if ic.dim() != model.dim_state() {
        return Err(Error::DimMismatch {
            expected: model.dim_state(),
            got: ic.dim(),
        });
    }
    let x0 = ic.sample(n_traj, seed)?;
    let noise = BrownianIncrements::generate(n_traj, grid, model.dim_noise(), seed);
    euler_maruyama_with_noise(model, &x0, grid, &noise, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{catalog_model, ModelSpec};

    struct Still;

    impl SdeModel for Still {
        fn dim_state(&self) -> usize {
            1
        }
        fn dim_noise(&self) -> usize {
            1
        }
        fn drift(&self, _: &[f64], _: f64, out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn diffusion(&self, _: &[f64], _: f64, out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt(), var)
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let e = euler_maruyama(&Still, &InitialCondition::point([1.25]), &grid, 5, 3).unwrap();
        assert!(e.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn deterministic_in_seed() {
        let m = catalog_model("cir").unwrap();
        let grid = TimeGrid::from_dt(2.0, 0.05).unwrap();
        let ic = InitialCondition::point([2.0]);
        let a = euler_maruyama(&m, &ic, &grid, 50, 11).unwrap();
        let b = euler_maruyama(&m, &ic, &grid, 50, 11).unwrap();
        assert_eq!(a, b);
        let c = euler_maruyama(&m, &ic, &grid, 50, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trajectories_independent_of_ensemble_size() {
        let m = catalog_model("ou").unwrap();
        let grid = TimeGrid::new(10.0, 10).unwrap();
        let ic = InitialCondition::Gaussian {
            mean: vec![0.0],
            stddev: 0.3,
        };
        let small = euler_maruyama(&m, &ic, &grid, 3, 5).unwrap();
        let large = euler_maruyama(&m, &ic, &grid, 8, 5).unwrap();
        for j in 0..3 {
            assert_eq!(small.trajectory(j), large.trajectory(j));
        }
    }

    #[test]
    fn zero_noise_matches_explicit_euler() {
        let m = ModelSpec::DoubleWell { sigma: 0.0 }.build().unwrap();
        let grid = TimeGrid::from_dt(5.0, 0.1).unwrap();
        let e = euler_maruyama(&m, &InitialCondition::point([0.3]), &grid, 2, 9).unwrap();
        let mut x = 0.3f64;
        for i in 0..grid.steps() {
            x = x + (0.5 - x.cos()) * grid.dt();
            assert_eq!(e.state(1, i + 1)[0], x);
        }
    }

    #[test]
    fn increments_have_variance_dt() {
        let grid = TimeGrid::from_dt(1.0, 0.25).unwrap();
        let noise = BrownianIncrements::generate(4000, &grid, 1, 1);
        let (mean, se, var) = mean_and_se(noise.data());
        assert!(mean.abs() < 4.0 * se);
        assert!((var - 0.25).abs() < 0.02);
    }

    #[test]
    fn ou_terminal_mean_matches_closed_form() {
        let m = catalog_model("ou").unwrap();
        let grid = TimeGrid::from_dt(63.0, 1.0).unwrap();
        let e = euler_maruyama(&m, &InitialCondition::point([0.0]), &grid, 10_000, 2024).unwrap();
        let (mean, se, _) = mean_and_se(&e.marginal(63));
        let exact = 0.2 * 63.0 - 2.0 + 2.0 * (-6.3f64).exp();
        assert!((exact - 10.604).abs() < 1e-3);
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} vs {exact} (se {se})");
    }

    #[test]
    fn cir_terminal_mean_matches_closed_form() {
        let m = catalog_model("cir").unwrap();
        let grid = TimeGrid::from_dt(2.0, 0.05).unwrap();
        let e = euler_maruyama(&m, &InitialCondition::point([2.0]), &grid, 10_000, 77).unwrap();
        let (mean, se, _) = mean_and_se(&e.marginal(40));
        // Linear drift and zero-mean noise: the scheme's mean obeys
        // m_{n+1} = m_n + (5 - m_n) dt exactly.
        let exact = 5.0 - 3.0 * 0.95f64.powi(40);
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} vs {exact} (se {se})");
        let continuous = 5.0 - 3.0 * (-2f64).exp();
        assert!((mean - continuous).abs() < 0.05);
    }

    #[test]
    fn ou_moments_track_closed_form() {
        // Exact moments: m' = 0.02t - 0.1m, v' = -0.2v + 0.16, both from zero.
        let m = catalog_model("ou").unwrap();
        let grid = TimeGrid::from_dt(63.0, 0.1).unwrap();
        let e = euler_maruyama(&m, &InitialCondition::point([0.0]), &grid, 10_000, 99).unwrap();
        let n = e.n_traj() as f64;
        for i in [10usize, 50, 200, 400, 630] {
            let t = grid.point(i);
            let (mean, se, var) = mean_and_se(&e.marginal(i));
            let exact_mean = 0.2 * t - 2.0 + 2.0 * (-0.1 * t).exp();
            let exact_var = 0.8 * (1.0 - (-0.2 * t).exp());
            let var_se = exact_var * (2.0 / (n - 1.0)).sqrt();
            assert!((mean - exact_mean).abs() < 4.0 * se, "t={t}: mean {mean} vs {exact_mean}");
            assert!((var - exact_var).abs() < 4.0 * var_se, "t={t}: var {var} vs {exact_var}");
        }
    }

    #[test]
    fn reports_non_finite_state() {
        struct Blowup;
        impl SdeModel for Blowup {
            fn dim_state(&self) -> usize {
                1
            }
            fn dim_noise(&self) -> usize {
                1
            }
            fn drift(&self, x: &[f64], _: f64, out: &mut [f64]) {
                out[0] = x[0] * x[0] * 1e200;
            }
            fn diffusion(&self, _: &[f64], _: f64, out: &mut [f64]) {
                out[0] = 0.0;
            }
        }
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let err = euler_maruyama(&Blowup, &InitialCondition::point([10.0]), &grid, 2, 0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { trajectory: 0, .. }));
    }

    #[test]
    fn rejects_zero_trajectories_and_dim_mismatch() {
        let m = catalog_model("ou").unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        assert!(euler_maruyama(&m, &InitialCondition::point([0.0]), &grid, 0, 0).is_err());
        assert!(matches!(
            euler_maruyama(&m, &InitialCondition::point([0.0, 1.0]), &grid, 2, 0),
            Err(Error::DimMismatch { .. })
        ));
    }
}
