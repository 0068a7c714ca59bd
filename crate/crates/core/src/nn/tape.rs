use super::neural::NeuralSde;
use crate::error::{Error, Result};
use crate::sde::{euler_step, BrownianIncrements, Ensemble, SdeModel, TimeGrid};

/// Parameter gradients for both networks, aligned with their flat layouts.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
}

impl NetGrads {
    pub fn zeros(model: &NeuralSde) -> Self {
        Self {
            drift: vec![0.0; model.drift.param_count()],
            diffusion: vec![0.0; model.diffusion.param_count()],
        }
    }

    pub fn add_scaled(&mut self, other: &NetGrads, scale: f64) {
        for (a, b) in self.drift.iter_mut().zip(&other.drift) {
            *a += scale * b;
        }
        for (a, b) in self.diffusion.iter_mut().zip(&other.diffusion) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.drift.iter().chain(&self.diffusion).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.drift
            .iter()
            .chain(&self.diffusion)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Everything the reverse sweep needs from one unrolled simulation: the
/// networks, the frozen increments, and every layer activation at every
/// `(trajectory, step)`.
#[derive(Clone, Debug)]
pub struct Tape {
    model: NeuralSde,
    grid: TimeGrid,
    x0: Vec<f64>,
    noise: BrownianIncrements,
    drift_cache: Vec<f64>,
    diff_cache: Vec<f64>,
}

/// Unroll Euler–Maruyama for the neural model and record the tape.
///
/// The ensemble is bitwise identical to
/// [`euler_maruyama_with_noise`](crate::sde::euler_maruyama_with_noise) on the
/// same model and increments.
pub fn simulate_and_tape(
    model: &NeuralSde,
    x0: &[f64],
    grid: &TimeGrid,
    noise: &BrownianIncrements,
    seed: u64,
) -> Result<(Ensemble, Tape)> {
    let d = model.dim_state();
    let s = model.dim_noise();
    if x0.is_empty() || x0.len() % d != 0 {
        return Err(Error::DimMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let n_traj = x0.len() / d;
    noise.check(n_traj, grid, s)?;
    let steps = grid.steps();
    let len = grid.len();
    let dt = grid.dt();
    let fc = model.drift.cache_len();
    let sc = model.diffusion.cache_len();
    let mut drift_cache = vec![0.0; n_traj * steps * fc];
    let mut diff_cache = vec![0.0; n_traj * steps * sc];
    let mut data = vec![0.0; n_traj * len * d];
    let mut input = vec![0.0; d + 1];
    for j in 0..n_traj {
        let path = &mut data[j * len * d..(j + 1) * len * d];
        path[..d].copy_from_slice(&x0[j * d..(j + 1) * d]);
        for i in 0..steps {
            let (head, tail) = path.split_at_mut((i + 1) * d);
            let x = &head[i * d..];
            model.fill_input(x, grid.point(i), &mut input);
            let at = j * steps + i;
            let fcache = &mut drift_cache[at * fc..(at + 1) * fc];
            let scache = &mut diff_cache[at * sc..(at + 1) * sc];
            model.drift.forward_cached(&input, fcache);
            model.diffusion.forward_cached(&input, scache);
            euler_step(
                x,
                &fcache[fc - d..],
                &scache[sc - d * s..],
                noise.step(j, i),
                dt,
                &mut tail[..d],
            );
            if tail[..d].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    trajectory: j,
                    step: i + 1,
                });
            }
        }
    }
    let ensemble = Ensemble::new(grid.clone(), d, n_traj, data, seed, model.tag())?;
    let tape = Tape {
        model: model.clone(),
        grid: grid.clone(),
        x0: x0.to_vec(),
        noise: noise.clone(),
        drift_cache,
        diff_cache,
    };
    Ok((ensemble, tape))
}

impl Tape {
    pub fn n_traj(&self) -> usize {
        self.noise.n_traj()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn model(&self) -> &NeuralSde {
        &self.model
    }

    /// Re-run the recorded forward pass.
    pub fn replay(&self) -> Result<Ensemble> {
        Ok(simulate_and_tape(&self.model, &self.x0, &self.grid, &self.noise, 0)?.0)
    }

    /// Reverse sweep: given `∂L/∂X̂` in ensemble layout
    /// (`[(j·(N+1) + i)·d + a]`), return `∂L/∂Θ` for both networks.
    pub fn backward(&self, grad_paths: &[f64]) -> Result<NetGrads> {
        let d = self.model.dim_state();
        let s = self.model.dim_noise();
        let n_traj = self.n_traj();
        let steps = self.grid.steps();
        let len = self.grid.len();
        let expected = n_traj * len * d;
        if grad_paths.len() != expected {
            return Err(Error::TapeMismatch(format!(
                "seed has {} entries, taped ensemble has {expected}",
                grad_paths.len()
            )));
        }
        let dt = self.grid.dt();
        let fc = self.model.drift.cache_len();
        let sc = self.model.diffusion.cache_len();
        let mut grads = NetGrads::zeros(&self.model);
        let mut lambda = vec![0.0; d];
        let mut g_f = vec![0.0; d];
        let mut g_s = vec![0.0; d * s];
        let mut dx_f = vec![0.0; d + 1];
        let mut dx_s = vec![0.0; d + 1];
        let mut scratch = Vec::new();
        for j in 0..n_traj {
            let seed = &grad_paths[j * len * d..(j + 1) * len * d];
            lambda.copy_from_slice(&seed[steps * d..]);
            for i in (0..steps).rev() {
                let at = j * steps + i;
                let db = self.noise.step(j, i);
                for a in 0..d {
                    g_f[a] = lambda[a] * dt;
                    for k in 0..s {
                        g_s[a * s + k] = lambda[a] * db[k];
                    }
                }
                self.model.drift.backward_cached(
                    &self.drift_cache[at * fc..(at + 1) * fc],
                    &g_f,
                    &mut grads.drift,
                    &mut dx_f,
                    &mut scratch,
                );
                self.model.diffusion.backward_cached(
                    &self.diff_cache[at * sc..(at + 1) * sc],
                    &g_s,
                    &mut grads.diffusion,
                    &mut dx_s,
                    &mut scratch,
                );
                for a in 0..d {
                    lambda[a] += dx_f[a] + dx_s[a] + seed[i * d + a];
                }
            }
        }
        Ok(grads)
    }
}
