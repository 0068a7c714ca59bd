use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AdamW hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    /// One update: `θ ← θ(1 − lr·λ)`, then the bias-corrected Adam step.
    pub fn step(&self, params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
        let n = params.len();
        if grads.len() != n || state.m.len() != n || state.v.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: if grads.len() != n { grads.len() } else { state.m.len() },
            });
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for k in 0..n {
            let g = grads[k];
            params[k] *= decay;
            state.m[k] = self.beta1 * state.m[k] + (1.0 - self.beta1) * g;
            state.v[k] = self.beta2 * state.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = state.m[k] / c1;
            let v_hat = state.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let opt = AdamW::new(0.01, 0.0);
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3);
        for _ in 0..5 {
            opt.step(&mut p, &[0.0; 3], &mut s).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let opt = AdamW::new(0.002, 0.0);
        let g = [3.0, -0.25, 1e-3];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        opt.step(&mut p, &g, &mut s).unwrap();
        for (pk, gk) in p.iter().zip(g) {
            let exact = -0.002 * gk / (gk.abs() + 1e-8);
            assert!((pk - exact).abs() < 1e-18);
            assert!((pk + 0.002 * gk.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn decoupled_decay_scales_parameters() {
        let opt = AdamW::new(0.002, 0.005);
        let mut p = vec![1.0, -4.0];
        let mut s = AdamState::new(2);
        opt.step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert!((p[0] - (1.0 - 1e-5)).abs() < 1e-15);
        assert!((p[1] + 4.0 * (1.0 - 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let opt = AdamW::new(0.1, 0.0);
        let mut p = vec![0.0; 2];
        assert!(opt.step(&mut p, &[1.0], &mut AdamState::new(2)).is_err());
    }
}
