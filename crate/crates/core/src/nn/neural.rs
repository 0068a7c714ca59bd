use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::sde::SdeModel;

/// How time enters the networks as the last input coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeInput {
    /// `t / T`.
    #[default]
    Normalized,
    /// `t` as is.
    Raw,
    /// The time coordinate is held at zero, making both nets autonomous.
    Off,
}

impl TimeInput {
    pub fn scale(self, t_end: f64) -> f64 {
        match self {
            TimeInput::Normalized => 1.0 / t_end,
            TimeInput::Raw => 1.0,
            TimeInput::Off => 0.0,
        }
    }
}

/// SDE whose drift and diffusion are MLPs of `(x, t·scale)`.
///
/// The drift net maps `d + 1 → d`; the diffusion net maps `d + 1 → d·s`,
/// read row-major as the `d × s` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralSde {
    pub drift: Mlp,
    pub diffusion: Mlp,
    dim_noise: usize,
    time_scale: f64,
}

impl NeuralSde {
    pub fn new(drift: Mlp, diffusion: Mlp, dim_noise: usize, time_scale: f64) -> Result<Self> {
        let d = drift.output_dim();
        if drift.input_dim() != d + 1 {
            return Err(Error::DimMismatch {
                expected: d + 1,
                got: drift.input_dim(),
            });
        }
        if diffusion.input_dim() != d + 1 {
            return Err(Error::DimMismatch {
                expected: d + 1,
                got: diffusion.input_dim(),
            });
        }
        if dim_noise == 0 || diffusion.output_dim() != d * dim_noise {
            return Err(Error::DimMismatch {
                expected: d * dim_noise,
                got: diffusion.output_dim(),
            });
        }
        if !(time_scale.is_finite() && time_scale >= 0.0) {
            return Err(Error::invalid(format!("time scale must be nonnegative, got {time_scale}")));
        }
        Ok(Self {
            drift,
            diffusion,
            dim_noise,
            time_scale,
        })
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    #[inline]
    pub(crate) fn fill_input(&self, x: &[f64], t: f64, input: &mut [f64]) {
        let d = x.len();
        input[..d].copy_from_slice(x);
        input[d] = t * self.time_scale;
    }

    fn eval(net: &Mlp, input: &[f64], out: &mut [f64]) {
        let mut cache = vec![0.0; net.cache_len()];
        net.forward_cached(input, &mut cache);
        out.copy_from_slice(&cache[cache.len() - out.len()..]);
    }
}

impl SdeModel for NeuralSde {
    fn dim_state(&self) -> usize {
        self.drift.output_dim()
    }

    fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    fn drift(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut input = vec![0.0; x.len() + 1];
        self.fill_input(x, t, &mut input);
        Self::eval(&self.drift, &input, out);
    }

    fn diffusion(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut input = vec![0.0; x.len() + 1];
        self.fill_input(x, t, &mut input);
        Self::eval(&self.diffusion, &input, out);
    }

    fn tag(&self) -> String {
        format!(
            "neural(drift={:?},diffusion={:?})",
            self.drift.widths(),
            self.diffusion.widths()
        )
    }
}
