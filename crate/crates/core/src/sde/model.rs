use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `dX = f(X, t) dt + σ(X, t) dB` with `X ∈ ℝ^d` and `B ∈ ℝ^s`.
///
/// `diffusion` writes the `d × s` matrix row-major: entry `(a, k)` lives at
/// `out[a * s + k]`.
pub trait SdeModel: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_noise(&self) -> usize;
    fn drift(&self, x: &[f64], t: f64, out: &mut [f64]);
    fn diffusion(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn tag(&self) -> String {
        String::from("custom")
    }
}

/// Parameters of a ground-truth model from the built-in catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `dX = (1/2 - cos X) dt + σ dB`.
    DoubleWell {
        #[serde(default = "default_double_well_sigma")]
        sigma: f64,
    },
    /// `dX = (5 - X) dt + σ₀ √X dB`.
    Cir {
        #[serde(default = "default_cir_sigma0")]
        sigma0: f64,
    },
    /// `dX = (a t - b X) dt + σ dB`; defaults give the time-inhomogeneous OU
    /// benchmark.
    Ou {
        #[serde(default = "default_ou_a")]
        a: f64,
        #[serde(default = "default_ou_b")]
        b: f64,
        #[serde(default = "default_ou_sigma")]
        sigma: f64,
    },
    /// Correlated geometric Brownian motion: drift `(μ₁x₁, μ₂x₂)`, diffusion
    /// rows `(σ₁₁x₁, σ₁₂x₂; σ₂₁x₁, σ₂₂x₂)`.
    Gbm2d {
        #[serde(default = "default_gbm_mu")]
        mu: [f64; 2],
        #[serde(default = "default_gbm_sigma")]
        sigma: [[f64; 2]; 2],
    },
}

fn default_double_well_sigma() -> f64 {
    1.0
}
fn default_cir_sigma0() -> f64 {
    0.5
}
fn default_ou_a() -> f64 {
    0.02
}
fn default_ou_b() -> f64 {
    0.1
}
fn default_ou_sigma() -> f64 {
    0.4
}
fn default_gbm_mu() -> [f64; 2] {
    [0.1, 0.2]
}
fn default_gbm_sigma() -> [[f64; 2]; 2] {
    [[0.2, -0.1], [-0.1, 0.1]]
}

impl ModelSpec {
    /// Catalog entry with its default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "double_well" => ModelSpec::DoubleWell {
                sigma: default_double_well_sigma(),
            },
            "cir" => ModelSpec::Cir {
                sigma0: default_cir_sigma0(),
            },
            "ou" => ModelSpec::Ou {
                a: default_ou_a(),
                b: default_ou_b(),
                sigma: default_ou_sigma(),
            },
            "gbm2d" => ModelSpec::Gbm2d {
                mu: default_gbm_mu(),
                sigma: default_gbm_sigma(),
            },
            other => return Err(Error::UnknownModel(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::DoubleWell { .. } => "double_well",
            ModelSpec::Cir { .. } => "cir",
            ModelSpec::Ou { .. } => "ou",
            ModelSpec::Gbm2d { .. } => "gbm2d",
        }
    }

    pub fn dim_state(&self) -> usize {
        match self {
            ModelSpec::Gbm2d { .. } => 2,
            _ => 1,
        }
    }

    pub fn build(&self) -> Result<CatalogModel> {
        let finite = match self {
            ModelSpec::DoubleWell { sigma } => sigma.is_finite(),
            ModelSpec::Cir { sigma0 } => {
                if *sigma0 < 0.0 {
                    return Err(Error::invalid(format!("cir requires sigma0 >= 0, got {sigma0}")));
                }
                sigma0.is_finite()
            }
            ModelSpec::Ou { a, b, sigma } => [a, b, sigma].iter().all(|v| v.is_finite()),
            ModelSpec::Gbm2d { mu, sigma } => mu
                .iter()
                .chain(sigma.iter().flatten())
                .all(|v| v.is_finite()),
        };
        if !finite {
            return Err(Error::invalid(format!("non-finite parameters for {}", self.name())));
        }
        Ok(CatalogModel {
            spec: self.clone(),
            clamps: AtomicU64::new(0),
        })
    }

    /// Short provenance label, e.g. `cir(sigma0=0.5)`.
    pub fn tag(&self) -> String {
        match self {
            ModelSpec::DoubleWell { sigma } => format!("double_well(sigma={sigma})"),
            ModelSpec::Cir { sigma0 } => format!("cir(sigma0={sigma0})"),
            ModelSpec::Ou { a, b, sigma } => format!("ou(a={a},b={b},sigma={sigma})"),
            ModelSpec::Gbm2d { mu, sigma } => format!("gbm2d(mu={mu:?},sigma={sigma:?})"),
        }
    }
}

/// Analytic drift and diffusion for a [`ModelSpec`].
///
/// The CIR square root is evaluated as `√max(x, 0)`; every clamped evaluation
/// bumps [`CatalogModel::clamped_evaluations`].
#[derive(Debug)]
pub struct CatalogModel {
    spec: ModelSpec,
    clamps: AtomicU64,
}

impl Clone for CatalogModel {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            clamps: AtomicU64::new(self.clamped_evaluations()),
        }
    }
}

impl CatalogModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn clamped_evaluations(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }
}

pub fn catalog_model(name: &str) -> Result<CatalogModel> {
    ModelSpec::from_name(name)?.build()
}

impl SdeModel for CatalogModel {
    fn dim_state(&self) -> usize {
        self.spec.dim_state()
    }

    fn dim_noise(&self) -> usize {
        self.spec.dim_state()
    }

    fn drift(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match &self.spec {
            ModelSpec::DoubleWell { .. } => out[0] = 0.5 - x[0].cos(),
            ModelSpec::Cir { .. } => out[0] = 5.0 - x[0],
            ModelSpec::Ou { a, b, .. } => out[0] = a * t - b * x[0],
            ModelSpec::Gbm2d { mu, .. } => {
                out[0] = mu[0] * x[0];
                out[1] = mu[1] * x[1];
            }
        }
    }

    fn diffusion(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        match &self.spec {
            ModelSpec::DoubleWell { sigma } => out[0] = *sigma,
            ModelSpec::Cir { sigma0 } => {
                if x[0] < 0.0 {
                    self.clamps.fetch_add(1, Ordering::Relaxed);
                }
                out[0] = sigma0 * x[0].max(0.0).sqrt();
            }
            ModelSpec::Ou { sigma, .. } => out[0] = *sigma,
            ModelSpec::Gbm2d { sigma, .. } => {
                out[0] = sigma[0][0] * x[0];
                out[1] = sigma[0][1] * x[1];
                out[2] = sigma[1][0] * x[0];
                out[3] = sigma[1][1] * x[1];
            }
        }
    }

    fn tag(&self) -> String {
        self.spec.tag()
    }
}
