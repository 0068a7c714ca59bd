use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::{LossKind, LossOptions};
use crate::nn::{Activation, Mlp, NeuralSde, TimeInput};
use crate::sde::{euler_maruyama, Ensemble, InitialCondition, ModelSpec, SdeModel, TimeGrid};

/// Architecture of one MLP: `hidden_layers` layers of `width` units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
}

impl NetSpec {
    pub fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers + 2);
        w.push(input);
        w.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        w.push(output);
        w
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// New Brownian increments for the predicted paths every epoch.
    #[default]
    FreshEachEpoch,
    /// One set of increments reused for the whole run.
    Frozen,
}

/// Seed streams; every random draw of a run is keyed by `(seed, stream, index)`.
pub(crate) mod stream {
    pub const GROUND_TRUTH: u64 = 1;
    pub const INIT: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const GT_BATCH: u64 = 4;
    pub const PRED_BATCH: u64 = 5;
    pub const EVAL: u64 = 6;
}

/// SplitMix64 finalizer over the three words.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Ground-truth trajectories `M`; the predicted ensemble has the same size.
    pub n_samples: usize,
    /// Trajectories per epoch on each side; `n_samples` means full batch.
    pub batch_size: usize,
    pub drift_net: NetSpec,
    pub diffusion_net: NetSpec,
    pub dt: f64,
    pub t_end: f64,
    pub model: ModelSpec,
    pub ic: InitialCondition,
    pub seed: u64,
    #[serde(default)]
    pub noise_policy: NoisePolicy,
    #[serde(default)]
    pub time_input: TimeInput,
    #[serde(default)]
    pub loss_options: LossOptions,
    /// Losses recorded every epoch without entering the gradient.
    #[serde(default)]
    pub track: Vec<LossKind>,
}

impl TrainConfig {
    /// Default settings of the four benchmark examples.
    pub fn example(id: u32) -> Result<Self> {
        let net = |hidden_layers, activation| NetSpec {
            hidden_layers,
            width: 32,
            activation,
        };
        let base = |loss, lr, epochs, n, hidden, act, dt, t_end, model: &str, x0: Vec<f64>| -> Result<Self> {
            Ok(Self {
                loss,
                lr,
                weight_decay: 0.005,
                epochs,
                n_samples: n,
                batch_size: n,
                drift_net: net(hidden, act),
                diffusion_net: net(hidden, act),
                dt,
                t_end,
                model: ModelSpec::from_name(model)?,
                ic: InitialCondition::point(x0),
                seed: 0,
                noise_policy: NoisePolicy::default(),
                time_input: TimeInput::default(),
                loss_options: LossOptions::default(),
                track: Vec::new(),
            })
        };
        use Activation::{Relu, Tanh};
        use LossKind::*;
        // Autonomous ground truths get autonomous nets.
        let autonomous = |cfg: Result<Self>| {
            cfg.map(|c| Self {
                time_input: TimeInput::Off,
                ..c
            })
        };
        match id {
            1 => autonomous(base(W2Decoupled, 0.001, 1000, 100, 2, Tanh, 0.1, 20.0, "double_well", vec![0.0])),
            2 => autonomous(base(W2Decoupled, 0.002, 2000, 200, 1, Relu, 0.05, 2.0, "cir", vec![2.0])),
            3 => base(W2Decoupled, 0.002, 2000, 256, 1, Relu, 1.0, 63.0, "ou", vec![0.0]),
            4 => autonomous(base(
                W2Decorrelated2d,
                0.0005,
                2000,
                200,
                1,
                Relu,
                0.02,
                2.0,
                "gbm2d",
                vec![1.0, 0.5],
            )),
            other => Err(Error::invalid(format!("no example {other}; expected 1..=4"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be a finite nonnegative number, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be nonnegative, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.n_samples == 0 || self.batch_size == 0 || self.batch_size > self.n_samples {
            return fail(format!(
                "batch_size {} must lie in [1, n_samples = {}]",
                self.batch_size, self.n_samples
            ));
        }
        for (name, net) in [("drift_net", &self.drift_net), ("diffusion_net", &self.diffusion_net)] {
            if net.hidden_layers > 0 && net.width == 0 {
                return fail(format!("{name}: width must be positive"));
            }
        }
        self.grid()?;
        self.model.build()?;
        self.ic.validate()?;
        let d = self.model.dim_state();
        if self.ic.dim() != d {
            return fail(format!("initial condition has dimension {}, model has {d}", self.ic.dim()));
        }
        for kind in std::iter::once(self.loss).chain(self.track.iter().copied()) {
            let ok = match kind {
                LossKind::Nll => d == 1,
                LossKind::W2Decorrelated2d | LossKind::W2Sliced => d == 2,
                _ => true,
            };
            if !ok {
                return fail(format!("loss {kind} is not defined for dimension {d}"));
            }
        }
        if self.loss_options.sliced_bins == 0 {
            return fail("sliced_bins must be positive".into());
        }
        if let Some(m) = &self.loss_options.mmd {
            m.validate()?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_dt(self.t_end, self.dt)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn ground_truth_seed(&self) -> u64 {
        derive_seed(self.seed, stream::GROUND_TRUTH, 0)
    }

    /// `n_samples` ground-truth paths plus the number of clamped model
    /// evaluations during the simulation.
    pub fn simulate_ground_truth(&self) -> Result<(Ensemble, u64)> {
        let model = self.model.build()?;
        let ens = euler_maruyama(&model, &self.ic, &self.grid()?, self.n_samples, self.ground_truth_seed())?;
        Ok((ens, model.clamped_evaluations()))
    }

    pub fn ground_truth(&self) -> Result<Ensemble> {
        Ok(self.simulate_ground_truth()?.0)
    }

    /// Freshly initialized networks for this configuration.
    pub fn init_model(&self) -> Result<NeuralSde> {
        use rand::SeedableRng;
        let d = self.model.dim_state();
        let s = self.model.build()?.dim_noise();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(self.seed, stream::INIT, 0));
        let drift = Mlp::init(&self.drift_net.widths(d + 1, d), self.drift_net.activation, &mut rng)?;
        let diffusion = Mlp::init(
            &self.diffusion_net.widths(d + 1, d * s),
            self.diffusion_net.activation,
            &mut rng,
        )?;
        NeuralSde::new(drift, diffusion, s, self.time_input.scale(self.t_end))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_presets() {
        let e2 = TrainConfig::example(2).unwrap();
        assert_eq!((e2.lr, e2.weight_decay, e2.epochs, e2.n_samples), (0.002, 0.005, 2000, 200));
        assert_eq!((e2.drift_net.hidden_layers, e2.drift_net.width), (1, 32));
        assert_eq!(e2.drift_net.activation, Activation::Relu);
        assert_eq!(e2.grid().unwrap().steps(), 40);
        let e3 = TrainConfig::example(3).unwrap();
        assert_eq!((e3.n_samples, e3.grid().unwrap().steps()), (256, 63));
        let e1 = TrainConfig::example(1).unwrap();
        assert_eq!((e1.epochs, e1.drift_net.hidden_layers, e1.drift_net.activation), (1000, 2, Activation::Tanh));
        assert_eq!(TrainConfig::example(4).unwrap().lr, 0.0005);
        for id in 1..=4 {
            TrainConfig::example(id).unwrap().validate().unwrap();
        }
        assert!(TrainConfig::example(5).is_err());
    }

    #[test]
    fn validation_guards() {
        let ok = TrainConfig::example(2).unwrap();
        for bad in [
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { lr: -1.0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { batch_size: 201, ..ok.clone() },
            TrainConfig { dt: 0.3, ..ok.clone() },
            TrainConfig {
                loss: LossKind::W2Sliced,
                ..ok.clone()
            },
            TrainConfig {
                ic: InitialCondition::point([0.0, 0.0]),
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))), "{bad:?}");
        }
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let cfg = TrainConfig::example(4).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = TrainConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
        assert_eq!(cfg.config_hash().len(), 64);
        let other = TrainConfig { seed: 1, ..cfg };
        assert_ne!(other.config_hash(), back.config_hash());
    }

    #[test]
    fn minimal_toml() {
        let text = r#"
loss = "w2_decoupled"
lr = 0.002
weight_decay = 0.005
epochs = 10
n_samples = 20
batch_size = 20
dt = 0.05
t_end = 2.0
seed = 7

[drift_net]
hidden_layers = 1
width = 8
activation = "relu"

[diffusion_net]
hidden_layers = 1
width = 8
activation = "relu"

[model]
name = "cir"
sigma0 = 0.25

[ic]
kind = "gaussian"
mean = [2.0]
stddev = 0.5
"#;
        let cfg = TrainConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.model, ModelSpec::Cir { sigma0: 0.25 });
        assert_eq!(cfg.noise_policy, NoisePolicy::FreshEachEpoch);
        assert!(TrainConfig::from_toml_str(&text.replace("epochs = 10", "epochs = 0")).is_err());
        assert!(TrainConfig::from_toml_str(&text.replace("w2_decoupled", "wgan")).is_err());
    }

    #[test]
    fn seeds_are_spread_out() {
        let a = derive_seed(0, stream::NOISE, 0);
        assert_ne!(a, derive_seed(0, stream::NOISE, 1));
        assert_ne!(a, derive_seed(1, stream::NOISE, 0));
        assert_ne!(a, derive_seed(0, stream::INIT, 0));
    }

    #[test]
    fn initial_model_shapes() {
        let m = TrainConfig::example(4).unwrap().init_model().unwrap();
        assert_eq!(m.drift.widths(), &[3, 32, 2]);
        assert_eq!(m.diffusion.widths(), &[3, 32, 4]);
        assert_eq!(m.time_scale(), 0.0);
        let ou = TrainConfig::example(3).unwrap().init_model().unwrap();
        assert_eq!(ou.time_scale(), 1.0 / 63.0);
    }
}
