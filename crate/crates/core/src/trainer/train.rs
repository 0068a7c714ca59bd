use std::borrow::Cow;
use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, stream, NoisePolicy, TrainConfig};
use super::report::TrainReport;
use crate::error::{Error, Result};
use crate::losses::{loss_neg_loglik, mmd_config_for, path_loss, LossKind, LossOptions};
use crate::metrics::{relative_err_f, relative_err_sigma, MetricsReport};
use crate::nn::{simulate_and_tape, AdamW, Checkpoint, NetGrads, NeuralSde};
use crate::sde::{euler_maruyama_with_noise, BrownianIncrements, Ensemble, SdeModel};

/// Result of [`run_training`]: the last finite state and the report.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

fn check_model_shape(cfg: &TrainConfig, model: &NeuralSde) -> Result<()> {
    let fresh = cfg.init_model()?;
    if fresh.drift.widths() != model.drift.widths()
        || fresh.diffusion.widths() != model.diffusion.widths()
        || fresh.dim_noise() != model.dim_noise()
    {
        return Err(Error::invalid("checkpoint networks do not match the configured architecture"));
    }
    Ok(())
}

/// Options with the kernel ladder fixed once from the full ground truth, so
/// every epoch scores against the same bandwidths.
fn resolved_options(cfg: &TrainConfig, gt: &Ensemble) -> Result<LossOptions> {
    let mut opts = cfg.loss_options.clone();
    let wants_mmd = cfg.loss == LossKind::Mmd || cfg.track.contains(&LossKind::Mmd);
    if wants_mmd && opts.mmd.is_none() {
        opts.mmd = Some(mmd_config_for(gt)?);
    }
    Ok(opts)
}

fn draw_indices(m: usize, b: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, m, b).into_vec()
}

struct EpochData<'a> {
    gt: Cow<'a, Ensemble>,
    x0: Vec<f64>,
    noise: BrownianIncrements,
}

fn epoch_data<'a>(cfg: &TrainConfig, gt: &'a Ensemble, epoch: usize, s: usize) -> Result<EpochData<'a>> {
    let (m, b) = (gt.n_traj(), cfg.batch_size);
    let (gt_batch, x0) = if b == m {
        (Cow::Borrowed(gt), gt.initial_states())
    } else {
        let gi = draw_indices(m, b, derive_seed(cfg.seed, stream::GT_BATCH, epoch as u64));
        let pi = draw_indices(m, b, derive_seed(cfg.seed, stream::PRED_BATCH, epoch as u64));
        let d = gt.dim();
        let mut x0 = Vec::with_capacity(b * d);
        for &j in &pi {
            x0.extend_from_slice(gt.state(j, 0));
        }
        (Cow::Owned(gt.select(&gi)?), x0)
    };
    let noise_index = match cfg.noise_policy {
        NoisePolicy::FreshEachEpoch => epoch as u64,
        NoisePolicy::Frozen => 0,
    };
    let noise = BrownianIncrements::generate(b, gt.grid(), s, derive_seed(cfg.seed, stream::NOISE, noise_index));
    Ok(EpochData { gt: gt_batch, x0, noise })
}

fn tracked_value(kind: LossKind, gt: &Ensemble, pred: Option<&Ensemble>, model: &NeuralSde, opts: &LossOptions) -> f64 {
    let v = match (kind, pred) {
        (LossKind::Nll, _) => loss_neg_loglik(gt, model, opts.nll_variant).map(|e| e.value),
        (_, Some(p)) => path_loss(kind, gt, p, opts).map(|e| e.value),
        (_, None) => return f64::NAN,
    };
    v.unwrap_or(f64::NAN)
}

/// Train the networks on `gt`, optionally continuing from `resume`.
///
/// A non-finite simulation, loss or gradient stops the run; the returned
/// checkpoint then holds the parameters from before the failing epoch and
/// `report.diverged_at` names it.
pub fn run_training(cfg: &TrainConfig, gt: &Ensemble, resume: Option<Checkpoint>) -> Result<TrainRun> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    gt.grid().check_same(&grid)?;
    let d = cfg.model.dim_state();
    if gt.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            got: gt.dim(),
        });
    }
    if gt.n_traj() < cfg.batch_size {
        return Err(Error::invalid(format!(
            "ground truth has {} trajectories, batch needs {}",
            gt.n_traj(),
            cfg.batch_size
        )));
    }
    let mut ckpt = match resume {
        Some(c) => {
            check_model_shape(cfg, &c.model)?;
            c
        }
        None => Checkpoint::fresh(cfg.init_model()?),
    };
    let opts = resolved_options(cfg, gt)?;
    let optimizer = AdamW::new(cfg.lr, cfg.weight_decay);
    let s = ckpt.model.dim_noise();
    let start = ckpt.epochs_completed as usize;
    let mut report = TrainReport::new(cfg, start);
    report.mmd_base = opts.mmd.map(|m| m.base);
    let needs_paths = cfg.loss != LossKind::Nll || cfg.track.iter().any(|k| *k != LossKind::Nll);

    for epoch in start..cfg.epochs {
        let clock = Instant::now();
        let data = epoch_data(cfg, gt, epoch, s)?;
        let seed = derive_seed(cfg.seed, stream::NOISE, epoch as u64);
        let (value, grads, pred) = if cfg.loss == LossKind::Nll {
            let ev = loss_neg_loglik(&data.gt, &ckpt.model, opts.nll_variant)?;
            let pred = if needs_paths {
                match euler_maruyama_with_noise(&ckpt.model, &data.x0, &grid, &data.noise, seed) {
                    Ok(p) => Some(p),
                    Err(Error::NonFinite { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            (ev.value, ev.grads, pred)
        } else {
            let (pred, tape) = match simulate_and_tape(&ckpt.model, &data.x0, &grid, &data.noise, seed) {
                Ok(pair) => pair,
                Err(Error::NonFinite { .. }) => {
                    report.diverged_at = Some(epoch);
                    break;
                }
                Err(e) => return Err(e),
            };
            let ev = path_loss(cfg.loss, &data.gt, &pred, &opts)?;
            let grads = if ev.value.is_finite() {
                tape.backward(&ev.grad_paths)?
            } else {
                NetGrads::zeros(&ckpt.model)
            };
            (ev.value, grads, Some(pred))
        };
        if !value.is_finite() || !grads.is_finite() {
            report.diverged_at = Some(epoch);
            break;
        }
        for kind in &cfg.track {
            let v = tracked_value(*kind, &data.gt, pred.as_ref(), &ckpt.model, &opts);
            if !v.is_finite() {
                report.non_finite_tracked += 1;
            }
            report.tracked.entry(kind.name().to_string()).or_default().push(v);
        }
        optimizer.step(ckpt.model.drift.params_mut(), &grads.drift, &mut ckpt.drift_state)?;
        optimizer.step(ckpt.model.diffusion.params_mut(), &grads.diffusion, &mut ckpt.diffusion_state)?;
        ckpt.epochs_completed += 1;
        report.loss.push(value);
        report.epoch_seconds.push(clock.elapsed().as_secs_f64());
    }
    Ok(TrainRun {
        checkpoint: ckpt,
        report,
    })
}

/// [`run_training`] from scratch, with divergence reported as an error.
pub fn train(cfg: &TrainConfig, gt: &Ensemble) -> Result<(Checkpoint, TrainReport)> {
    let run = run_training(cfg, gt, None)?;
    if let Some(epoch) = run.report.diverged_at {
        return Err(Error::Diverged { epoch });
    }
    Ok((run.checkpoint, run.report))
}

/// Relative errors along the ground-truth paths and every applicable loss
/// between `gt` and a freshly simulated predicted ensemble of the same size.
pub fn evaluate(cfg: &TrainConfig, ckpt: &Checkpoint, gt: &Ensemble) -> Result<MetricsReport> {
    let clock = Instant::now();
    let truth = cfg.model.build()?;
    let model = &ckpt.model;
    let grid = gt.grid();
    let seed = derive_seed(cfg.seed, stream::EVAL, 0);
    let noise = BrownianIncrements::generate(gt.n_traj(), grid, model.dim_noise(), seed);
    let pred = euler_maruyama_with_noise(model, &gt.initial_states(), grid, &noise, seed)?;
    let mut opts = cfg.loss_options.clone();
    if opts.mmd.is_none() {
        opts.mmd = Some(mmd_config_for(gt)?);
    }
    let mut losses = BTreeMap::new();
    for kind in LossKind::ALL {
        let value = match kind {
            LossKind::Nll if gt.dim() == 1 => loss_neg_loglik(gt, model, opts.nll_variant).map(|e| e.value),
            LossKind::Nll => continue,
            LossKind::W2Decorrelated2d | LossKind::W2Sliced if gt.dim() != 2 => continue,
            _ => path_loss(kind, gt, &pred, &opts).map(|e| e.value),
        };
        if let Ok(v) = value {
            losses.insert(kind.name().to_string(), v);
        }
    }
    let caches = (model.drift.cache_len() + model.diffusion.cache_len()) * std::mem::size_of::<f64>();
    let bytes = (gt.data().len() + pred.data().len() + noise.data().len()) * std::mem::size_of::<f64>() + caches;
    Ok(MetricsReport {
        rel_err_f: relative_err_f(&truth, model, gt)?,
        rel_err_sigma: relative_err_sigma(&truth, model, gt)?,
        losses,
        runtime_seconds: clock.elapsed().as_secs_f64(),
        peak_memory_bytes: bytes as u64,
    })
}
