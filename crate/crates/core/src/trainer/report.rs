use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, stream, TrainConfig};
use super::train::{evaluate, run_training};
use crate::error::Result;

/// Per-epoch record of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    /// Index of the first epoch in `loss`; nonzero after a resume.
    pub start_epoch: usize,
    /// Training loss at the parameters each epoch started from.
    pub loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Tracked loss name to per-epoch values (`NaN` where undefined).
    pub tracked: BTreeMap<String, Vec<f64>>,
    pub diverged_at: Option<usize>,
    pub non_finite_tracked: u64,
    /// Clamped ground-truth model evaluations, when the caller simulated it.
    pub clamped_evaluations: u64,
    pub mmd_base: Option<f64>,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,loss,seconds";

impl TrainReport {
    pub(crate) fn new(cfg: &TrainConfig, start_epoch: usize) -> Self {
        Self {
            config_hash: cfg.config_hash(),
            start_epoch,
            ..Self::default()
        }
    }

    pub fn epochs_completed(&self) -> usize {
        self.start_epoch + self.loss.len()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss.last().copied()
    }

    /// `epoch,loss,seconds` followed by one column per tracked loss.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "{HISTORY_CSV_HEADER}")?;
        for name in self.tracked.keys() {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (k, (loss, secs)) in self.loss.iter().zip(&self.epoch_seconds).enumerate() {
            write!(w, "{},{loss},{secs}", self.start_epoch + k)?;
            for column in self.tracked.values() {
                write!(w, ",{}", column[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// JSON sidecar describing how a run was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub version: String,
    pub mmd_base: Option<f64>,
    pub epochs_completed: usize,
    pub diverged_at: Option<usize>,
}

impl RunManifest {
    pub fn new(cfg: &TrainConfig, report: &TrainReport) -> Self {
        let seeds = BTreeMap::from([
            ("ground_truth".to_string(), cfg.ground_truth_seed()),
            ("init".to_string(), derive_seed(cfg.seed, stream::INIT, 0)),
            ("noise_epoch0".to_string(), derive_seed(cfg.seed, stream::NOISE, 0)),
            ("eval".to_string(), derive_seed(cfg.seed, stream::EVAL, 0)),
        ]);
        Self {
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            mmd_base: report.mmd_base,
            epochs_completed: report.epochs_completed(),
            diverged_at: report.diverged_at,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Sample mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, n: xs.len() })
    }
}

impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} (± {:.3})", self.mean, self.sd)
    }
}

/// Outcome of one repeat; failed repeats keep their message and NaN metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub status: String,
    pub rel_err_f: f64,
    pub rel_err_sigma: f64,
    pub final_loss: f64,
    pub train_seconds: f64,
}

impl RepeatRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const METRICS_CSV_HEADER: &str = "repeat,seed,status,rel_err_f,rel_err_sigma,final_loss,train_seconds";

/// Seed of repeat `r`: the base seed shifted by `r`.
pub fn repeat_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

/// Fresh ground truth, training and evaluation for one seed.
pub fn run_once(cfg: &TrainConfig) -> Result<RepeatRecord> {
    let gt = cfg.ground_truth()?;
    let run = run_training(cfg, &gt, None)?;
    let secs = run.report.epoch_seconds.iter().sum();
    let final_loss = run.report.final_loss().unwrap_or(f64::NAN);
    if let Some(epoch) = run.report.diverged_at {
        return Ok(RepeatRecord {
            repeat: 0,
            seed: cfg.seed,
            status: format!("diverged at epoch {epoch}"),
            rel_err_f: f64::NAN,
            rel_err_sigma: f64::NAN,
            final_loss,
            train_seconds: secs,
        });
    }
    let m = evaluate(cfg, &run.checkpoint, &gt)?;
    Ok(RepeatRecord {
        repeat: 0,
        seed: cfg.seed,
        status: "ok".into(),
        rel_err_f: m.rel_err_f,
        rel_err_sigma: m.rel_err_sigma,
        final_loss,
        train_seconds: secs,
    })
}

/// `repeats` independent runs with seeds `seed, seed+1, …`; errors become
/// failed records instead of aborting the batch.
pub fn run_repeats(cfg: &TrainConfig, repeats: usize) -> Vec<RepeatRecord> {
    (0..repeats)
        .map(|r| {
            let c = TrainConfig {
                seed: repeat_seed(cfg.seed, r),
                ..cfg.clone()
            };
            let mut rec = run_once(&c).unwrap_or_else(|e| RepeatRecord {
                repeat: 0,
                seed: c.seed,
                status: format!("error: {e}"),
                rel_err_f: f64::NAN,
                rel_err_sigma: f64::NAN,
                final_loss: f64::NAN,
                train_seconds: 0.0,
            });
            rec.repeat = r;
            rec
        })
        .collect()
}

/// Mean ± sd of both errors over the successful repeats.
pub fn summarize(records: &[RepeatRecord]) -> (Option<MeanSd>, Option<MeanSd>) {
    let ok: Vec<_> = records.iter().filter(|r| r.ok()).collect();
    let f: Vec<f64> = ok.iter().map(|r| r.rel_err_f).collect();
    let s: Vec<f64> = ok.iter().map(|r| r.rel_err_sigma).collect();
    (MeanSd::of(&f), MeanSd::of(&s))
}

pub fn write_metrics_csv<W: Write>(records: &[RepeatRecord], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.repeat,
            r.seed,
            r.status.replace(',', ";"),
            r.rel_err_f,
            r.rel_err_sigma,
            r.final_loss,
            r.train_seconds
        )?;
    }
    Ok(())
}
