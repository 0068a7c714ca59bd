use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::report::{run_repeats, summarize, MeanSd, RepeatRecord};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::sde::{InitialCondition, ModelSpec};

/// Hyper-parameter varied across the cells of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Samples,
    Sigma0,
    Delta,
    Width,
    Depth,
    Batch,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::Samples,
        SweepAxis::Sigma0,
        SweepAxis::Delta,
        SweepAxis::Width,
        SweepAxis::Depth,
        SweepAxis::Batch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Samples => "samples",
            SweepAxis::Sigma0 => "sigma0",
            SweepAxis::Delta => "delta",
            SweepAxis::Width => "width",
            SweepAxis::Depth => "depth",
            SweepAxis::Batch => "batch",
        }
    }

    /// Default ladder of values for this axis.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Samples => vec![50.0, 100.0, 200.0, 400.0],
            SweepAxis::Sigma0 => vec![0.25, 0.5, 0.75, 1.0],
            SweepAxis::Delta => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            SweepAxis::Width => vec![16.0, 32.0, 64.0],
            SweepAxis::Depth => vec![1.0, 2.0, 3.0, 4.0],
            SweepAxis::Batch => vec![16.0, 256.0],
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &TrainConfig, value: f64) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::invalid(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepAxis::Samples => {
                let full = cfg.batch_size == cfg.n_samples;
                cfg.n_samples = count()?;
                cfg.batch_size = if full { cfg.n_samples } else { cfg.batch_size.min(cfg.n_samples) };
            }
            SweepAxis::Batch => cfg.batch_size = count()?,
            SweepAxis::Width => {
                cfg.drift_net.width = count()?;
                cfg.diffusion_net.width = count()?;
            }
            SweepAxis::Depth => {
                cfg.drift_net.hidden_layers = count()?;
                cfg.diffusion_net.hidden_layers = count()?;
            }
            SweepAxis::Sigma0 => match &mut cfg.model {
                ModelSpec::Cir { sigma0 } => *sigma0 = value,
                other => return Err(Error::invalid(format!("sigma0 applies to cir, not {}", other.name()))),
            },
            SweepAxis::Delta => {
                let mean = match &cfg.ic {
                    InitialCondition::Point { x0 } => x0.clone(),
                    InitialCondition::Gaussian { mean, .. } => mean.clone(),
                };
                cfg.ic = InitialCondition::Gaussian { mean, stddev: value };
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown sweep axis `{s}`")))
    }
}

/// One `(loss, axis value)` cell: every repeat plus the summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub loss: LossKind,
    pub axis: SweepAxis,
    pub value: f64,
    pub records: Vec<RepeatRecord>,
    pub rel_err_f: Option<MeanSd>,
    pub rel_err_sigma: Option<MeanSd>,
    pub seconds_per_run: f64,
    /// Set when the cell could not be configured at all.
    pub error: Option<String>,
}

impl SweepCell {
    pub fn failed_runs(&self) -> usize {
        self.records.iter().filter(|r| !r.ok()).count()
    }
}

/// Run every `(loss, value)` cell; a failing cell is recorded and the sweep
/// moves on. `on_cell` sees each cell as soon as it finishes.
pub fn run_sweep(
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[f64],
    losses: &[LossKind],
    repeats: usize,
    mut on_cell: impl FnMut(&SweepCell),
) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(values.len() * losses.len());
    for &loss in losses {
        for &value in values {
            let with_loss = TrainConfig { loss, ..base.clone() };
            let cell = match axis.apply(&with_loss, value) {
                Ok(cfg) => {
                    let records = run_repeats(&cfg, repeats);
                    let (f, s) = summarize(&records);
                    let total: f64 = records.iter().map(|r| r.train_seconds).sum();
                    SweepCell {
                        loss,
                        axis,
                        value,
                        seconds_per_run: total / records.len().max(1) as f64,
                        records,
                        rel_err_f: f,
                        rel_err_sigma: s,
                        error: None,
                    }
                }
                Err(e) => SweepCell {
                    loss,
                    axis,
                    value,
                    records: Vec::new(),
                    rel_err_f: None,
                    rel_err_sigma: None,
                    seconds_per_run: 0.0,
                    error: Some(e.to_string()),
                },
            };
            on_cell(&cell);
            cells.push(cell);
        }
    }
    cells
}

pub const SWEEP_CSV_HEADER: &str =
    "loss,axis,value,n_ok,n_failed,rel_err_f_mean,rel_err_f_sd,rel_err_sigma_mean,rel_err_sigma_sd,seconds_per_run,error";

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    let pair = |m: &Option<MeanSd>| match m {
        Some(m) => format!("{},{}", m.mean, m.sd),
        None => "NaN,NaN".to_string(),
    };
    for c in cells {
        let failed = c.failed_runs();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            c.loss,
            c.axis,
            c.value,
            c.records.len() - failed,
            failed,
            pair(&c.rel_err_f),
            pair(&c.rel_err_sigma),
            c.seconds_per_run,
            c.error.as_deref().unwrap_or("").replace(',', ";"),
        )?;
    }
    Ok(())
}
