//! Discrepancies between a ground-truth and a predicted ensemble, each with
//! its pathwise gradient `∂L/∂X̂` for the reverse sweep.

mod kernel;
mod moments;
mod nll;
mod w2;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::{Ensemble, TimeGrid};
use crate::transport::MmdConfig;

pub use kernel::{loss_mmd, mmd_config_for};
pub use moments::{loss_mean2_var, loss_mse};
pub use nll::{loss_neg_loglik, NllEval, NllVariant};
pub use w2::{loss_decorrelated_2d, loss_full_coupled, loss_sliced, loss_time_decoupled};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "w2_coupled")]
    W2Coupled,
    #[serde(rename = "w2_decoupled")]
    W2Decoupled,
    #[serde(rename = "mse")]
    Mse,
    #[serde(rename = "mean2_var")]
    Mean2Var,
    #[serde(rename = "nll")]
    Nll,
    #[serde(rename = "mmd")]
    Mmd,
    #[serde(rename = "w2_decorrelated2d")]
    W2Decorrelated2d,
    #[serde(rename = "w2_sliced")]
    W2Sliced,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::W2Coupled,
        LossKind::W2Decoupled,
        LossKind::Mse,
        LossKind::Mean2Var,
        LossKind::Nll,
        LossKind::Mmd,
        LossKind::W2Decorrelated2d,
        LossKind::W2Sliced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::W2Coupled => "w2_coupled",
            LossKind::W2Decoupled => "w2_decoupled",
            LossKind::Mse => "mse",
            LossKind::Mean2Var => "mean2_var",
            LossKind::Nll => "nll",
            LossKind::Mmd => "mmd",
            LossKind::W2Decorrelated2d => "w2_decorrelated2d",
            LossKind::W2Sliced => "w2_sliced",
        }
    }

    /// Whether the loss compares simulated paths (every loss except the
    /// likelihood, which scores ground-truth increments directly).
    pub fn uses_paths(self) -> bool {
        self != LossKind::Nll
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownLoss(s.to_string()))
    }
}

/// Value and `∂L/∂X̂` in ensemble layout; zero wherever the loss ignores a
/// point.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad_paths: Vec<f64>,
}

/// Knobs shared by the path losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    /// Add `t_N` to the interior sum `t_1..t_{N-1}` of the W2 losses.
    #[serde(default)]
    pub include_terminal: bool,
    #[serde(default = "default_sliced_bins")]
    pub sliced_bins: usize,
    #[serde(default)]
    pub nll_variant: NllVariant,
    /// Kernel ladder; derived from the ground truth when absent.
    #[serde(default)]
    pub mmd: Option<MmdConfig>,
}

fn default_sliced_bins() -> usize {
    8
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            include_terminal: false,
            sliced_bins: default_sliced_bins(),
            nll_variant: NllVariant::default(),
            mmd: None,
        }
    }
}

impl LossOptions {
    pub(crate) fn w2_steps(&self, grid: &TimeGrid) -> Range<usize> {
        if self.include_terminal {
            1..grid.steps() + 1
        } else {
            1..grid.steps()
        }
    }
}

pub(crate) fn check_pair(gt: &Ensemble, pred: &Ensemble, same_count: bool) -> Result<()> {
    gt.grid().check_same(pred.grid())?;
    if gt.dim() != pred.dim() {
        return Err(Error::DimMismatch {
            expected: gt.dim(),
            got: pred.dim(),
        });
    }
    if same_count && gt.n_traj() != pred.n_traj() {
        return Err(Error::SizeMismatch {
            left: gt.n_traj(),
            right: pred.n_traj(),
        });
    }
    Ok(())
}

/// Evaluate any path loss by kind.
pub fn path_loss(kind: LossKind, gt: &Ensemble, pred: &Ensemble, opts: &LossOptions) -> Result<LossEval> {
    match kind {
        LossKind::W2Coupled => loss_full_coupled(gt, pred, opts),
        LossKind::W2Decoupled => loss_time_decoupled(gt, pred, opts),
        LossKind::Mse => loss_mse(gt, pred),
        LossKind::Mean2Var => loss_mean2_var(gt, pred),
        LossKind::Mmd => {
            let cfg = match opts.mmd {
                Some(cfg) => cfg,
                None => mmd_config_for(gt)?,
            };
            loss_mmd(gt, pred, &cfg)
        }
        LossKind::W2Decorrelated2d => loss_decorrelated_2d(gt, pred, opts),
        LossKind::W2Sliced => loss_sliced(gt, pred, opts.sliced_bins, opts),
        LossKind::Nll => Err(Error::invalid(
            "nll scores the networks on ground-truth increments; use loss_neg_loglik",
        )),
    }
}
