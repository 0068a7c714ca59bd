//! Training loop, experiment configuration and run reports.

mod config;
mod report;
mod sweep;
mod train;

pub use config::{derive_seed, NetSpec, NoisePolicy, TrainConfig};
pub use report::{
    repeat_seed, run_once, run_repeats, summarize, write_metrics_csv, MeanSd, RepeatRecord, RunManifest, TrainReport,
    HISTORY_CSV_HEADER, METRICS_CSV_HEADER,
};
pub use train::{evaluate, run_training, train, TrainRun};
pub use sweep::{run_sweep, write_sweep_csv, SweepAxis, SweepCell, SWEEP_CSV_HEADER};
