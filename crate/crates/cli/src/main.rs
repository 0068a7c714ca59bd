use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use w2sde::losses::LossKind;
use w2sde::metrics::{write_projection_csv, MetricsReport};
use w2sde::nn::Checkpoint;
use w2sde::sde::{Ensemble, InitialCondition, ModelSpec};
use w2sde::trainer::{
    evaluate, run_repeats, run_sweep, run_training, summarize, write_metrics_csv, write_sweep_csv, RunManifest,
    SweepAxis, TrainConfig,
};
use w2sde::transport::w2sq_1d;
use w2sde::verify::{run_verify, VerifyImpls};
use w2sde::Error;

#[derive(Parser)]
#[command(name = "w2sde", version, about = "Reconstruct SDEs from trajectory ensembles with Wasserstein losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ground-truth ensemble of a configuration.
    Simulate(RunArgs),
    /// Train drift and diffusion nets.
    Train(TrainArgs),
    /// Re-evaluate a finished training run.
    Evaluate {
        /// Directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one hyper-parameter over a list of losses.
    Bench(BenchArgs),
    /// Run the oracle and property suite.
    Verify(VerifyArgs),
    /// Print the resolved configuration as TOML.
    Config(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Built-in example 1-4.
    #[arg(long, conflicts_with = "config")]
    example: Option<u32>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    /// Standard deviation of a Gaussian initial condition around x0.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// Extra losses recorded every epoch, comma separated.
    #[arg(long, value_delimiter = ',')]
    track: Option<Vec<LossKind>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    axis: SweepAxis,
    /// Axis values; the axis default ladder when omitted.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Losses to compare; the configured loss when omitted.
    #[arg(long, value_delimiter = ',')]
    losses: Option<Vec<LossKind>>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Plant a known bug to confirm the suite catches it.
    #[arg(long, hide = true, value_parser = ["w2sq-sign"])]
    inject_fault: Option<String>,
}

enum Failure {
    Config(String),
    Diverged(String),
    Verify(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::UnknownModel(_) | Error::UnknownLoss(_) | Error::Format(_) => {
                Failure::Config(e.to_string())
            }
            Error::Diverged { .. } | Error::NonFinite { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn resolve(args: &RunArgs) -> CliResult<TrainConfig> {
    let mut cfg = match (&args.config, args.example) {
        (Some(path), _) => TrainConfig::load(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        (None, Some(id)) => TrainConfig::example(id)?,
        (None, None) => return Err(Failure::Config("pass --example or --config".into())),
    };
    if let Some(loss) = args.loss {
        cfg.loss = loss;
    }
    if let Some(m) = args.samples {
        let full = cfg.batch_size == cfg.n_samples;
        cfg.n_samples = m;
        if full || cfg.batch_size > m {
            cfg.batch_size = m;
        }
    }
    if let Some(b) = args.batch {
        cfg.batch_size = b;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    if let Some(v) = args.sigma0 {
        match &mut cfg.model {
            ModelSpec::Cir { sigma0 } => *sigma0 = v,
            other => return Err(Failure::Config(format!("--sigma0 applies to cir, not {}", other.name()))),
        }
    }
    if let Some(delta) = args.delta {
        let mean = match &cfg.ic {
            InitialCondition::Point { x0 } => x0.clone(),
            InitialCondition::Gaussian { mean, .. } => mean.clone(),
        };
        cfg.ic = InitialCondition::Gaussian { mean, stddev: delta };
    }
    if let Some(w) = args.width {
        cfg.drift_net.width = w;
        cfg.diffusion_net.width = w;
    }
    if let Some(d) = args.depth {
        cfg.drift_net.hidden_layers = d;
        cfg.diffusion_net.hidden_layers = d;
    }
    if let Some(track) = &args.track {
        cfg.track = track.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_moments_csv<W: Write>(ens: &Ensemble, mut w: W) -> io::Result<()> {
    write!(w, "t")?;
    for k in 1..=ens.dim() {
        write!(w, ",mean_{k},var_{k}")?;
    }
    writeln!(w)?;
    for (t, mean, var) in ens.moments() {
        write!(w, "{t}")?;
        for (m, v) in mean.iter().zip(&var) {
            write!(w, ",{m},{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn simulate(args: &RunArgs) -> CliResult {
    let cfg = resolve(args)?;
    let (ens, clamps) = cfg.simulate_ground_truth()?;
    ens.write_binary(create(&args.out, "ensemble.bin")?)?;
    ens.write_csv(create(&args.out, "ensemble.csv")?)?;
    write_moments_csv(&ens, create(&args.out, "moments.csv")?)?;
    let moments = ens.moments();
    let (t, mean, var) = moments.last().expect("grid has points");
    println!(
        "{} paths of {} over {} steps, seed {}",
        ens.n_traj(),
        cfg.model.name(),
        ens.grid().steps(),
        ens.seed()
    );
    println!("t = {t}: mean {mean:?}, var {var:?}");
    if clamps > 0 {
        println!("{clamps} clamped model evaluations");
    }
    Ok(())
}

fn print_metrics(m: &MetricsReport) {
    println!("relative error f: {:.4}", m.rel_err_f);
    println!("relative error sigma: {:.4}", m.rel_err_sigma);
    for (name, v) in &m.losses {
        println!("  {name}: {v:.6}");
    }
}

fn train(args: &TrainArgs) -> CliResult {
    let cfg = resolve(&args.run)?;
    let out = &args.run.out;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    if args.repeats == 0 {
        return Err(Failure::Config("--repeats must be at least 1".into()));
    }
    if args.repeats > 1 {
        let records = run_repeats(&cfg, args.repeats);
        write_metrics_csv(&records, create(out, "metrics.csv")?)?;
        for r in &records {
            println!("repeat {} seed {}: {} f {:.4} sigma {:.4}", r.repeat, r.seed, r.status, r.rel_err_f, r.rel_err_sigma);
        }
        let (f, s) = summarize(&records);
        if let (Some(f), Some(s)) = (f, s) {
            println!("f error {f}, sigma error {s} over {} runs", f.n);
        }
        let diverged: Vec<_> = records.iter().filter(|r| r.status.starts_with("diverged")).collect();
        if !diverged.is_empty() {
            return Err(Failure::Diverged(format!("{} of {} repeats diverged", diverged.len(), records.len())));
        }
        if records.iter().all(|r| !r.ok()) {
            return Err(Failure::Other(records[0].status.clone()));
        }
        return Ok(());
    }
    let (gt, clamps) = cfg.simulate_ground_truth()?;
    let mut run = run_training(&cfg, &gt, None)?;
    run.report.clamped_evaluations = clamps;
    run.checkpoint.write_binary(create(out, "checkpoint.bin")?)?;
    run.report.write_csv(create(out, "history.csv")?)?;
    fs::write(out.join("manifest.json"), RunManifest::new(&cfg, &run.report).to_json())?;
    if let Some(epoch) = run.report.diverged_at {
        return Err(Failure::Diverged(format!("training diverged at epoch {epoch}")));
    }
    let m = evaluate(&cfg, &run.checkpoint, &gt)?;
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&m).expect("metrics serialize"))?;
    println!(
        "{} epochs of {}, final loss {:.6}",
        run.report.epochs_completed(),
        cfg.loss,
        run.report.final_loss().unwrap_or(f64::NAN)
    );
    print_metrics(&m);
    Ok(())
}

fn evaluate_run(run: &Path, out: Option<&Path>) -> CliResult {
    let cfg = TrainConfig::load(&run.join("config.toml"))?;
    let ckpt = Checkpoint::read_binary(File::open(run.join("checkpoint.bin"))?)?;
    let gt = cfg.ground_truth()?;
    let m = evaluate(&cfg, &ckpt, &gt)?;
    let out = out.unwrap_or(run);
    fs::create_dir_all(out)?;
    fs::write(out.join("evaluation.json"), serde_json::to_string_pretty(&m).expect("metrics serialize"))?;
    print_metrics(&m);
    Ok(())
}

fn bench(args: &BenchArgs) -> CliResult {
    let cfg = resolve(&args.run)?;
    let values = args.values.clone().unwrap_or_else(|| args.axis.default_values());
    let losses = args.losses.clone().unwrap_or_else(|| vec![cfg.loss]);
    let cells = run_sweep(&cfg, args.axis, &values, &losses, args.repeats, |c| {
        match (&c.error, c.rel_err_f, c.rel_err_sigma) {
            (Some(e), ..) => println!("{} {}={}: skipped ({e})", c.loss, c.axis, c.value),
            (None, Some(f), Some(s)) => println!(
                "{} {}={}: f {f}, sigma {s}, {:.1} s/run, {} failed",
                c.loss,
                c.axis,
                c.value,
                c.seconds_per_run,
                c.failed_runs()
            ),
            _ => println!("{} {}={}: every run failed", c.loss, c.axis, c.value),
        }
    });
    write_sweep_csv(&cells, create(&args.run.out, "sweep.csv")?)?;
    Ok(())
}

fn verify(args: &VerifyArgs) -> CliResult {
    let mut impls = VerifyImpls::default();
    if args.inject_fault.is_some() {
        impls.w2sq_1d = |a, b| Ok(-w2sq_1d(a, b)?);
    }
    let report = run_verify(&impls, args.seed, 1);
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    write_projection_csv(&report.projection, create(&args.out, "projection_band.csv")?)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("failed: {}", report.failures().join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Evaluate { run, out } => evaluate_run(run, out.as_deref()),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
        Command::Config(a) => resolve(a).and_then(|c| {
            print!("{}", c.to_toml_string()?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(m) => (2, m),
                Failure::Diverged(m) => (3, m),
                Failure::Verify(m) => (4, m),
                Failure::Other(m) => (1, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
