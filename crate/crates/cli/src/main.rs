use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use egostream_cli::{
    cmd_curve, cmd_inspect, cmd_run, cmd_sweep, cmd_synth, parse_fractions, parse_grid, Overrides,
    RunConfig,
};
use egostream_core::bench::{bench_pipeline, BenchConfig, BenchStrategy};

#[derive(Parser)]
#[command(
    name = "egostream",
    version,
    about = "Online action recognition over per-frame feature streams"
)]
struct Cli {
    /// Worker threads for per-video parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Single,
    A2,
    Sbl,
}

impl From<StrategyArg> for BenchStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Single => BenchStrategy::Single,
            StrategyArg::A2 => BenchStrategy::A2,
            StrategyArg::Sbl => BenchStrategy::Sbl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic suite of streams and annotations.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one protocol over the datasets in a run config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the detector threshold.
        #[arg(long)]
        tau: Option<f64>,
        /// Override the static reset period.
        #[arg(long)]
        k: Option<u64>,
        /// Override the two-fold hand-off delay.
        #[arg(long)]
        delta: Option<u64>,
    },
    /// Run an online protocol for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `tau=...`, `k=...` or `delta=...` with comma-separated values.
        #[arg(long)]
        grid: String,
    },
    /// Streaming accuracy against the observed fraction of each segment.
    Curve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        fractions: String,
    },
    /// Measure pipeline throughput on synthetic frames.
    Bench {
        #[arg(long, default_value_t = 1024)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 100_000)]
        frames: u64,
        #[arg(long, value_enum, default_value_t = StrategyArg::A2)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 1_000)]
        warmup: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a stream file and check it against sibling files.
    Inspect { stream: PathBuf },
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    let body = if json {
        serde_json::to_string_pretty(value)? + "\n"
    } else {
        text()
    };
    match std::io::stdout().lock().write_all(body.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let json = cli.json;
    match cli.command {
        Command::Synth { config, out } => {
            let paths = cmd_synth(&config, &out)?;
            emit(json, &paths, || {
                paths.iter().map(|p| format!("{}\n", p.display())).collect()
            })?;
        }
        Command::Run {
            config,
            tau,
            k,
            delta,
        } => {
            let cfg = RunConfig::load(&config)?;
            let out = cmd_run(&cfg, &Overrides { tau, k, delta })?;
            emit(json, &out, || out.report.to_text())?;
        }
        Command::Sweep { config, grid } => {
            let cfg = RunConfig::load(&config)?;
            let rows = cmd_sweep(&cfg, &parse_grid(&grid)?)?;
            emit(json, &rows, || egostream_core::protocols::sweep_csv(&rows))?;
        }
        Command::Curve { config, fractions } => {
            let cfg = RunConfig::load(&config)?;
            let points = cmd_curve(&cfg, &parse_fractions(&fractions)?)?;
            emit(json, &points, || {
                egostream_core::protocols::curve_csv(&points)
            })?;
        }
        Command::Bench {
            dim,
            classes,
            frames,
            strategy,
            warmup,
            seed,
        } => {
            let mut cfg = BenchConfig::new(strategy.into(), dim, classes, frames);
            cfg.warmup_frames = warmup;
            cfg.seed = seed;
            let r = bench_pipeline(&cfg)?;
            emit(json, &r, || {
                format!(
                    "strategy {:?}  D={} C={}\n{} frames in {:.3} s: {:.0} fps ({:.0}x real time)\nlatency p50 {:.2} us, p99 {:.2} us; {} boundary events\n",
                    r.strategy,
                    r.feature_dim,
                    r.num_classes,
                    r.frames_processed,
                    r.wall_time_s,
                    r.throughput_fps,
                    r.realtime_factor,
                    r.latency_p50_us,
                    r.latency_p99_us,
                    r.boundary_events
                )
            })?;
        }
        Command::Inspect { stream } => {
            let summary = cmd_inspect(&stream)?;
            emit(json, &summary, || summary.to_text())?;
            return Ok(summary.diagnostics.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
