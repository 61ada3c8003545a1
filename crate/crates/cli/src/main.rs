//! `edgeplan`: plan and simulate device-edge co-inference deployments.
//!
//! Subcommands inspect layer profiles, run pruning schedules, fit feature
//! codecs, evaluate channels, search deployment plans, sweep link rates,
//! simulate joint source-channel coding, and build/query plan lookup
//! tables. All outputs are written atomically with a reproducibility
//! sidecar; identical inputs and seed give byte-identical artifacts.

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod cmds;
mod support;

#[derive(Parser)]
#[command(name = "edgeplan", version, about = "Device-edge co-inference planner")]
struct Cli {
    /// Seed recorded in outputs and used by every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Cap worker threads (default: all cores). Never changes output bytes.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// After writing outputs, re-read them and re-validate their invariants.
    #[arg(long, global = true)]
    self_check: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-split compute, feature size, and amplification of a profile.
    Inspect(cmds::inspect::Args),
    /// Run an incremental pruning schedule over a weight container.
    Prune(cmds::prune::Args),
    /// Fit a linear reducer and scalar codebook to feature samples.
    CodecFit(cmds::codec_fit::Args),
    /// Capacity and transmit latency of a channel, for a one-off payload.
    Channel(cmds::channel::Args),
    /// Search the configuration grid for the fastest feasible deployment.
    Plan(cmds::plan::Args),
    /// Re-plan across a range of link rates and emit the latency curve.
    Sweep(cmds::sweep::Args),
    /// Distortion of quantized features sent uncoded over a noisy channel.
    JsccSweep(cmds::jscc::Args),
    /// Precompute best plans over rate and device-compute buckets.
    LookupBuild(cmds::lookup::BuildArgs),
    /// Query a prebuilt lookup table for an environment.
    LookupQuery(cmds::lookup::QueryArgs),
}

fn run(cli: Cli) -> Result<()> {
    let ctx = cmds::Ctx {
        seed: cli.seed,
        self_check: cli.self_check,
    };
    match cli.command {
        Command::Inspect(args) => cmds::inspect::run(&ctx, args),
        Command::Prune(args) => cmds::prune::run(&ctx, args),
        Command::CodecFit(args) => cmds::codec_fit::run(&ctx, args),
        Command::Channel(args) => cmds::channel::run(&ctx, args),
        Command::Plan(args) => cmds::plan::run(&ctx, args),
        Command::Sweep(args) => cmds::sweep::run(&ctx, args),
        Command::JsccSweep(args) => cmds::jscc::run(&ctx, args),
        Command::LookupBuild(args) => cmds::lookup::run_build(&ctx, args),
        Command::LookupQuery(args) => cmds::lookup::run_query(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: building thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
