//! Re-plan across a range of link rates and emit the latency curve.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args as ClapArgs;
use edgeplan_core::planner::{rate_sweep, SweepRow};

use super::{build_grid, grid_params, load_planner_inputs, Ctx};
use crate::support::{self, csv_row, parse_range, Meta};

#[derive(ClapArgs)]
pub struct Args {
    /// Layer profile JSON.
    #[arg(long)]
    profile: PathBuf,

    /// Environment JSON; its channel is replaced by each swept rate.
    #[arg(long)]
    env: PathBuf,

    /// Accuracy table JSON.
    #[arg(long)]
    accuracy: PathBuf,

    /// Link rates in bit/s as `start:stop:{lin|log}:count`.
    #[arg(long)]
    rates: String,

    /// Split boundaries to try: `all` or a comma list like `0,10,67`.
    #[arg(long, default_value = "all")]
    splits: String,

    /// Pruning sparsities to try, e.g. `0,0.25,0.5`.
    #[arg(long, default_value = "0")]
    sparsities: String,

    /// Codecs to try: comma list of `none` or `DIMxBITS[@ENCODER_FLOPS]`.
    #[arg(long, default_value = "none")]
    codecs: String,

    /// Sweep CSV destination.
    #[arg(long)]
    out: PathBuf,
}

/// CSV rendering shared with the lookup commands: codec cells are empty for
/// uncoded plans.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut csv = csv_row(
        &[
            "rate_bps",
            "total_latency_s",
            "split",
            "sparsity",
            "reduced_dim",
            "quant_bits",
            "comm_bits",
        ]
        .map(String::from),
    );
    for row in rows {
        csv.push_str(&csv_row(&[
            row.rate_bps.to_string(),
            row.total_latency_s.to_string(),
            row.split.to_string(),
            row.sparsity.to_string(),
            row.reduced_dim.map(|d| d.to_string()).unwrap_or_default(),
            row.quant_bits.map(|b| b.to_string()).unwrap_or_default(),
            row.comm_bits.to_string(),
        ]));
    }
    csv
}

pub fn run(ctx: &Ctx, args: Args) -> Result<()> {
    let meta = Meta::new("sweep", ctx.seed);
    let (meta, inputs) = load_planner_inputs(meta, &args.profile, &args.env, &args.accuracy)?;
    let grid = build_grid(&inputs.profile, &args.splits, &args.sparsities, &args.codecs)?;
    let meta = grid_params(meta, &grid).param("rates", args.rates.clone());

    let rates = parse_range(&args.rates)?;
    let rows = rate_sweep(&inputs.profile, &inputs.env, &rates, &grid, &inputs.acc)?;

    let first = rows.first().expect("rate_sweep rejects empty rates");
    let last = rows.last().expect("rate_sweep rejects empty rates");
    println!(
        "swept {} rates from {} to {} bit/s",
        rows.len(),
        first.rate_bps,
        last.rate_bps
    );
    println!(
        "latency {} s (split {}) -> {} s (split {})",
        first.total_latency_s, first.split, last.total_latency_s, last.split
    );

    support::atomic_write(&args.out, sweep_csv(&rows).as_bytes())?;
    meta.write_next_to(&args.out)?;
    println!("wrote {}", args.out.display());

    if ctx.self_check {
        let body = std::fs::read_to_string(&args.out)
            .with_context(|| format!("re-reading {}", args.out.display()))?;
        let data_rows = body.lines().count().saturating_sub(1);
        ensure!(
            data_rows == rates.len(),
            "self-check: {} has {data_rows} data rows, expected {}",
            args.out.display(),
            rates.len()
        );
        let ascending = rates.windows(2).all(|w| w[1] >= w[0]);
        if ascending {
            ensure!(
                rows.windows(2)
                    .all(|w| w[1].total_latency_s <= w[0].total_latency_s + 1e-15),
                "self-check: latency increased while the rate rose"
            );
        }
        println!("self-check ok: {data_rows} rows, latency curve consistent");
    }
    Ok(())
}
