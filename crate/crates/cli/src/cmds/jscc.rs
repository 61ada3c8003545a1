//! Distortion of quantized features sent uncoded over a binary symmetric
//! channel, versus what the channel's capacity would cost in latency.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args as ClapArgs;
use edgeplan_core::channel::{bsc_capacity, jscc_distortion_sweep};
use edgeplan_core::tensor_io::read_samples;

use super::codec_fit::CodecFitArtifact;
use super::Ctx;
use crate::support::{self, csv_row, parse_f64_list, Meta};

#[derive(ClapArgs)]
pub struct Args {
    /// Fitted codec artifact from `codec-fit`.
    #[arg(long)]
    codec: PathBuf,

    /// Feature sample container to encode and transmit.
    #[arg(long)]
    samples: PathBuf,

    /// Crossover probabilities to probe, e.g. `0,0.05,0.1,0.2`.
    #[arg(long)]
    flip_probs: String,

    /// Channel uses per second, for the latency column.
    #[arg(long, default_value_t = 1e6)]
    symbol_rate: f64,

    /// Sweep CSV destination.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(ctx: &Ctx, args: Args) -> Result<()> {
    let codec_path = support::resolve_input(&args.codec)?;
    let samples_path = support::resolve_input(&args.samples)?;
    let artifact: CodecFitArtifact = serde_json::from_str(
        &std::fs::read_to_string(&codec_path)
            .with_context(|| format!("reading {}", codec_path.display()))?,
    )
    .with_context(|| format!("parsing {}", codec_path.display()))?;
    let samples = read_samples(&samples_path)?;
    let p_values = parse_f64_list(&args.flip_probs)?;

    let mut reduced = Vec::with_capacity(samples.rows() * artifact.reducer.out_dim);
    for r in 0..samples.rows() {
        reduced.extend(artifact.reducer.reduce(samples.row(r))?);
    }
    let total_bits = reduced.len() as f64 * f64::from(artifact.codebook.bits);
    println!(
        "transmitting {} symbols x {} bits over a bsc at {} uses/s",
        reduced.len(),
        artifact.codebook.bits,
        args.symbol_rate
    );

    let sweep = jscc_distortion_sweep(&artifact.codebook, &reduced, &p_values, ctx.seed)?;

    let mut csv = csv_row(&["p", "capacity_bits_per_use", "latency_s", "mse"].map(String::from));
    for &(p, mse) in &sweep {
        let capacity = bsc_capacity(p)?;
        let latency = total_bits / (capacity * args.symbol_rate);
        println!("p {p}: capacity {capacity} bit/use | latency {latency} s | mse {mse}");
        csv.push_str(&csv_row(&[
            p.to_string(),
            capacity.to_string(),
            latency.to_string(),
            mse.to_string(),
        ]));
    }

    support::atomic_write(&args.out, csv.as_bytes())?;
    Meta::new("jscc-sweep", ctx.seed)
        .input("codec", &args.codec, &codec_path)?
        .input("samples", &args.samples, &samples_path)?
        .param("flip_probs", p_values.clone())
        .param("symbol_rate", args.symbol_rate)
        .write_next_to(&args.out)?;
    println!("wrote {}", args.out.display());

    if ctx.self_check {
        let body = std::fs::read_to_string(&args.out)
            .with_context(|| format!("re-reading {}", args.out.display()))?;
        let data_rows = body.lines().count().saturating_sub(1);
        ensure!(
            data_rows == p_values.len(),
            "self-check: {} has {data_rows} data rows, expected {}",
            args.out.display(),
            p_values.len()
        );
        // A noiseless channel must reproduce the plain quantization error.
        for &(p, mse) in &sweep {
            if p == 0.0 {
                let direct = artifact.codebook.distortion(&reduced);
                ensure!(
                    (mse - direct).abs() <= 1e-12 * direct.max(1.0),
                    "self-check: p=0 mse {mse} differs from quantization mse {direct}"
                );
            }
        }
        println!("self-check ok: {data_rows} rows");
    }
    Ok(())
}
