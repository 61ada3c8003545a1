//! Fit a linear reducer and scalar codebook to feature samples.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args as ClapArgs;
use edgeplan_core::codec::{fit_codebook_with_history, fit_reducer, Codebook, LinearReducer};
use edgeplan_core::tensor_io::read_samples;
use serde::{Deserialize, Serialize};

use super::{to_json_bytes, Ctx};
use crate::support::{self, Meta};

/// Fitted feature codec: reduce with `reducer`, then quantize each
/// coordinate with `codebook`. Wire cost is `out_dim * bits` per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecFitArtifact {
    pub reducer: LinearReducer,
    pub codebook: Codebook,
    /// Mean squared reconstruction error of the reducer on its training set.
    pub reducer_mse: f64,
    /// Mean squared quantization error of the codebook on reduced coordinates.
    pub codebook_mse: f64,
    /// Codebook training distortion after each refinement pass.
    pub codebook_mse_history: Vec<f64>,
}

#[derive(ClapArgs)]
pub struct Args {
    /// Feature sample container (raw little-endian f64 rows with a JSON sidecar).
    #[arg(long)]
    samples: PathBuf,

    /// Dimensions kept by the linear reducer.
    #[arg(long)]
    reduced_dim: usize,

    /// Bits per quantized coordinate.
    #[arg(long)]
    bits: u32,

    /// Refinement pass budget for the codebook fit.
    #[arg(long, default_value_t = 200)]
    max_iters: usize,

    /// Stop refining when distortion improves by less than this fraction.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,

    /// Artifact JSON destination.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(ctx: &Ctx, args: Args) -> Result<()> {
    let samples_path = support::resolve_input(&args.samples)?;
    let samples = read_samples(&samples_path)?;
    println!("samples: {} rows x {} cols", samples.rows(), samples.cols());

    let reducer = fit_reducer(&samples, args.reduced_dim)?;
    let reducer_mse = reducer.reconstruction_mse(&samples)?;

    let mut reduced = Vec::with_capacity(samples.rows() * args.reduced_dim);
    for r in 0..samples.rows() {
        reduced.extend(reducer.reduce(samples.row(r))?);
    }
    let (codebook, history) =
        fit_codebook_with_history(&reduced, args.bits, args.max_iters, args.tol)?;
    let codebook_mse = codebook.distortion(&reduced);

    println!(
        "reducer: {} -> {} dims | reconstruction mse {}",
        reducer.in_dim, reducer.out_dim, reducer_mse
    );
    println!(
        "codebook: {} bits, {} levels{} | quantization mse {} after {} passes",
        codebook.bits,
        codebook.levels.len(),
        if codebook.degenerate { " (degenerate)" } else { "" },
        codebook_mse,
        history.len()
    );

    let artifact = CodecFitArtifact {
        reducer,
        codebook,
        reducer_mse,
        codebook_mse,
        codebook_mse_history: history,
    };
    support::atomic_write(&args.out, &to_json_bytes(&artifact)?)?;
    Meta::new("codec-fit", ctx.seed)
        .input("samples", &args.samples, &samples_path)?
        .param("reduced_dim", args.reduced_dim as u64)
        .param("bits", args.bits)
        .param("max_iters", args.max_iters as u64)
        .param("tol", args.tol)
        .write_next_to(&args.out)?;
    println!("wrote {}", args.out.display());

    if ctx.self_check {
        let body = std::fs::read_to_string(&args.out)
            .with_context(|| format!("re-reading {}", args.out.display()))?;
        let replayed: CodecFitArtifact = serde_json::from_str(&body)?;
        replayed.reducer.validate()?;
        replayed.codebook.validate()?;
        ensure!(
            replayed
                .codebook_mse_history
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-12),
            "self-check: codebook distortion history is not non-increasing"
        );
        println!("self-check ok: artifact validates");
    }
    Ok(())
}
