//! Per-split cost table of a layer profile.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args as ClapArgs;
use edgeplan_core::profile::load_profile;

use super::Ctx;
use crate::support::{self, csv_row, Meta};

#[derive(ClapArgs)]
pub struct Args {
    /// Layer profile JSON.
    #[arg(long)]
    profile: PathBuf,

    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: Args) -> Result<()> {
    let resolved = support::resolve_input(&args.profile)?;
    let profile = load_profile(&resolved)?;
    let splits = profile.split_points();
    let input_bits = profile.feature_bits(0)? as f64;

    println!("model: {}", profile.name);
    println!("layers: {} | split points: {}", profile.len(), splits.len());
    println!(
        "total flops: {} | total params: {}",
        profile.on_device_flops(profile.len())?,
        profile.on_device_params(profile.len())?
    );

    let header = ["split", "on_device_flops", "feature_bits", "amplification_ratio"];
    let mut csv = csv_row(&header.map(String::from));
    println!("{:>6} {:>16} {:>14} {:>14}", header[0], header[1], header[2], header[3]);
    for &split in &splits {
        let flops = profile.on_device_flops(split)?;
        let bits = profile.feature_bits(split)?;
        let ratio = bits as f64 / input_bits;
        println!("{split:>6} {flops:>16} {bits:>14} {ratio:>14}");
        csv.push_str(&csv_row(&[
            split.to_string(),
            flops.to_string(),
            bits.to_string(),
            ratio.to_string(),
        ]));
    }

    if let Some(out) = &args.out {
        support::atomic_write(out, csv.as_bytes())?;
        Meta::new("inspect", ctx.seed)
            .input("profile", &args.profile, &resolved)?
            .write_next_to(out)?;
        println!("wrote {}", out.display());

        if ctx.self_check {
            let body = std::fs::read_to_string(out)
                .with_context(|| format!("re-reading {}", out.display()))?;
            let rows = body.lines().count();
            ensure!(
                rows == splits.len() + 1,
                "self-check: {} has {rows} rows, expected {}",
                out.display(),
                splits.len() + 1
            );
            println!("self-check ok: {rows} rows");
        }
    }
    Ok(())
}
