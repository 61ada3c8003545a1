//! Run an incremental channel-pruning schedule over a weight container.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::Args as ClapArgs;
use edgeplan_core::profile::load_profile;
use edgeplan_core::pruning::{
    gaussian_update_hook, identity_hook, run_schedule, PruneReport, SparsitySchedule,
};
use edgeplan_core::tensor_io::read_tensors;

use super::{to_json_bytes, Ctx};
use crate::support::{self, Meta};

#[derive(ClapArgs)]
pub struct Args {
    /// Weight container (raw little-endian f32 data with a JSON sidecar).
    #[arg(long)]
    weights: PathBuf,

    /// Explicit sparsity schedule, e.g. `0.2,0.4,0.6`.
    #[arg(long, conflicts_with = "ramp")]
    ratios: Option<String>,

    /// Linear ramp `final:steps`, e.g. `0.6:3`.
    #[arg(long)]
    ramp: Option<String>,

    /// Weight update applied between pruning steps.
    #[arg(long, value_parser = ["identity", "gaussian"], default_value = "identity")]
    hook: String,

    /// Noise scale for the gaussian hook.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,

    /// Layer profile used to report post-pruning feature bits (needs --split).
    #[arg(long, requires = "split")]
    profile: Option<PathBuf>,

    /// Split point whose output width the report should carry (needs --profile).
    #[arg(long, requires = "profile")]
    split: Option<usize>,

    /// Report JSON destination.
    #[arg(long)]
    out: PathBuf,
}

fn parse_schedule(args: &Args) -> Result<SparsitySchedule> {
    match (&args.ratios, &args.ramp) {
        (Some(list), None) => Ok(SparsitySchedule::new(support::parse_f64_list(list)?)?),
        (None, Some(spec)) => {
            let Some((final_part, steps_part)) = spec.split_once(':') else {
                bail!("ramp '{spec}' must look like final:steps, e.g. 0.6:3");
            };
            let final_ratio: f64 = final_part
                .parse()
                .with_context(|| format!("ramp final ratio '{final_part}'"))?;
            let steps: usize = steps_part
                .parse()
                .with_context(|| format!("ramp steps '{steps_part}'"))?;
            Ok(SparsitySchedule::linear_ramp(final_ratio, steps)?)
        }
        _ => bail!("exactly one of --ratios or --ramp is required"),
    }
}

pub fn run(ctx: &Ctx, args: Args) -> Result<()> {
    let schedule = parse_schedule(&args)?;
    let weights_path = support::resolve_input(&args.weights)?;
    let mut tensors = read_tensors(&weights_path)?;
    println!(
        "loaded {} tensors | schedule steps: {:?}",
        tensors.len(),
        schedule.ratios()
    );

    let mut report = match args.hook.as_str() {
        "identity" => run_schedule(&mut tensors, &schedule, &mut identity_hook())?,
        "gaussian" => {
            let mut hook = gaussian_update_hook(ctx.seed, args.sigma);
            run_schedule(&mut tensors, &schedule, &mut hook)?
        }
        other => bail!("unknown hook '{other}'"),
    };

    let mut meta = Meta::new("prune", ctx.seed)
        .input("weights", &args.weights, &weights_path)?
        .param("ratios", schedule.ratios().to_vec())
        .param("hook", args.hook.clone())
        .param("sigma", args.sigma);

    if let (Some(profile_arg), Some(split)) = (&args.profile, args.split) {
        let profile_path = support::resolve_input(profile_arg)?;
        let profile = load_profile(&profile_path)?;
        report.attach_split_bits(&profile, split)?;
        meta = meta
            .input("profile", profile_arg, &profile_path)?
            .param("split", split as u64);
        println!(
            "split {split} output after pruning: {} bits",
            report.split_output_bits.unwrap_or(0)
        );
    }

    println!("final pruned ratio: {}", report.final_ratio);
    for layer in &report.layers {
        println!(
            "  {}: kept {}/{} channels | flops factor {}",
            layer.layer_name, layer.kept_channels, layer.total_channels, layer.flops_factor
        );
    }

    support::atomic_write(&args.out, &to_json_bytes(&report)?)?;
    meta.write_next_to(&args.out)?;
    println!("wrote {}", args.out.display());

    if ctx.self_check {
        let body = std::fs::read_to_string(&args.out)
            .with_context(|| format!("re-reading {}", args.out.display()))?;
        let replayed: PruneReport = serde_json::from_str(&body)?;
        ensure!(
            replayed == report,
            "self-check: report does not round-trip through JSON"
        );
        for layer in &replayed.layers {
            ensure!(
                layer.kept_channels <= layer.total_channels,
                "self-check: {} keeps more channels than it has",
                layer.layer_name
            );
        }
        println!("self-check ok: report round-trips");
    }
    Ok(())
}
