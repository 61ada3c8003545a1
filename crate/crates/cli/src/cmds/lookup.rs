//! Precompute and query best plans over rate and device-compute buckets.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::Args as ClapArgs;
use edgeplan_core::planner::{
    build_lookup, load_environment, load_lookup, query_lookup, query_lookup_at,
};

use super::{build_grid, grid_params, load_planner_inputs, print_plan, to_json_bytes, Ctx};
use crate::support::{self, parse_f64_list, Meta};

#[derive(ClapArgs)]
pub struct BuildArgs {
    /// Layer profile JSON.
    #[arg(long)]
    profile: PathBuf,

    /// Environment JSON; channel and device compute are replaced per bucket.
    #[arg(long)]
    env: PathBuf,

    /// Accuracy table JSON.
    #[arg(long)]
    accuracy: PathBuf,

    /// Ascending link-rate bucket floors in bit/s, e.g. `1e4,1e5,1e6`.
    #[arg(long)]
    rate_buckets: String,

    /// Ascending device-compute bucket floors in FLOP/s, e.g. `1e9,24e9`.
    #[arg(long)]
    compute_buckets: String,

    /// Table JSON destination.
    #[arg(long)]
    out: PathBuf,

    /// Split boundaries to try: `all` or a comma list like `0,10,67`.
    #[arg(long, default_value = "all")]
    splits: String,

    /// Pruning sparsities to try, e.g. `0,0.25,0.5`.
    #[arg(long, default_value = "0")]
    sparsities: String,

    /// Codecs to try: comma list of `none` or `DIMxBITS[@ENCODER_FLOPS]`.
    #[arg(long, default_value = "none")]
    codecs: String,
}

pub fn run_build(ctx: &Ctx, args: BuildArgs) -> Result<()> {
    let meta = Meta::new("lookup-build", ctx.seed);
    let (meta, inputs) = load_planner_inputs(meta, &args.profile, &args.env, &args.accuracy)?;
    let grid = build_grid(&inputs.profile, &args.splits, &args.sparsities, &args.codecs)?;
    let rates = parse_f64_list(&args.rate_buckets)?;
    let computes = parse_f64_list(&args.compute_buckets)?;
    let meta = grid_params(meta, &grid)
        .param("rate_buckets", rates.clone())
        .param("compute_buckets", computes.clone());

    let table = build_lookup(&inputs.profile, &inputs.env, &rates, &computes, &grid, &inputs.acc)?;
    println!(
        "solved {} buckets ({} rates x {} compute budgets, {} configurations each)",
        rates.len() * computes.len(),
        rates.len(),
        computes.len(),
        grid.len()
    );

    support::atomic_write(&args.out, &to_json_bytes(&table)?)?;
    meta.write_next_to(&args.out)?;
    println!("wrote {}", args.out.display());

    if ctx.self_check {
        let replayed = load_lookup(&args.out)?;
        ensure!(
            replayed == table,
            "self-check: table does not round-trip through JSON"
        );
        println!("self-check ok: table round-trips and validates");
    }
    Ok(())
}

#[derive(ClapArgs)]
pub struct QueryArgs {
    /// Table JSON built by `lookup-build`.
    #[arg(long)]
    table: PathBuf,

    /// Environment JSON: query at its channel rate and device compute.
    #[arg(long, conflicts_with_all = ["rate", "device_flops"])]
    env: Option<PathBuf>,

    /// Link rate in bit/s (with --device-flops).
    #[arg(long, requires = "device_flops")]
    rate: Option<f64>,

    /// Device compute in FLOP/s (with --rate).
    #[arg(long, requires = "rate")]
    device_flops: Option<f64>,

    /// Also write the selected plan as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_query(ctx: &Ctx, args: QueryArgs) -> Result<()> {
    let table_path = support::resolve_input(&args.table)?;
    let table = load_lookup(&table_path)?;
    let mut meta = Meta::new("lookup-query", ctx.seed).input("table", &args.table, &table_path)?;

    let plan = match (&args.env, args.rate, args.device_flops) {
        (Some(env_arg), None, None) => {
            let env_path = support::resolve_input(env_arg)?;
            let env = load_environment(&env_path)?;
            meta = meta.input("environment", env_arg, &env_path)?;
            query_lookup(&table, &env)?.clone()
        }
        (None, Some(rate), Some(device_flops)) => {
            meta = meta.param("rate", rate).param("device_flops", device_flops);
            query_lookup_at(&table, rate, device_flops)?.clone()
        }
        _ => bail!("provide either --env or both --rate and --device-flops"),
    };

    println!("selected plan:");
    print_plan(&plan);

    if let Some(out) = &args.out {
        support::atomic_write(out, &to_json_bytes(&plan)?)?;
        meta.write_next_to(out)?;
        println!("wrote {}", out.display());

        if ctx.self_check {
            let body = std::fs::read_to_string(out)
                .with_context(|| format!("re-reading {}", out.display()))?;
            let replayed: edgeplan_core::planner::DeploymentPlan = serde_json::from_str(&body)?;
            ensure!(
                replayed == plan,
                "self-check: stored plan does not round-trip through JSON"
            );
            ensure!(
                table.plans.iter().flatten().any(|p| p == &replayed),
                "self-check: stored plan is not a table entry"
            );
            println!("self-check ok: stored plan matches a table entry");
        }
    }
    Ok(())
}
