//! Search the configuration grid for the fastest feasible deployment.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args as ClapArgs;
use edgeplan_core::planner::{pareto_frontier, search, tradeoff_points, DeploymentPlan};

use super::{build_grid, grid_params, load_planner_inputs, print_plan, to_json_bytes, Ctx};
use crate::support::{self, csv_row, Meta};

#[derive(ClapArgs)]
pub struct Args {
    /// Layer profile JSON.
    #[arg(long)]
    profile: PathBuf,

    /// Environment JSON (device, server, memory, channel).
    #[arg(long)]
    env: PathBuf,

    /// Accuracy table JSON.
    #[arg(long)]
    accuracy: PathBuf,

    /// Split boundaries to try: `all` or a comma list like `0,10,67`.
    #[arg(long, default_value = "all")]
    splits: String,

    /// Pruning sparsities to try, e.g. `0,0.25,0.5`.
    #[arg(long, default_value = "0")]
    sparsities: String,

    /// Codecs to try: comma list of `none` or `DIMxBITS[@ENCODER_FLOPS]`.
    #[arg(long, default_value = "none")]
    codecs: String,

    /// Best plan JSON destination.
    #[arg(long)]
    out: PathBuf,

    /// Also write every evaluated plan, in grid order.
    #[arg(long)]
    plans_out: Option<PathBuf>,

    /// Also write the compute/bits Pareto frontier of feasible plans as CSV.
    #[arg(long)]
    frontier_out: Option<PathBuf>,
}

fn frontier_csv(plans: &[DeploymentPlan]) -> String {
    let mut csv = csv_row(&["on_device_flops", "comm_bits", "plan_index"].map(String::from));
    for point in pareto_frontier(&tradeoff_points(plans)) {
        csv.push_str(&csv_row(&[
            point.on_device_flops.to_string(),
            point.comm_bits.to_string(),
            point.plan_index.to_string(),
        ]));
    }
    csv
}

pub fn run(ctx: &Ctx, args: Args) -> Result<()> {
    let meta = Meta::new("plan", ctx.seed);
    let (meta, inputs) = load_planner_inputs(meta, &args.profile, &args.env, &args.accuracy)?;
    let grid = build_grid(&inputs.profile, &args.splits, &args.sparsities, &args.codecs)?;
    let meta = grid_params(meta, &grid);

    let outcome = search(&inputs.profile, &inputs.env, &grid, &inputs.acc)?;
    let feasible = outcome.plans.iter().filter(|p| p.feasible).count();
    println!(
        "evaluated {} configurations | {} feasible",
        outcome.plans.len(),
        feasible
    );
    println!("best plan:");
    print_plan(&outcome.best);

    support::atomic_write(&args.out, &to_json_bytes(&outcome.best)?)?;
    meta.write_next_to(&args.out)?;
    println!("wrote {}", args.out.display());

    if let Some(plans_out) = &args.plans_out {
        support::atomic_write(plans_out, &to_json_bytes(&outcome.plans)?)?;
        println!("wrote {}", plans_out.display());
    }
    if let Some(frontier_out) = &args.frontier_out {
        let csv = frontier_csv(&outcome.plans);
        support::atomic_write(frontier_out, csv.as_bytes())?;
        println!("wrote {}", frontier_out.display());
    }

    if ctx.self_check {
        let body = std::fs::read_to_string(&args.out)
            .with_context(|| format!("re-reading {}", args.out.display()))?;
        let replayed: DeploymentPlan = serde_json::from_str(&body)?;
        ensure!(
            replayed == outcome.best,
            "self-check: best plan does not round-trip through JSON"
        );
        ensure!(
            replayed.feasible,
            "self-check: stored best plan is not feasible"
        );
        let lower_bound = outcome
            .plans
            .iter()
            .filter(|p| p.feasible)
            .map(|p| p.total_latency_s)
            .fold(f64::INFINITY, f64::min);
        ensure!(
            replayed.total_latency_s == lower_bound,
            "self-check: a feasible plan beats the stored best"
        );
        println!("self-check ok: stored plan is the feasible latency minimum");
    }
    Ok(())
}
