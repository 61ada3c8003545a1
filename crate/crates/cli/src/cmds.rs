//! Subcommand implementations and the helpers they share.

pub mod channel;
pub mod codec_fit;
pub mod inspect;
pub mod jscc;
pub mod lookup;
pub mod plan;
pub mod prune;
pub mod sweep;

use std::path::Path;

use anyhow::Result;
use edgeplan_core::codec::CodecConfig;
use edgeplan_core::planner::{
    load_accuracy_model, load_environment, AccuracyModel, ConfigGrid, DeploymentPlan,
    EnvironmentProfile,
};
use edgeplan_core::profile::{load_profile, ModelProfile};
use serde_json::Value;

use crate::support::{self, Meta};

/// Global options shared by every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub self_check: bool,
}

/// The three planner inputs, loaded and validated.
pub struct PlannerInputs {
    pub profile: ModelProfile,
    pub env: EnvironmentProfile,
    pub acc: AccuracyModel,
}

/// Resolve, hash, and load profile + environment + accuracy table.
pub fn load_planner_inputs(
    meta: Meta,
    profile: &Path,
    env: &Path,
    accuracy: &Path,
) -> Result<(Meta, PlannerInputs)> {
    let profile_path = support::resolve_input(profile)?;
    let env_path = support::resolve_input(env)?;
    let acc_path = support::resolve_input(accuracy)?;
    let meta = meta
        .input("profile", profile, &profile_path)?
        .input("environment", env, &env_path)?
        .input("accuracy", accuracy, &acc_path)?;
    let inputs = PlannerInputs {
        profile: load_profile(&profile_path)?,
        env: load_environment(&env_path)?,
        acc: load_accuracy_model(&acc_path)?,
    };
    Ok((meta, inputs))
}

/// Assemble the candidate grid from CLI axis specs.
///
/// `splits` is either the literal `all` (every split point of the profile)
/// or a comma-separated list of boundary indices.
pub fn build_grid(
    profile: &ModelProfile,
    splits: &str,
    sparsities: &str,
    codecs: &str,
) -> Result<ConfigGrid> {
    let splits = if splits == "all" {
        profile.split_points()
    } else {
        support::parse_usize_list(splits)?
    };
    Ok(ConfigGrid {
        splits,
        sparsities: support::parse_f64_list(sparsities)?,
        codecs: support::parse_codec_list(codecs)?,
    })
}

/// Record the resolved grid axes in the sidecar.
pub fn grid_params(meta: Meta, grid: &ConfigGrid) -> Meta {
    meta.param(
        "splits",
        grid.splits.iter().map(|&s| s as u64).collect::<Vec<_>>(),
    )
    .param("sparsities", grid.sparsities.clone())
    .param(
        "codecs",
        grid.codecs.iter().map(codec_label).collect::<Vec<_>>(),
    )
}

/// Canonical text form of a codec choice: `none` or `DxB@OV`.
pub fn codec_label(codec: &Option<CodecConfig>) -> String {
    match codec {
        None => "none".into(),
        Some(c) => format!(
            "{}x{}@{}",
            c.reduced_dim, c.quant_bits, c.encoder_flops_overhead
        ),
    }
}

/// Print a plan in the shared multi-line summary form.
pub fn print_plan(plan: &DeploymentPlan) {
    println!(
        "  split {} | sparsity {} | codec {}",
        plan.split,
        plan.sparsity,
        codec_label(&plan.codec)
    );
    println!(
        "  latency {} s = device {} + link {} + server {}",
        plan.total_latency_s, plan.device_latency_s, plan.comm_latency_s, plan.server_latency_s
    );
    println!(
        "  comm bits {} | device memory {} bytes | predicted accuracy {}",
        plan.comm_bits, plan.memory_bytes, plan.predicted_accuracy
    );
    if !plan.feasible {
        let reasons: Vec<Value> = plan
            .infeasible_reasons
            .iter()
            .map(|r| serde_json::to_value(r).unwrap_or(Value::Null))
            .collect();
        println!("  infeasible: {}", Value::from(reasons));
    }
}

/// Serialize a value as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}
