//! Deployment planning: exhaustive search over split, sparsity, and codec.
//!
//! A plan places a profile prefix on the device, ships the (possibly pruned
//! and coded) split feature over the channel, and finishes on the server.
//! Total latency is the plain sum of the three stages. Feasibility filters
//! cover device memory, the accuracy threshold, and the encoder's compute
//! overhead; accuracy itself comes from a caller-supplied interpolation
//! table, never from extrapolation.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelSpec};
use crate::codec::{coded_feature_bits, CodecConfig};
use crate::error::{Error, Result};
use crate::profile::ModelProfile;
use crate::pruning::{apply_to_profile, PruneReport};

/// Device, server, and link description for one deployment site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentProfile {
    /// Sustained device throughput in FLOP/s.
    pub device_flops_per_s: f64,
    /// Sustained server throughput in FLOP/s.
    pub server_flops_per_s: f64,
    /// Device memory available to the deployed prefix.
    pub device_memory_bytes: u64,
    /// Runtime bytes per parameter byte; covers framework and activation
    /// overhead and is a fitted constant, not a measurement.
    pub memory_overhead_factor: f64,
    pub channel: ChannelSpec,
}

impl EnvironmentProfile {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("device_flops_per_s", self.device_flops_per_s),
            ("server_flops_per_s", self.server_flops_per_s),
            ("memory_overhead_factor", self.memory_overhead_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "environment {what} must be positive, got {v}"
                )));
            }
        }
        if self.device_memory_bytes == 0 {
            return Err(Error::Validation(
                "environment device_memory_bytes must be positive".into(),
            ));
        }
        self.channel.validate()
    }
}

/// Read and validate an environment from a JSON file.
pub fn load_environment(path: &Path) -> Result<EnvironmentProfile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let env: EnvironmentProfile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    env.validate()?;
    Ok(env)
}

/// Predicted-accuracy grid over (split, sparsity, reduced_dim, quant_bits).
///
/// `accuracy` is row-major over the four axes. Plans without a codec are
/// looked up at the native element count and wire width of their split, so
/// the axes must cover those coordinates too. Queries outside the grid hull
/// are hard errors; the table never extrapolates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyModel {
    /// Plans predicted below this accuracy are infeasible.
    pub threshold: f64,
    pub splits: Vec<f64>,
    pub sparsities: Vec<f64>,
    pub reduced_dims: Vec<f64>,
    pub quant_bits: Vec<f64>,
    pub accuracy: Vec<f64>,
}

/// Read and validate an accuracy table from a JSON file.
pub fn load_accuracy_model(path: &Path) -> Result<AccuracyModel> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let model: AccuracyModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    model.validate()?;
    Ok(model)
}

impl AccuracyModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Validation(format!(
                "accuracy threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        for (name, axis) in [
            ("splits", &self.splits),
            ("sparsities", &self.sparsities),
            ("reduced_dims", &self.reduced_dims),
            ("quant_bits", &self.quant_bits),
        ] {
            if axis.is_empty() {
                return Err(Error::Validation(format!(
                    "accuracy axis {name} must be non-empty"
                )));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "accuracy axis {name} must be finite"
                )));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Validation(format!(
                    "accuracy axis {name} must be strictly increasing"
                )));
            }
        }
        let expected = self.splits.len()
            * self.sparsities.len()
            * self.reduced_dims.len()
            * self.quant_bits.len();
        if self.accuracy.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "accuracy grid",
                expected,
                got: self.accuracy.len(),
            });
        }
        if self.accuracy.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Validation(
                "accuracy values must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Multilinear interpolation at (split, sparsity, reduced_dim, quant_bits).
    pub fn predict(
        &self,
        split: f64,
        sparsity: f64,
        reduced_dim: f64,
        quant_bits: f64,
    ) -> Result<f64> {
        let bs = bracket(&self.splits, split, "split")?;
        let bp = bracket(&self.sparsities, sparsity, "sparsity")?;
        let bd = bracket(&self.reduced_dims, reduced_dim, "reduced_dim")?;
        let bb = bracket(&self.quant_bits, quant_bits, "quant_bits")?;

        let ns = self.sparsities.len();
        let nd = self.reduced_dims.len();
        let nb = self.quant_bits.len();
        let at = |i: usize, j: usize, k: usize, l: usize| {
            self.accuracy[((i * ns + j) * nd + k) * nb + l]
        };

        let mut acc = 0.0;
        for (i, wi) in corners(bs) {
            for (j, wj) in corners(bp) {
                for (k, wk) in corners(bd) {
                    for (l, wl) in corners(bb) {
                        acc += wi * wj * wk * wl * at(i, j, k, l);
                    }
                }
            }
        }
        Ok(acc)
    }
}

/// Bracket a coordinate on a sorted axis: (lower index, upper index, weight
/// of the upper end).
fn bracket(axis: &[f64], x: f64, name: &'static str) -> Result<(usize, usize, f64)> {
    let lo = axis[0];
    let hi = axis[axis.len() - 1];
    if !x.is_finite() || x < lo || x > hi {
        return Err(Error::UncoveredConfiguration(format!(
            "{name} {x} outside table hull [{lo}, {hi}]"
        )));
    }
    match axis.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => Ok((i, i, 0.0)),
        Err(i) => {
            let (a, b) = (i - 1, i);
            Ok((a, b, (x - axis[a]) / (axis[b] - axis[a])))
        }
    }
}

fn corners((a, b, t): (usize, usize, f64)) -> impl Iterator<Item = (usize, f64)> {
    let lower = (a, 1.0 - t);
    let upper = if a == b { None } else { Some((b, t)) };
    std::iter::once(lower).chain(upper).filter(|&(_, w)| w != 0.0)
}

/// How pruning affects a candidate plan.
#[derive(Debug, Clone, Copy)]
pub enum PruningEffect<'a> {
    /// Weights untouched.
    None,
    /// Closed-form approximation: weighted layers keep (1-s) of their
    /// outputs, so layers fed by pruned layers scale by (1-s)^2, the first
    /// weighted layer and shape-preserving layers by (1-s), and the split
    /// feature by (1-s).
    Idealized { sparsity: f64 },
    /// Exact kept-channel accounting from a finished pruning run.
    Report(&'a PruneReport),
}

/// Why a candidate plan was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    MemoryExceeded,
    AccuracyBelowThreshold,
    EncoderOverheadExceeded,
}

/// Fully evaluated deployment candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub split: usize,
    pub sparsity: f64,
    pub codec: Option<CodecConfig>,
    pub on_device_flops: u64,
    pub server_flops: u64,
    pub on_device_params: u64,
    pub comm_bits: u64,
    pub memory_bytes: u64,
    pub device_latency_s: f64,
    pub comm_latency_s: f64,
    pub server_latency_s: f64,
    pub total_latency_s: f64,
    pub predicted_accuracy: f64,
    pub feasible: bool,
    pub infeasible_reasons: Vec<InfeasibleReason>,
}

/// Encoder overhead may not exceed this fraction of the base prefix FLOPs.
pub const ENCODER_OVERHEAD_LIMIT: f64 = 0.01;

/// Evaluate one (split, pruning, codec) configuration against an environment.
///
/// Codecs only apply at interior splits: split 0 has no device to host an
/// encoder and the full split ships only the result payload. The accuracy
/// table is consulted at the codec coordinates when one applies, otherwise at
/// the split's native (unpruned) element count and wire width.
pub fn evaluate_plan(
    profile: &ModelProfile,
    env: &EnvironmentProfile,
    split: usize,
    pruning: PruningEffect,
    codec: Option<&CodecConfig>,
    acc_model: &AccuracyModel,
) -> Result<DeploymentPlan> {
    if split > profile.len() {
        return Err(Error::IndexOutOfRange {
            what: "split",
            index: split,
            max: profile.len(),
        });
    }
    env.validate()?;
    if let Some(c) = codec {
        validate_codec(c)?;
    }

    let (sparsity, device_flops, device_params, raw_bits) = prefix_costs(profile, split, pruning)?;
    let server_flops = profile.server_flops(split)?;

    let interior = split > 0 && split < profile.len();
    let codec = if interior { codec } else { None };

    let mut on_device_flops = device_flops;
    let mut reasons = Vec::new();

    let comm_bits = match codec {
        Some(c) => {
            let base = device_flops as f64;
            let over_limit = if base > 0.0 {
                c.encoder_flops_overhead as f64 / base > ENCODER_OVERHEAD_LIMIT
            } else {
                c.encoder_flops_overhead > 0
            };
            if over_limit {
                reasons.push(InfeasibleReason::EncoderOverheadExceeded);
            }
            on_device_flops = on_device_flops
                .checked_add(c.encoder_flops_overhead)
                .ok_or(Error::Overflow("on-device flops with encoder"))?;
            coded_feature_bits(c, c.reduced_dim)?
        }
        None if split == 0 => profile
            .input_compressed_bits
            .unwrap_or(profile.feature_bits(0)?),
        None => raw_bits,
    };

    let (acc_dim, acc_bits) = match codec {
        Some(c) => (c.reduced_dim as f64, f64::from(c.quant_bits)),
        None => (
            profile.feature_elements(split)? as f64,
            profile.feature_element_bits(split)? as f64,
        ),
    };
    let predicted_accuracy = acc_model.predict(split as f64, sparsity, acc_dim, acc_bits)?;
    if predicted_accuracy < acc_model.threshold {
        reasons.push(InfeasibleReason::AccuracyBelowThreshold);
    }

    let memory_bytes = ((device_params.saturating_mul(4)) as f64 * env.memory_overhead_factor)
        .round() as u64;
    if memory_bytes > env.device_memory_bytes {
        reasons.push(InfeasibleReason::MemoryExceeded);
    }

    let device_latency_s = on_device_flops as f64 / env.device_flops_per_s;
    let server_latency_s = server_flops as f64 / env.server_flops_per_s;
    let comm_latency_s = channel::transmit_latency(comm_bits, &env.channel)?;
    let total_latency_s = device_latency_s + comm_latency_s + server_latency_s;

    Ok(DeploymentPlan {
        split,
        sparsity,
        codec: codec.copied(),
        on_device_flops,
        server_flops,
        on_device_params: device_params,
        comm_bits,
        memory_bytes,
        device_latency_s,
        comm_latency_s,
        server_latency_s,
        total_latency_s,
        predicted_accuracy,
        feasible: reasons.is_empty(),
        infeasible_reasons: reasons,
    })
}

fn validate_codec(c: &CodecConfig) -> Result<()> {
    if c.reduced_dim == 0 {
        return Err(Error::InvalidArgument(
            "codec reduced_dim must be at least 1".into(),
        ));
    }
    if c.quant_bits == 0 || c.quant_bits > 24 {
        return Err(Error::InvalidArgument(format!(
            "codec quant_bits {} outside 1..=24",
            c.quant_bits
        )));
    }
    Ok(())
}

/// Device-side FLOPs/params and the raw split-feature bits under pruning.
fn prefix_costs(
    profile: &ModelProfile,
    split: usize,
    pruning: PruningEffect,
) -> Result<(f64, u64, u64, u64)> {
    match pruning {
        PruningEffect::None => Ok((
            0.0,
            profile.on_device_flops(split)?,
            profile.on_device_params(split)?,
            profile.feature_bits(split)?,
        )),
        PruningEffect::Idealized { sparsity } => {
            if !(0.0..1.0).contains(&sparsity) {
                return Err(Error::InvalidArgument(format!(
                    "sparsity {sparsity} outside [0, 1)"
                )));
            }
            let keep = 1.0 - sparsity;
            let mut flops = 0u64;
            let mut params = 0u64;
            let mut seen_weighted = false;
            for layer in &profile.layers[..split] {
                let factor = if layer.kind.has_weights() {
                    let f = if seen_weighted { keep * keep } else { keep };
                    seen_weighted = true;
                    f
                } else if seen_weighted {
                    keep
                } else {
                    1.0
                };
                flops = flops
                    .checked_add((layer.flops as f64 * factor).round() as u64)
                    .ok_or(Error::Overflow("on-device flops"))?;
                params = params
                    .checked_add((layer.params as f64 * factor).round() as u64)
                    .ok_or(Error::Overflow("on-device params"))?;
            }
            let raw = profile.feature_bits(split)?;
            let bits = if split > 0 && split < profile.len() && seen_weighted {
                (raw as f64 * keep).round() as u64
            } else {
                raw
            };
            Ok((sparsity, flops, params, bits))
        }
        PruningEffect::Report(report) => {
            let pruned = apply_to_profile(profile, report, split)?;
            Ok((
                report.final_ratio,
                pruned.on_device_flops(split)?,
                pruned.on_device_params(split)?,
                pruned.feature_bits(split)?,
            ))
        }
    }
}

/// Candidate grid for [`search`]: the cross product of the three axes.
///
/// `codecs` entries of `None` evaluate the bare feature; remember to include
/// one if uncoded plans should compete.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigGrid {
    pub splits: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub codecs: Vec<Option<CodecConfig>>,
}

impl ConfigGrid {
    /// Every configuration in deterministic split-major order.
    pub fn configs(&self) -> Vec<(usize, f64, Option<CodecConfig>)> {
        let mut out = Vec::with_capacity(self.len());
        for &split in &self.splits {
            for &sparsity in &self.sparsities {
                for codec in &self.codecs {
                    out.push((split, sparsity, *codec));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.splits.len() * self.sparsities.len() * self.codecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Search result: the winning plan plus every evaluated candidate in grid
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: DeploymentPlan,
    pub plans: Vec<DeploymentPlan>,
}

/// Total order used to pick winners; independent of grid enumeration order.
///
/// Lower latency wins; ties prefer fewer transmitted bits, then the smaller
/// split, then lower sparsity, then no codec before any codec, then the
/// smaller codec.
pub fn plan_order(a: &DeploymentPlan, b: &DeploymentPlan) -> Ordering {
    a.total_latency_s
        .total_cmp(&b.total_latency_s)
        .then_with(|| a.comm_bits.cmp(&b.comm_bits))
        .then_with(|| a.split.cmp(&b.split))
        .then_with(|| a.sparsity.total_cmp(&b.sparsity))
        .then_with(|| codec_rank(&a.codec).cmp(&codec_rank(&b.codec)))
}

fn codec_rank(codec: &Option<CodecConfig>) -> (u8, u64, u32, u64) {
    match codec {
        None => (0, 0, 0, 0),
        Some(c) => (1, c.reduced_dim, c.quant_bits, c.encoder_flops_overhead),
    }
}

/// Evaluate every grid configuration and pick the feasible latency minimum.
///
/// Candidates are evaluated in parallel but plans are returned in grid order
/// and the winner comes from a total order, so results do not depend on
/// thread count or enumeration order. With no feasible candidate the error
/// reports how many plans each filter rejected.
pub fn search(
    profile: &ModelProfile,
    env: &EnvironmentProfile,
    grid: &ConfigGrid,
    acc_model: &AccuracyModel,
) -> Result<SearchOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("search grid is empty".into()));
    }
    let configs = grid.configs();
    let evaluated: Vec<Result<DeploymentPlan>> = configs
        .par_iter()
        .map(|&(split, sparsity, codec)| {
            let effect = PruningEffect::Idealized { sparsity };
            evaluate_plan(profile, env, split, effect, codec.as_ref(), acc_model)
        })
        .collect();

    let mut plans = Vec::with_capacity(evaluated.len());
    for result in evaluated {
        plans.push(result?);
    }

    let best = plans
        .iter()
        .filter(|p| p.feasible)
        .min_by(|a, b| plan_order(a, b))
        .cloned();
    match best {
        Some(best) => Ok(SearchOutcome { best, plans }),
        None => {
            let count = |r: InfeasibleReason| {
                plans
                    .iter()
                    .filter(|p| p.infeasible_reasons.contains(&r))
                    .count()
            };
            Err(Error::NoFeasiblePlan {
                evaluated: plans.len(),
                memory: count(InfeasibleReason::MemoryExceeded),
                accuracy: count(InfeasibleReason::AccuracyBelowThreshold),
                overhead: count(InfeasibleReason::EncoderOverheadExceeded),
            })
        }
    }
}

/// Compute-vs-communication coordinates of one plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub on_device_flops: u64,
    pub comm_bits: u64,
    /// Index into the plan list the point was taken from.
    pub plan_index: usize,
}

/// Tradeoff coordinates of every feasible plan.
pub fn tradeoff_points(plans: &[DeploymentPlan]) -> Vec<TradeoffPoint> {
    plans
        .iter()
        .enumerate()
        .filter(|(_, p)| p.feasible)
        .map(|(i, p)| TradeoffPoint {
            on_device_flops: p.on_device_flops,
            comm_bits: p.comm_bits,
            plan_index: i,
        })
        .collect()
}

/// Non-dominated subset under joint minimization of FLOPs and bits.
///
/// A point dominates another when it is no worse in both coordinates and
/// strictly better in at least one; equal points survive together. Output is
/// sorted by FLOPs, then bits, then original index.
pub fn pareto_frontier(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.on_device_flops
            .cmp(&b.on_device_flops)
            .then_with(|| a.comm_bits.cmp(&b.comm_bits))
            .then_with(|| a.plan_index.cmp(&b.plan_index))
    });

    let mut frontier = Vec::new();
    let mut best_bits = u64::MAX;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].on_device_flops == sorted[i].on_device_flops {
            j += 1;
        }
        let group_min = sorted[i].comm_bits;
        if group_min < best_bits {
            frontier.extend(
                sorted[i..j]
                    .iter()
                    .take_while(|p| p.comm_bits == group_min)
                    .copied(),
            );
            best_bits = group_min;
        }
        i = j;
    }
    frontier
}

/// One row of a rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate_bps: f64,
    pub total_latency_s: f64,
    pub split: usize,
    pub sparsity: f64,
    pub reduced_dim: Option<u64>,
    pub quant_bits: Option<u32>,
    pub comm_bits: u64,
}

/// Re-run the search across fixed link rates.
///
/// Raising the rate never raises the optimum: feasibility ignores the
/// channel and each candidate's latency is non-increasing in rate.
pub fn rate_sweep(
    profile: &ModelProfile,
    env: &EnvironmentProfile,
    rates_bps: &[f64],
    grid: &ConfigGrid,
    acc_model: &AccuracyModel,
) -> Result<Vec<SweepRow>> {
    if rates_bps.is_empty() {
        return Err(Error::InvalidArgument("rate sweep needs rates".into()));
    }
    let mut rows = Vec::with_capacity(rates_bps.len());
    for &rate_bps in rates_bps {
        let mut probe = env.clone();
        probe.channel = ChannelSpec::FixedRate { rate_bps };
        let best = search(profile, &probe, grid, acc_model)?.best;
        rows.push(SweepRow {
            rate_bps,
            total_latency_s: best.total_latency_s,
            split: best.split,
            sparsity: best.sparsity,
            reduced_dim: best.codec.map(|c| c.reduced_dim),
            quant_bits: best.codec.map(|c| c.quant_bits),
            comm_bits: best.comm_bits,
        });
    }
    Ok(rows)
}

/// Precomputed best plans over a grid of link-rate and device-compute
/// buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    /// Ascending link rates in bits/s.
    pub rate_buckets_bps: Vec<f64>,
    /// Ascending device compute budgets in FLOP/s.
    pub compute_buckets_flops_per_s: Vec<f64>,
    /// plans[rate bucket][compute bucket].
    pub plans: Vec<Vec<DeploymentPlan>>,
}

fn validate_buckets(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Validation(format!("{name} must be non-empty")));
    }
    if axis.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Validation(format!("{name} must be positive")));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation(format!(
            "{name} must be strictly increasing"
        )));
    }
    Ok(())
}

impl LookupTable {
    pub fn validate(&self) -> Result<()> {
        validate_buckets("rate buckets", &self.rate_buckets_bps)?;
        validate_buckets("compute buckets", &self.compute_buckets_flops_per_s)?;
        if self.plans.len() != self.rate_buckets_bps.len()
            || self
                .plans
                .iter()
                .any(|row| row.len() != self.compute_buckets_flops_per_s.len())
        {
            return Err(Error::Validation(
                "lookup table plan matrix does not match its buckets".into(),
            ));
        }
        Ok(())
    }
}

/// Read and validate a lookup table from a JSON file.
pub fn load_lookup(path: &Path) -> Result<LookupTable> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let table: LookupTable = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    table.validate()?;
    Ok(table)
}

/// Solve the search once per (rate, compute) bucket.
///
/// Every bucket must admit a feasible plan; a failing bucket aborts the
/// build with that bucket's search error.
pub fn build_lookup(
    profile: &ModelProfile,
    env_template: &EnvironmentProfile,
    rate_buckets_bps: &[f64],
    compute_buckets_flops_per_s: &[f64],
    grid: &ConfigGrid,
    acc_model: &AccuracyModel,
) -> Result<LookupTable> {
    for (name, axis) in [
        ("rate buckets", rate_buckets_bps),
        ("compute buckets", compute_buckets_flops_per_s),
    ] {
        validate_buckets(name, axis).map_err(|e| match e {
            Error::Validation(msg) => Error::InvalidArgument(msg),
            other => other,
        })?;
    }

    let mut plans = Vec::with_capacity(rate_buckets_bps.len());
    for &rate_bps in rate_buckets_bps {
        let mut row = Vec::with_capacity(compute_buckets_flops_per_s.len());
        for &device_rate in compute_buckets_flops_per_s {
            let mut probe = env_template.clone();
            probe.channel = ChannelSpec::FixedRate { rate_bps };
            probe.device_flops_per_s = device_rate;
            row.push(search(profile, &probe, grid, acc_model)?.best);
        }
        plans.push(row);
    }
    Ok(LookupTable {
        rate_buckets_bps: rate_buckets_bps.to_vec(),
        compute_buckets_flops_per_s: compute_buckets_flops_per_s.to_vec(),
        plans,
    })
}

/// Conservative lookup: the nearest bucket at or below each queried value.
///
/// Queries below the smallest bucket on either axis are range errors; above
/// the largest bucket the largest still applies.
pub fn query_lookup_at(
    table: &LookupTable,
    rate_bps: f64,
    device_flops_per_s: f64,
) -> Result<&DeploymentPlan> {
    table.validate()?;
    let rate_idx = floor_bucket(&table.rate_buckets_bps, rate_bps).ok_or_else(|| {
        Error::QueryOutOfRange(format!(
            "rate {rate_bps} bps is below the smallest bucket {}",
            table.rate_buckets_bps[0]
        ))
    })?;
    let compute_idx = floor_bucket(&table.compute_buckets_flops_per_s, device_flops_per_s)
        .ok_or_else(|| {
            Error::QueryOutOfRange(format!(
                "device compute {device_flops_per_s} FLOP/s is below the smallest bucket {}",
                table.compute_buckets_flops_per_s[0]
            ))
        })?;
    Ok(&table.plans[rate_idx][compute_idx])
}

/// [`query_lookup_at`] with the rate taken from the environment's channel.
pub fn query_lookup<'t>(
    table: &'t LookupTable,
    env: &EnvironmentProfile,
) -> Result<&'t DeploymentPlan> {
    env.validate()?;
    let rate = channel::effective_rate_bps(&env.channel)?;
    query_lookup_at(table, rate, env.device_flops_per_s)
}

fn floor_bucket(axis: &[f64], x: f64) -> Option<usize> {
    if !x.is_finite() || x < axis[0] {
        return None;
    }
    Some(axis.iter().rposition(|&b| b <= x).expect("x >= axis[0]"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{InputSpec, LayerKind, LayerProfile};

    fn layer(
        name: &str,
        kind: LayerKind,
        flops: u64,
        params: u64,
        shape: &[u64],
    ) -> LayerProfile {
        LayerProfile {
            name: name.into(),
            kind,
            flops,
            params,
            output_shape: shape.to_vec(),
            bits_per_element: 32,
            splittable: true,
        }
    }

    fn test_profile() -> ModelProfile {
        ModelProfile {
            name: "planner-test".into(),
            input: InputSpec {
                shape: vec![3, 8, 8],
                bits_per_element: 8,
            },
            result_bits: 64,
            input_compressed_bits: None,
            layers: vec![
                layer("conv_a", LayerKind::Conv, 600_000, 3_000, &[16, 8, 8]),
                layer("relu_a", LayerKind::Activation, 1_024, 0, &[16, 8, 8]),
                layer("conv_b", LayerKind::Conv, 1_200_000, 18_000, &[32, 4, 4]),
                layer("fc", LayerKind::Fc, 10_000, 5_000, &[10]),
            ],
        }
    }

    fn test_env() -> EnvironmentProfile {
        EnvironmentProfile {
            device_flops_per_s: 24e9,
            server_flops_per_s: 13.45e12,
            device_memory_bytes: 1_000_000_000,
            memory_overhead_factor: 20.0,
            channel: ChannelSpec::FixedRate { rate_bps: 320_000.0 },
        }
    }

    /// Table that covers everything and accepts everything.
    fn permissive_acc() -> AccuracyModel {
        AccuracyModel {
            threshold: 0.0,
            splits: vec![0.0, 100.0],
            sparsities: vec![0.0, 0.999],
            reduced_dims: vec![1.0, 1e9],
            quant_bits: vec![1.0, 64.0],
            accuracy: vec![0.95; 16],
        }
    }

    fn full_grid(profile: &ModelProfile) -> ConfigGrid {
        ConfigGrid {
            splits: (0..=profile.len()).collect(),
            sparsities: vec![0.0, 0.5],
            codecs: vec![
                None,
                Some(CodecConfig {
                    reduced_dim: 16,
                    quant_bits: 4,
                    encoder_flops_overhead: 1_000,
                }),
            ],
        }
    }

    #[test]
    fn endpoint_plans_have_expected_shape() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();

        let server_only =
            evaluate_plan(&profile, &env, 0, PruningEffect::None, None, &acc).unwrap();
        assert_eq!(server_only.on_device_flops, 0);
        assert_eq!(server_only.device_latency_s, 0.0);
        assert_eq!(server_only.comm_bits, 3 * 8 * 8 * 8);
        assert_eq!(server_only.server_flops, 1_811_024);

        let device_only =
            evaluate_plan(&profile, &env, 4, PruningEffect::None, None, &acc).unwrap();
        assert_eq!(device_only.comm_bits, 64);
        assert_eq!(device_only.server_latency_s, 0.0);
        assert_eq!(device_only.on_device_flops, 1_811_024);
    }

    #[test]
    fn total_latency_is_the_sum_of_stages() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        for split in 0..=profile.len() {
            let plan =
                evaluate_plan(&profile, &env, split, PruningEffect::None, None, &acc).unwrap();
            let sum = plan.device_latency_s + plan.comm_latency_s + plan.server_latency_s;
            assert!((plan.total_latency_s - sum).abs() <= 1e-12 * sum.max(1.0));
        }
    }

    #[test]
    fn mid_split_plan_matches_hand_arithmetic() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        let codec = CodecConfig {
            reduced_dim: 16,
            quant_bits: 4,
            encoder_flops_overhead: 1_000,
        };
        let plan = evaluate_plan(
            &profile,
            &env,
            3,
            PruningEffect::None,
            Some(&codec),
            &acc,
        )
        .unwrap();

        // Device: conv_a + relu_a + conv_b plus the encoder.
        let base = 600_000.0 + 1_024.0 + 1_200_000.0;
        assert_eq!(plan.on_device_flops, 1_802_024);
        assert!((plan.device_latency_s - (base + 1_000.0) / 24e9).abs() < 1e-18);
        // Link: 16 symbols * 4 bits at 320 kbps.
        assert_eq!(plan.comm_bits, 64);
        assert!((plan.comm_latency_s - 64.0 / 320_000.0).abs() < 1e-15);
        // Server: just the fc layer.
        assert!((plan.server_latency_s - 10_000.0 / 13.45e12).abs() < 1e-20);
        assert!(plan.feasible);
    }

    #[test]
    fn idealized_pruning_scales_flops_params_and_bits() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        let plan = evaluate_plan(
            &profile,
            &env,
            3,
            PruningEffect::Idealized { sparsity: 0.5 },
            None,
            &acc,
        )
        .unwrap();
        // conv_a is first weighted: x0.5. relu_a follows pruned outputs: x0.5.
        // conv_b is conv fed by conv: x0.25.
        assert_eq!(plan.on_device_flops, 300_000 + 512 + 300_000);
        assert_eq!(plan.on_device_params, 1_500 + 4_500);
        // Split feature halves: 32*4*4*32 bits -> half.
        assert_eq!(plan.comm_bits, 32 * 4 * 4 * 32 / 2);
        assert_eq!(plan.sparsity, 0.5);
    }

    #[test]
    fn idealized_zero_sparsity_equals_no_pruning() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        for split in 0..=profile.len() {
            let a = evaluate_plan(&profile, &env, split, PruningEffect::None, None, &acc).unwrap();
            let b = evaluate_plan(
                &profile,
                &env,
                split,
                PruningEffect::Idealized { sparsity: 0.0 },
                None,
                &acc,
            )
            .unwrap();
            assert_eq!(a.on_device_flops, b.on_device_flops);
            assert_eq!(a.comm_bits, b.comm_bits);
            assert_eq!(a.total_latency_s, b.total_latency_s);
        }
    }

    #[test]
    fn codec_is_ignored_at_endpoint_splits() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        let codec = CodecConfig {
            reduced_dim: 4,
            quant_bits: 2,
            encoder_flops_overhead: 0,
        };
        let with = evaluate_plan(&profile, &env, 0, PruningEffect::None, Some(&codec), &acc).unwrap();
        let without = evaluate_plan(&profile, &env, 0, PruningEffect::None, None, &acc).unwrap();
        assert_eq!(with.comm_bits, without.comm_bits);
        assert_eq!(with.codec, None);
    }

    #[test]
    fn compressed_input_override_applies_at_split_zero() {
        let mut profile = test_profile();
        profile.input_compressed_bits = Some(500);
        let env = test_env();
        let acc = permissive_acc();
        let plan = evaluate_plan(&profile, &env, 0, PruningEffect::None, None, &acc).unwrap();
        assert_eq!(plan.comm_bits, 500);
        // Interior splits are unaffected by the override.
        let plan = evaluate_plan(&profile, &env, 1, PruningEffect::None, None, &acc).unwrap();
        assert_eq!(plan.comm_bits, 16 * 8 * 8 * 32);
    }

    #[test]
    fn feasibility_filters_fire_individually() {
        let profile = test_profile();
        let acc = permissive_acc();

        let mut env = test_env();
        env.device_memory_bytes = 1_000;
        let plan = evaluate_plan(&profile, &env, 4, PruningEffect::None, None, &acc).unwrap();
        assert!(!plan.feasible);
        assert_eq!(plan.infeasible_reasons, vec![InfeasibleReason::MemoryExceeded]);

        let env = test_env();
        let mut strict = permissive_acc();
        strict.threshold = 0.99;
        let plan = evaluate_plan(&profile, &env, 2, PruningEffect::None, None, &strict).unwrap();
        assert!(plan
            .infeasible_reasons
            .contains(&InfeasibleReason::AccuracyBelowThreshold));

        let heavy = CodecConfig {
            reduced_dim: 16,
            quant_bits: 4,
            encoder_flops_overhead: 600_001,
        };
        let plan =
            evaluate_plan(&profile, &env, 1, PruningEffect::None, Some(&heavy), &acc).unwrap();
        assert!(plan
            .infeasible_reasons
            .contains(&InfeasibleReason::EncoderOverheadExceeded));
        // 6,000 FLOPs on a 600,000-FLOP prefix sits exactly at the 1% limit.
        let at_limit = CodecConfig {
            reduced_dim: 16,
            quant_bits: 4,
            encoder_flops_overhead: 6_000,
        };
        let plan =
            evaluate_plan(&profile, &env, 1, PruningEffect::None, Some(&at_limit), &acc).unwrap();
        assert!(plan.feasible);
    }

    #[test]
    fn memory_scales_with_the_overhead_factor() {
        let profile = test_profile();
        let mut env = test_env();
        env.memory_overhead_factor = 10.0;
        let acc = permissive_acc();
        let plan = evaluate_plan(&profile, &env, 4, PruningEffect::None, None, &acc).unwrap();
        assert_eq!(plan.memory_bytes, 26_000 * 4 * 10);
    }

    #[test]
    fn uncovered_accuracy_queries_are_hard_errors() {
        let profile = test_profile();
        let env = test_env();
        let mut acc = permissive_acc();
        acc.splits = vec![0.0, 2.0];
        acc.accuracy = vec![0.95; 16];
        let err =
            evaluate_plan(&profile, &env, 3, PruningEffect::None, None, &acc).unwrap_err();
        assert!(matches!(err, Error::UncoveredConfiguration(_)));
    }

    #[test]
    fn interpolation_matches_hand_values() {
        let acc = AccuracyModel {
            threshold: 0.5,
            splits: vec![0.0, 2.0],
            sparsities: vec![0.0, 1.0],
            reduced_dims: vec![1.0, 3.0],
            quant_bits: vec![1.0, 5.0],
            accuracy: (0..16).map(|i| i as f64 / 15.0).collect(),
        };
        acc.validate().unwrap();
        // Exact corner.
        assert_eq!(acc.predict(0.0, 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(acc.predict(2.0, 1.0, 3.0, 5.0).unwrap(), 1.0);
        // Midpoint of every axis averages all 16 corners.
        let mid = acc.predict(1.0, 0.5, 2.0, 3.0).unwrap();
        let mean: f64 = (0..16).map(|i| i as f64 / 15.0).sum::<f64>() / 16.0;
        assert!((mid - mean).abs() < 1e-12);
        // Single-axis interpolation on the quant_bits axis.
        let v = acc.predict(0.0, 0.0, 1.0, 2.0).unwrap();
        assert!((v - 0.25 * 1.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn search_matches_a_naive_scan_on_a_small_grid() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        let grid = full_grid(&profile);

        let outcome = search(&profile, &env, &grid, &acc).unwrap();
        assert_eq!(outcome.plans.len(), grid.len());

        let mut best: Option<DeploymentPlan> = None;
        for (split, sparsity, codec) in grid.configs() {
            let plan = evaluate_plan(
                &profile,
                &env,
                split,
                PruningEffect::Idealized { sparsity },
                codec.as_ref(),
                &acc,
            )
            .unwrap();
            if !plan.feasible {
                continue;
            }
            best = match best {
                None => Some(plan),
                Some(cur) => {
                    if plan_order(&plan, &cur) == Ordering::Less {
                        Some(plan)
                    } else {
                        Some(cur)
                    }
                }
            };
        }
        assert_eq!(outcome.best, best.unwrap());
    }

    #[test]
    fn search_best_is_independent_of_grid_order() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        let grid = full_grid(&profile);
        let mut shuffled = grid.clone();
        shuffled.splits.reverse();
        shuffled.sparsities.reverse();
        shuffled.codecs.reverse();
        let a = search(&profile, &env, &grid, &acc).unwrap();
        let b = search(&profile, &env, &shuffled, &acc).unwrap();
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn ties_prefer_fewer_bits_then_smaller_split() {
        // Device and server run at the same rate, so every split has the
        // same compute latency; equal feature sizes then tie exactly.
        let profile = ModelProfile {
            name: "tie".into(),
            input: InputSpec {
                shape: vec![10],
                bits_per_element: 32,
            },
            result_bits: 64,
            input_compressed_bits: None,
            layers: vec![
                layer("a", LayerKind::Conv, 100, 1, &[10]),
                layer("b", LayerKind::Conv, 100, 1, &[10]),
                layer("c", LayerKind::Conv, 100, 1, &[5]),
            ],
        };
        let env = EnvironmentProfile {
            device_flops_per_s: 1e6,
            server_flops_per_s: 1e6,
            device_memory_bytes: 1_000_000,
            memory_overhead_factor: 1.0,
            channel: ChannelSpec::FixedRate { rate_bps: 1e6 },
        };
        let acc = permissive_acc();
        let grid = ConfigGrid {
            splits: vec![1, 2, 3],
            sparsities: vec![0.0],
            codecs: vec![None],
        };
        let outcome = search(&profile, &env, &grid, &acc).unwrap();
        // Split 3 ships 5*32 bits, strictly fewer than splits 1 and 2.
        assert_eq!(outcome.best.split, 3);

        let grid = ConfigGrid {
            splits: vec![2, 1],
            sparsities: vec![0.0],
            codecs: vec![None],
        };
        // Splits 1 and 2 tie on latency and bits; the smaller split wins.
        let outcome = search(&profile, &env, &grid, &acc).unwrap();
        assert_eq!(outcome.best.split, 1);
    }

    #[test]
    fn no_feasible_plan_reports_violation_counts() {
        let profile = test_profile();
        let env = test_env();
        let mut acc = permissive_acc();
        acc.threshold = 0.99;
        let grid = ConfigGrid {
            splits: vec![0, 1],
            sparsities: vec![0.0],
            codecs: vec![None],
        };
        let err = search(&profile, &env, &grid, &acc).unwrap_err();
        match err {
            Error::NoFeasiblePlan {
                evaluated,
                accuracy,
                memory,
                overhead,
            } => {
                assert_eq!(evaluated, 2);
                assert_eq!(accuracy, 2);
                assert_eq!(memory, 0);
                assert_eq!(overhead, 0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pareto_matches_quadratic_oracle_on_seeded_points() {
        use crate::rng::SeqRng;
        let mut rng = SeqRng::new(77);
        let points: Vec<TradeoffPoint> = (0..500)
            .map(|i| TradeoffPoint {
                on_device_flops: rng.next_u64() % 1_000,
                comm_bits: rng.next_u64() % 1_000,
                plan_index: i,
            })
            .collect();
        let fast = pareto_frontier(&points);

        let dominated = |p: &TradeoffPoint| {
            points.iter().any(|q| {
                q.on_device_flops <= p.on_device_flops
                    && q.comm_bits <= p.comm_bits
                    && (q.on_device_flops < p.on_device_flops || q.comm_bits < p.comm_bits)
            })
        };
        let mut slow: Vec<TradeoffPoint> =
            points.iter().filter(|p| !dominated(p)).copied().collect();
        slow.sort_by(|a, b| {
            a.on_device_flops
                .cmp(&b.on_device_flops)
                .then_with(|| a.comm_bits.cmp(&b.comm_bits))
                .then_with(|| a.plan_index.cmp(&b.plan_index))
        });
        assert_eq!(fast, slow);
    }

    #[test]
    fn pareto_keeps_duplicates_and_single_points() {
        let p = |f: u64, b: u64, i: usize| TradeoffPoint {
            on_device_flops: f,
            comm_bits: b,
            plan_index: i,
        };
        assert_eq!(pareto_frontier(&[p(5, 5, 0)]), vec![p(5, 5, 0)]);
        // Duplicates do not dominate each other.
        let f = pareto_frontier(&[p(1, 1, 0), p(1, 1, 1)]);
        assert_eq!(f.len(), 2);
        // (2,5) and (3,6): the second is dominated.
        let f = pareto_frontier(&[p(3, 6, 0), p(2, 5, 1)]);
        assert_eq!(f, vec![p(2, 5, 1)]);
    }

    #[test]
    fn rate_sweep_is_monotone_and_hits_the_compute_floor() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        let grid = full_grid(&profile);
        let rates: Vec<f64> = (0..20).map(|i| 1e3 * 1.8f64.powi(i)).collect();
        let rows = rate_sweep(&profile, &env, &rates, &grid, &acc).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].total_latency_s <= w[0].total_latency_s + 1e-15);
        }

        // At an absurdly high rate the best plan is pure compute.
        let rows = rate_sweep(&profile, &env, &[1e18], &grid, &acc).unwrap();
        let compute_floor = grid
            .configs()
            .iter()
            .map(|&(split, sparsity, codec)| {
                let plan = evaluate_plan(
                    &profile,
                    &env,
                    split,
                    PruningEffect::Idealized { sparsity },
                    codec.as_ref(),
                    &acc,
                )
                .unwrap();
                plan.device_latency_s + plan.server_latency_s
            })
            .fold(f64::INFINITY, f64::min);
        assert!((rows[0].total_latency_s - compute_floor).abs() <= compute_floor * 1e-6);
    }

    #[test]
    fn lookup_round_trips_and_selects_conservatively() {
        let profile = test_profile();
        let env = test_env();
        let acc = permissive_acc();
        let grid = full_grid(&profile);
        let rates = [1e4, 1e5, 1e6];
        let computes = [1e9, 1e10];
        let table = build_lookup(&profile, &env, &rates, &computes, &grid, &acc).unwrap();
        table.validate().unwrap();

        // Exact bucket.
        let exact = query_lookup_at(&table, 1e5, 1e10).unwrap();
        assert_eq!(exact, &table.plans[1][1]);
        // Between buckets: floor on both axes.
        let between = query_lookup_at(&table, 5e5, 9e9).unwrap();
        assert_eq!(between, &table.plans[1][0]);
        // Above the top bucket clamps down; below the bottom errors.
        let above = query_lookup_at(&table, 1e9, 1e12).unwrap();
        assert_eq!(above, &table.plans[2][1]);
        assert!(matches!(
            query_lookup_at(&table, 1e3, 1e10),
            Err(Error::QueryOutOfRange(_))
        ));
        assert!(matches!(
            query_lookup_at(&table, 1e5, 1e8),
            Err(Error::QueryOutOfRange(_))
        ));

        // Environment-driven query goes through the channel rate.
        let mut probe = env.clone();
        probe.channel = ChannelSpec::FixedRate { rate_bps: 1e5 };
        probe.device_flops_per_s = 1e10;
        assert_eq!(query_lookup(&table, &probe).unwrap(), exact);

        // Rebuilds serialize byte-identically.
        let again = build_lookup(&profile, &env, &rates, &computes, &grid, &acc).unwrap();
        assert_eq!(
            serde_json::to_string(&table).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn environment_validation_rejects_nonsense() {
        let mut env = test_env();
        env.device_flops_per_s = 0.0;
        assert!(env.validate().is_err());
        let mut env = test_env();
        env.memory_overhead_factor = -2.0;
        assert!(env.validate().is_err());
        let mut env = test_env();
        env.channel = ChannelSpec::FixedRate { rate_bps: 0.0 };
        assert!(env.validate().is_err());
    }

    #[test]
    fn accuracy_model_validation_rejects_bad_grids() {
        let mut acc = permissive_acc();
        acc.accuracy.pop();
        assert!(acc.validate().is_err());
        let mut acc = permissive_acc();
        acc.splits = vec![2.0, 1.0];
        assert!(acc.validate().is_err());
        let mut acc = permissive_acc();
        acc.accuracy[3] = 1.5;
        assert!(acc.validate().is_err());
        let mut acc = permissive_acc();
        acc.threshold = 1.2;
        assert!(acc.validate().is_err());
    }
}
