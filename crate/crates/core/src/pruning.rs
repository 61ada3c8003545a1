//! Incremental magnitude-based structured channel pruning.
//!
//! Each iteration ranks output channels by the l2 norm of their weights,
//! masks the smallest fraction given by the sparsity schedule, lets an
//! injected update hook adjust the surviving weights while the masked ones
//! read as zero, and then restores the masked weights to their pre-iteration
//! values. Only the mask itself outlives an iteration, so the schedule can
//! revisit earlier decisions as norms drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::ModelProfile;
use crate::rng::SeqRng;

/// Dense weight tensor for one layer; dims[0] is the output-channel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub layer_name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl WeightTensor {
    pub fn new(layer_name: impl Into<String>, dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let t = WeightTensor {
            layer_name: layer_name.into(),
            dims,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::Validation(format!(
                "tensor {}: dims must be non-empty with positive extents",
                self.layer_name
            )));
        }
        let expected: usize = self.dims.iter().product();
        if expected != self.values.len() {
            return Err(Error::DimensionMismatch {
                context: "weight tensor values",
                expected,
                got: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.dims[0]
    }

    /// Values per output channel.
    pub fn channel_stride(&self) -> usize {
        self.dims[1..].iter().product()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let stride = self.channel_stride();
        &self.values[c * stride..(c + 1) * stride]
    }
}

/// Boolean keep/mask record for one layer's output channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMask {
    pub layer_name: String,
    /// true = channel kept, false = channel masked.
    pub kept: Vec<bool>,
}

impl ChannelMask {
    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }
}

/// Per-iteration sparsity targets; must not decrease over iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsitySchedule {
    ratios: Vec<f64>,
}

impl SparsitySchedule {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        for &r in &ratios {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "sparsity ratio {r} outside [0, 1)"
                )));
            }
        }
        if ratios.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(
                "sparsity schedule must be non-decreasing".into(),
            ));
        }
        Ok(SparsitySchedule { ratios })
    }

    /// Evenly spaced ramp ending at `final_ratio`: final/steps, 2*final/steps, ...
    pub fn linear_ramp(final_ratio: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("ramp needs at least one step".into()));
        }
        if !(0.0..1.0).contains(&final_ratio) {
            return Err(Error::InvalidArgument(format!(
                "final sparsity {final_ratio} outside [0, 1)"
            )));
        }
        let ratios = (1..=steps)
            .map(|i| final_ratio * i as f64 / steps as f64)
            .collect();
        Ok(SparsitySchedule { ratios })
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn final_ratio(&self) -> Option<f64> {
        self.ratios.last().copied()
    }
}

/// Per-layer pruning outcome recorded by [`run_schedule`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPruneStats {
    pub layer_name: String,
    pub total_channels: usize,
    pub kept_channels: usize,
    pub mask: ChannelMask,
    /// kept_out/total_out times the previous layer's kept_in/total_in.
    pub flops_factor: f64,
}

/// Final outcome of a pruning schedule over an on-device prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub final_ratio: f64,
    pub layers: Vec<LayerPruneStats>,
    /// Feature bits leaving the split layer after masking. Requires shape
    /// information a bare weight tensor does not carry, so it is attached
    /// from a profile via [`PruneReport::attach_split_bits`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_output_bits: Option<u64>,
}

/// l2 norm of each output channel, accumulated in f64.
pub fn channel_norms(tensor: &WeightTensor) -> Result<Vec<f64>> {
    tensor.validate()?;
    Ok((0..tensor.channels())
        .map(|c| {
            tensor
                .channel(c)
                .iter()
                .map(|&w| f64::from(w) * f64::from(w))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Mask the floor(ratio * channels) smallest-norm channels.
///
/// Norm ties mask the lower index first; at least one channel always stays.
pub fn select_mask(layer_name: &str, norms: &[f64], ratio: f64) -> Result<ChannelMask> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "sparsity ratio {ratio} outside [0, 1)"
        )));
    }
    if norms.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot mask a tensor with zero channels".into(),
        ));
    }
    let c = norms.len();
    let masked = ((ratio * c as f64).floor() as usize).min(c - 1);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut kept = vec![true; c];
    for &idx in &order[..masked] {
        kept[idx] = false;
    }
    Ok(ChannelMask {
        layer_name: layer_name.to_string(),
        kept,
    })
}

/// One schedule step over every tensor: mask, hook update, recover.
///
/// The hook sees masked weights as exact zeros; whatever it writes into
/// masked positions is discarded when the pre-iteration values are restored,
/// so updates only ever land on unmasked weights.
pub fn prune_iteration<F>(
    tensors: &mut [WeightTensor],
    schedule: &SparsitySchedule,
    iteration: usize,
    update_hook: &mut F,
) -> Result<Vec<ChannelMask>>
where
    F: FnMut(&mut [WeightTensor]) -> std::result::Result<(), String>,
{
    if iteration >= schedule.len() {
        return Err(Error::IndexOutOfRange {
            what: "schedule iteration",
            index: iteration,
            max: schedule.len().saturating_sub(1),
        });
    }
    let ratio = schedule.ratios()[iteration];

    let mut masks = Vec::with_capacity(tensors.len());
    let mut saved: Vec<Vec<(usize, f32)>> = Vec::with_capacity(tensors.len());
    for tensor in tensors.iter_mut() {
        let norms = channel_norms(tensor)?;
        let mask = select_mask(&tensor.layer_name, &norms, ratio)?;
        let stride = tensor.channel_stride();
        let mut masked_values = Vec::new();
        for (c, &keep) in mask.kept.iter().enumerate() {
            if !keep {
                for i in c * stride..(c + 1) * stride {
                    masked_values.push((i, tensor.values[i]));
                    tensor.values[i] = 0.0;
                }
            }
        }
        saved.push(masked_values);
        masks.push(mask);
    }

    update_hook(tensors).map_err(|detail| Error::HookFailed { iteration, detail })?;

    for (tensor, masked_values) in tensors.iter_mut().zip(&saved) {
        for &(i, v) in masked_values {
            tensor.values[i] = v;
        }
    }
    Ok(masks)
}

/// Run every schedule step and summarize the final masks.
///
/// Tensors must be given in execution order: each layer's FLOP factor
/// combines its own kept ratio with the kept ratio of the layer before it.
pub fn run_schedule<F>(
    tensors: &mut [WeightTensor],
    schedule: &SparsitySchedule,
    update_hook: &mut F,
) -> Result<PruneReport>
where
    F: FnMut(&mut [WeightTensor]) -> std::result::Result<(), String>,
{
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("sparsity schedule is empty".into()));
    }
    if tensors.is_empty() {
        return Err(Error::InvalidArgument(
            "run_schedule needs at least one tensor".into(),
        ));
    }
    let mut final_masks = Vec::new();
    for i in 0..schedule.len() {
        final_masks = prune_iteration(tensors, schedule, i, update_hook)?;
    }

    let mut layers = Vec::with_capacity(tensors.len());
    let mut prev_factor = 1.0;
    for (tensor, mask) in tensors.iter().zip(&final_masks) {
        let total = tensor.channels();
        let kept = mask.kept_count();
        let own = kept as f64 / total as f64;
        layers.push(LayerPruneStats {
            layer_name: tensor.layer_name.clone(),
            total_channels: total,
            kept_channels: kept,
            mask: mask.clone(),
            flops_factor: own * prev_factor,
        });
        prev_factor = own;
    }
    Ok(PruneReport {
        final_ratio: schedule.final_ratio().expect("schedule is non-empty"),
        layers,
        split_output_bits: None,
    })
}

impl PruneReport {
    /// Fill `split_output_bits` from the profile the report was derived from.
    pub fn attach_split_bits(&mut self, profile: &ModelProfile, split: usize) -> Result<()> {
        let pruned = apply_to_profile(profile, self, split)?;
        self.split_output_bits = Some(pruned.feature_bits(split)?);
        Ok(())
    }

    fn stats_for(&self, layer_name: &str) -> Option<&LayerPruneStats> {
        self.layers.iter().find(|l| l.layer_name == layer_name)
    }
}

/// Rewrite the on-device prefix of a profile according to a prune report.
///
/// Weighted layers take their recorded FLOP/parameter factors and kept
/// channel counts. Shape-preserving layers in between (pools, activations,
/// norms, adds) inherit the kept fraction of the nearest weighted layer
/// before them. Server-side layers are left untouched.
pub fn apply_to_profile(
    profile: &ModelProfile,
    report: &PruneReport,
    split: usize,
) -> Result<ModelProfile> {
    if split > profile.len() {
        return Err(Error::IndexOutOfRange {
            what: "split",
            index: split,
            max: profile.len(),
        });
    }
    let mut out = profile.clone();
    let mut covered = vec![false; report.layers.len()];
    // Kept/total of the nearest weighted layer at or before the cursor.
    let mut inherited: Option<(usize, usize)> = None;

    for layer in &mut out.layers[..split] {
        if layer.kind.has_weights() {
            let stats = report.stats_for(&layer.name).ok_or_else(|| {
                Error::LayerMismatch(format!(
                    "weighted layer {} has no entry in the report",
                    layer.name
                ))
            })?;
            let idx = report
                .layers
                .iter()
                .position(|l| l.layer_name == layer.name)
                .expect("stats_for found it");
            covered[idx] = true;
            if stats.total_channels as u64 != layer.output_shape[0] {
                return Err(Error::LayerMismatch(format!(
                    "layer {}: mask covers {} channels but the profile has {}",
                    layer.name, stats.total_channels, layer.output_shape[0]
                )));
            }
            layer.flops = scale_u64(layer.flops, stats.flops_factor);
            layer.params = scale_u64(layer.params, stats.flops_factor);
            layer.output_shape[0] = stats.kept_channels as u64;
            inherited = Some((stats.kept_channels, stats.total_channels));
        } else if let Some((kept, total)) = inherited {
            let fraction = kept as f64 / total as f64;
            layer.flops = scale_u64(layer.flops, fraction);
            layer.params = scale_u64(layer.params, fraction);
            if layer.output_shape[0] == total as u64 {
                layer.output_shape[0] = kept as u64;
            }
        }
    }

    if let Some(stale) = covered.iter().position(|&c| !c) {
        return Err(Error::LayerMismatch(format!(
            "report entry {} matches no weighted on-device layer",
            report.layers[stale].layer_name
        )));
    }
    out.validate()?;
    Ok(out)
}

fn scale_u64(value: u64, factor: f64) -> u64 {
    (value as f64 * factor).round() as u64
}

/// Hook that leaves weights untouched (pure mask/recover cycles).
pub fn identity_hook() -> impl FnMut(&mut [WeightTensor]) -> std::result::Result<(), String> {
    |_tensors: &mut [WeightTensor]| Ok(())
}

/// Hook that adds seeded Gaussian noise, standing in for a training step.
pub fn gaussian_update_hook(
    seed: u64,
    sigma: f64,
) -> impl FnMut(&mut [WeightTensor]) -> std::result::Result<(), String> {
    let mut rng = SeqRng::new(seed);
    move |tensors: &mut [WeightTensor]| {
        for tensor in tensors.iter_mut() {
            for v in &mut tensor.values {
                *v += (rng.next_gaussian() * sigma) as f32;
            }
        }
        Ok(())
    }
}
