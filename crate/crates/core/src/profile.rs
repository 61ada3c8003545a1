//! Layer-graph model profiles and per-split cost queries.
//!
//! A profile is an ordered list of layers with per-layer FLOP, parameter,
//! and output-shape records. Split index `k` means layers `1..=k` run on the
//! device and the rest on the server; `k = 0` ships the raw input and
//! `k = len` ships only the final result payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer category, as recorded in profile files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
    Pool,
    Activation,
    Bn,
    Add,
    Other,
}

impl LayerKind {
    /// Layers that carry a prunable weight tensor.
    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Fc)
    }
}

fn default_bits_per_element() -> u32 {
    32
}

fn default_result_bits() -> u64 {
    64
}

/// Cost and shape record for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub name: String,
    pub kind: LayerKind,
    /// Floating-point operations for one forward pass; a multiply-accumulate
    /// counts as two.
    pub flops: u64,
    /// Learnable scalar parameters.
    pub params: u64,
    /// Output shape, channels first.
    pub output_shape: Vec<u64>,
    /// Wire width of one output element before any codec is applied.
    #[serde(default = "default_bits_per_element")]
    pub bits_per_element: u32,
    /// Whether the boundary after this layer is a valid split point.
    #[serde(default)]
    pub splittable: bool,
}

impl LayerProfile {
    /// Output elements for one forward pass.
    pub fn output_elements(&self) -> Result<u64> {
        checked_product(&self.output_shape, "layer output elements")
    }
}

/// Shape and wire width of the raw model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    /// Input shape, channels first.
    pub shape: Vec<u64>,
    /// Wire width of one raw input element.
    pub bits_per_element: u32,
}

/// Ordered layer profile of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub input: InputSpec,
    /// Bits transmitted when the whole model runs on the device (the task
    /// result payload).
    #[serde(default = "default_result_bits")]
    pub result_bits: u64,
    /// Optional losslessly compressed size of the raw input, used by planners
    /// when a deployment ships the input instead of a feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_compressed_bits: Option<u64>,
    pub layers: Vec<LayerProfile>,
}

/// Feature amplification at one split point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplificationPoint {
    pub split: usize,
    /// feature bits at this split divided by raw input bits.
    pub ratio: f64,
}

/// FLOPs of a dense 2-D convolution: 2 * k^2 * c_in * c_out * h_out * w_out.
///
/// Overflow is reported as an error rather than wrapped.
pub fn conv_flops(kernel: u64, c_in: u64, c_out: u64, h_out: u64, w_out: u64) -> Result<u64> {
    for (what, v) in [
        ("kernel", kernel),
        ("c_in", c_in),
        ("c_out", c_out),
        ("h_out", h_out),
        ("w_out", w_out),
    ] {
        if v == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv_flops: {what} must be at least 1"
            )));
        }
    }
    kernel
        .checked_mul(kernel)
        .and_then(|v| v.checked_mul(c_in))
        .and_then(|v| v.checked_mul(c_out))
        .and_then(|v| v.checked_mul(h_out))
        .and_then(|v| v.checked_mul(w_out))
        .and_then(|v| v.checked_mul(2))
        .ok_or(Error::Overflow("conv_flops"))
}

fn checked_product(dims: &[u64], context: &'static str) -> Result<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::Overflow(context))
}

/// Read and validate a profile from a JSON file.
pub fn load_profile(path: &Path) -> Result<ModelProfile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let profile: ModelProfile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    profile.validate()?;
    Ok(profile)
}

/// Write a profile as pretty-printed JSON.
pub fn save_profile(profile: &ModelProfile, path: &Path) -> Result<()> {
    profile.validate()?;
    let text = serde_json::to_string_pretty(profile).expect("profile serializes");
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl ModelProfile {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Check structural invariants. Every violation names the offending layer.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Validation("profile name must be non-empty".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Validation(format!(
                "profile {}: layer list must be non-empty",
                self.name
            )));
        }
        if self.input.shape.is_empty() || self.input.shape.contains(&0) {
            return Err(Error::Validation(format!(
                "profile {}: input shape must be non-empty with positive extents",
                self.name
            )));
        }
        if !(1..=64).contains(&self.input.bits_per_element) {
            return Err(Error::Validation(format!(
                "profile {}: input bits_per_element must be in 1..=64",
                self.name
            )));
        }
        if self.result_bits == 0 {
            return Err(Error::Validation(format!(
                "profile {}: result_bits must be at least 1",
                self.name
            )));
        }
        if self.input_compressed_bits == Some(0) {
            return Err(Error::Validation(format!(
                "profile {}: input_compressed_bits must be at least 1 when present",
                self.name
            )));
        }
        for layer in &self.layers {
            if layer.name.is_empty() {
                return Err(Error::Validation(format!(
                    "profile {}: every layer needs a non-empty name",
                    self.name
                )));
            }
            if layer.output_shape.is_empty() || layer.output_shape.contains(&0) {
                return Err(Error::Validation(format!(
                    "layer {}: output shape must be non-empty with positive extents",
                    layer.name
                )));
            }
            if !(1..=64).contains(&layer.bits_per_element) {
                return Err(Error::Validation(format!(
                    "layer {}: bits_per_element must be in 1..=64",
                    layer.name
                )));
            }
        }
        if !self.layers.iter().any(|l| l.splittable) {
            return Err(Error::Validation(format!(
                "profile {}: at least one layer must be splittable",
                self.name
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Validation(format!(
                    "layer {}: name appears more than once",
                    layer.name
                )));
            }
        }
        // Reject profiles whose cost queries would overflow later.
        let mut total: u64 = 0;
        for layer in &self.layers {
            total = total
                .checked_add(layer.flops)
                .ok_or(Error::Overflow("profile total flops"))?;
            if layer
                .output_elements()?
                .checked_mul(u64::from(layer.bits_per_element))
                .is_none()
            {
                return Err(Error::Validation(format!(
                    "layer {}: feature bits overflow u64",
                    layer.name
                )));
            }
        }
        checked_product(&self.input.shape, "input elements")?
            .checked_mul(u64::from(self.input.bits_per_element))
            .ok_or_else(|| {
                Error::Validation(format!("profile {}: input bits overflow u64", self.name))
            })?;
        Ok(())
    }

    /// FLOPs executed on the device for a given split (sum over the prefix).
    pub fn on_device_flops(&self, split: usize) -> Result<u64> {
        self.check_split(split)?;
        self.layers[..split]
            .iter()
            .try_fold(0u64, |acc, l| acc.checked_add(l.flops))
            .ok_or(Error::Overflow("on-device flops"))
    }

    /// FLOPs executed on the server for a given split (sum over the suffix).
    pub fn server_flops(&self, split: usize) -> Result<u64> {
        self.check_split(split)?;
        self.layers[split..]
            .iter()
            .try_fold(0u64, |acc, l| acc.checked_add(l.flops))
            .ok_or(Error::Overflow("server flops"))
    }

    /// Parameters held on the device for a given split.
    pub fn on_device_params(&self, split: usize) -> Result<u64> {
        self.check_split(split)?;
        self.layers[..split]
            .iter()
            .try_fold(0u64, |acc, l| acc.checked_add(l.params))
            .ok_or(Error::Overflow("on-device params"))
    }

    /// Elements crossing the link at a given split, before any codec.
    ///
    /// Split 0 counts raw input elements; the full split counts the result
    /// payload as one element.
    pub fn feature_elements(&self, split: usize) -> Result<u64> {
        self.check_split(split)?;
        if split == 0 {
            checked_product(&self.input.shape, "input elements")
        } else if split == self.len() {
            Ok(1)
        } else {
            self.layers[split - 1].output_elements()
        }
    }

    /// Wire width of one transmitted element at a given split.
    pub fn feature_element_bits(&self, split: usize) -> Result<u64> {
        self.check_split(split)?;
        if split == 0 {
            Ok(u64::from(self.input.bits_per_element))
        } else if split == self.len() {
            Ok(self.result_bits)
        } else {
            Ok(u64::from(self.layers[split - 1].bits_per_element))
        }
    }

    /// Bits crossing the link at a given split, before pruning or codecs.
    pub fn feature_bits(&self, split: usize) -> Result<u64> {
        let elements = self.feature_elements(split)?;
        elements
            .checked_mul(self.feature_element_bits(split)?)
            .ok_or(Error::Overflow("feature bits"))
    }

    /// All valid split indices: both endpoints plus every splittable layer.
    pub fn split_points(&self) -> Vec<usize> {
        let mut points = vec![0];
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.splittable && i + 1 != self.len() {
                points.push(i + 1);
            }
        }
        points.push(self.len());
        points
    }

    /// Split points whose transmitted feature exceeds the raw input size,
    /// sorted by ratio, largest first. Ties keep the smaller split first.
    pub fn amplification_points(&self) -> Result<Vec<AmplificationPoint>> {
        let input_bits = self.feature_bits(0)? as f64;
        let mut points = Vec::new();
        for split in self.split_points() {
            let ratio = self.feature_bits(split)? as f64 / input_bits;
            if ratio > 1.0 {
                points.push(AmplificationPoint { split, ratio });
            }
        }
        points.sort_by(|a, b| {
            b.ratio
                .total_cmp(&a.ratio)
                .then_with(|| a.split.cmp(&b.split))
        });
        Ok(points)
    }

    fn check_split(&self, split: usize) -> Result<()> {
        if split > self.len() {
            return Err(Error::IndexOutOfRange {
                what: "split",
                index: split,
                max: self.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeqRng;

    /// Count convolution FLOPs the slow way: visit every output position and
    /// every kernel tap, two ops per visit.
    fn conv_flops_by_enumeration(kernel: u64, c_in: u64, c_out: u64, h: u64, w: u64) -> u64 {
        let mut ops = 0u64;
        for _ in 0..c_out {
            for _ in 0..h {
                for _ in 0..w {
                    for _ in 0..c_in {
                        for _ in 0..kernel {
                            for _ in 0..kernel {
                                ops += 2;
                            }
                        }
                    }
                }
            }
        }
        ops
    }

    fn layer(name: &str, kind: LayerKind, flops: u64, shape: &[u64], splittable: bool) -> LayerProfile {
        LayerProfile {
            name: name.into(),
            kind,
            flops,
            params: 10,
            output_shape: shape.to_vec(),
            bits_per_element: 32,
            splittable,
        }
    }

    fn small_profile() -> ModelProfile {
        ModelProfile {
            name: "tiny".into(),
            input: InputSpec {
                shape: vec![3, 32, 32],
                bits_per_element: 8,
            },
            result_bits: 64,
            input_compressed_bits: None,
            layers: vec![
                layer("conv1", LayerKind::Conv, 3_538_944, &[64, 32, 32], true),
                layer("relu1", LayerKind::Activation, 65_536, &[64, 32, 32], true),
                layer("fc", LayerKind::Fc, 10_240, &[10], true),
            ],
        }
    }

    #[test]
    fn conv_flops_matches_enumeration_oracle() {
        for (k, ci, co, h, w) in [(1, 1, 1, 1, 1), (3, 3, 64, 2, 2), (3, 16, 32, 8, 8), (5, 4, 7, 3, 2)] {
            assert_eq!(
                conv_flops(k, ci, co, h, w).unwrap(),
                conv_flops_by_enumeration(k, ci, co, h, w),
                "k={k} ci={ci} co={co} h={h} w={w}"
            );
        }
    }

    #[test]
    fn conv_flops_known_values() {
        assert_eq!(conv_flops(3, 3, 64, 32, 32).unwrap(), 3_538_944);
        assert_eq!(conv_flops(1, 1, 1, 1, 1).unwrap(), 2);
        assert_eq!(conv_flops(3, 16, 32, 8, 8).unwrap(), 589_824);
    }

    #[test]
    fn conv_flops_rejects_zero_dims_and_overflow() {
        assert!(matches!(
            conv_flops(0, 1, 1, 1, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            conv_flops(u64::MAX, 2, 2, 2, 2),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn feature_bits_at_endpoints_and_interior() {
        let p = small_profile();
        assert_eq!(p.feature_bits(0).unwrap(), 3 * 32 * 32 * 8);
        assert_eq!(p.feature_bits(1).unwrap(), 64 * 32 * 32 * 32);
        assert_eq!(p.feature_bits(3).unwrap(), 64);
    }

    #[test]
    fn split_index_out_of_range_is_reported() {
        let p = small_profile();
        assert!(matches!(
            p.feature_bits(4),
            Err(Error::IndexOutOfRange { index: 4, max: 3, .. })
        ));
        assert!(matches!(
            p.on_device_flops(99),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn on_device_flops_prefix_sums() {
        let p = small_profile();
        assert_eq!(p.on_device_flops(0).unwrap(), 0);
        assert_eq!(p.on_device_flops(1).unwrap(), 3_538_944);
        assert_eq!(p.on_device_flops(3).unwrap(), 3_538_944 + 65_536 + 10_240);
        assert_eq!(p.server_flops(0).unwrap(), p.on_device_flops(3).unwrap());
        assert_eq!(p.server_flops(3).unwrap(), 0);
    }

    #[test]
    fn on_device_flops_is_non_decreasing_in_split() {
        let mut rng = SeqRng::new(11);
        for _ in 0..50 {
            let n = 1 + rng.next_usize(8);
            let layers: Vec<LayerProfile> = (0..n)
                .map(|i| {
                    layer(
                        &format!("l{i}"),
                        LayerKind::Conv,
                        rng.next_u64() % 1_000_000,
                        &[1 + rng.next_u64() % 16, 4, 4],
                        true,
                    )
                })
                .collect();
            let p = ModelProfile {
                name: "rand".into(),
                input: InputSpec {
                    shape: vec![3, 4, 4],
                    bits_per_element: 8,
                },
                result_bits: 64,
                input_compressed_bits: None,
                layers,
            };
            let mut prev = 0;
            for split in 0..=p.len() {
                let f = p.on_device_flops(split).unwrap();
                assert!(f >= prev);
                prev = f;
            }
        }
    }

    #[test]
    fn amplification_reports_only_ratios_above_one_sorted_desc() {
        let p = small_profile();
        let points = p.amplification_points().unwrap();
        // conv1 and relu1 both blow 24,576 input bits up to 2,097,152.
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].split, 1);
        assert_eq!(points[1].split, 2);
        assert!((points[0].ratio - 2_097_152.0 / 24_576.0).abs() < 1e-12);
        assert!(points.windows(2).all(|w| w[0].ratio >= w[1].ratio));
    }

    #[test]
    fn amplification_is_empty_when_every_feature_is_tiny() {
        let mut p = small_profile();
        for l in &mut p.layers {
            l.output_shape = vec![1];
            l.bits_per_element = 8;
        }
        assert!(p.amplification_points().unwrap().is_empty());
    }

    #[test]
    fn amplification_excludes_exact_equality() {
        let mut p = small_profile();
        // One interior layer with exactly the input bit count: 3*32*32*8 bits.
        p.layers = vec![layer("same", LayerKind::Conv, 10, &[3 * 32 * 32], true)];
        p.layers[0].bits_per_element = 8;
        let points = p.amplification_points().unwrap();
        assert!(points.is_empty(), "equal-size feature must not be reported");
    }

    #[test]
    fn validation_rejects_bad_profiles() {
        let mut p = small_profile();
        p.layers.clear();
        assert!(matches!(p.validate(), Err(Error::Validation(_))));

        let mut p = small_profile();
        for l in &mut p.layers {
            l.splittable = false;
        }
        assert!(matches!(p.validate(), Err(Error::Validation(_))));

        let mut p = small_profile();
        p.layers[1].output_shape = vec![0, 4];
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("relu1"), "error should name the layer: {err}");

        let mut p = small_profile();
        p.layers[0].bits_per_element = 65;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("conv1"), "error should name the layer: {err}");

        let mut p = small_profile();
        p.layers[2].name = "conv1".into();
        assert!(matches!(p.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let dir = std::env::temp_dir().join(format!("edgeplan-profile-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.json");

        // Build the conv layer from the closed-form FLOP count, as a profile
        // generator would.
        let mut p = small_profile();
        p.layers[0].flops = conv_flops(3, 3, 64, 32, 32).unwrap();
        save_profile(&p, &path).unwrap();
        let loaded = load_profile(&path).unwrap();
        assert_eq!(p, loaded);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn load_reports_missing_file_and_parse_errors() {
        let missing = Path::new("/nonexistent/profile.json");
        assert!(matches!(load_profile(missing), Err(Error::Io { .. })));

        let dir = std::env::temp_dir().join(format!("edgeplan-parse-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, "{ not json").unwrap();
        let err = load_profile(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        // Parse errors carry position context from the JSON parser.
        assert!(err.to_string().contains("line"));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn negative_flops_fail_at_parse_time() {
        let text = r#"{
            "name": "bad", "input": {"shape": [1], "bits_per_element": 8},
            "layers": [{"name": "l", "kind": "conv", "flops": -5, "params": 0,
                        "output_shape": [1], "splittable": true}]
        }"#;
        let parsed: std::result::Result<ModelProfile, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn split_points_cover_endpoints_and_splittable_interiors() {
        let mut p = small_profile();
        p.layers[1].splittable = false;
        assert_eq!(p.split_points(), vec![0, 1, 3]);
    }
}
