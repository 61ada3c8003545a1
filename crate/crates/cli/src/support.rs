//! Shared plumbing: input resolution, atomic writes, metadata sidecars,
//! and the small flag grammars (ranges, lists, codec specs).

use std::env;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use edgeplan_core::codec::CodecConfig;

/// Environment variable naming a fallback base directory for relative
/// input paths that do not exist relative to the working directory.
pub const CONFIG_DIR_VAR: &str = "EDGEPLAN_CONFIG_DIR";

/// Resolve an input path, falling back to `$EDGEPLAN_CONFIG_DIR/<path>`.
pub fn resolve_input(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(base) = env::var_os(CONFIG_DIR_VAR) {
            let alt = Path::new(&base).join(path);
            if alt.exists() {
                return Ok(alt);
            }
        }
    }
    bail!(
        "input file not found: {} (cwd and ${} checked)",
        path.display(),
        CONFIG_DIR_VAR
    );
}

/// Write `bytes` to `path` atomically: a temp file in the same directory is
/// persisted over the target, so partial outputs are never visible.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file next to {}", path.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// SHA-256 of a file, hex encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

/// Reproducibility sidecar written next to every output artifact.
///
/// Records the tool version, seed, echoed parameters, and input digests —
/// everything needed to reproduce the artifact byte for byte. Deliberately
/// excludes wall-clock time and execution knobs (thread count, self-check)
/// that must not influence output bytes.
pub struct Meta {
    command: &'static str,
    seed: u64,
    inputs: Map<String, Value>,
    params: Map<String, Value>,
}

impl Meta {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Meta {
            command,
            seed,
            inputs: Map::new(),
            params: Map::new(),
        }
    }

    /// Record one input file: the path as given plus a content digest.
    pub fn input(mut self, role: &str, given: &Path, resolved: &Path) -> Result<Self> {
        self.inputs.insert(
            role.to_string(),
            json!({
                "path": given.display().to_string(),
                "sha256": sha256_file(resolved)?,
            }),
        );
        Ok(self)
    }

    /// Echo one parameter value.
    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Write `<out>.meta.json` next to the artifact at `out`.
    pub fn write_next_to(&self, out: &Path) -> Result<()> {
        let body = json!({
            "command": self.command,
            "inputs": Value::Object(self.inputs.clone()),
            "params": Value::Object(self.params.clone()),
            "seed": self.seed,
            "tool": {
                "name": "edgeplan",
                "version": env!("CARGO_PKG_VERSION"),
            },
        });
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        let path = out.with_file_name(name);
        let mut text = serde_json::to_string_pretty(&body)?;
        text.push('\n');
        atomic_write(&path, text.as_bytes())
    }
}

/// Parse `start:stop:{lin|log}:count` into an inclusive, exact-endpoint
/// sequence.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        bail!("range '{spec}' must look like start:stop:lin:count or start:stop:log:count");
    }
    let start: f64 = parts[0]
        .parse()
        .with_context(|| format!("range start '{}'", parts[0]))?;
    let stop: f64 = parts[1]
        .parse()
        .with_context(|| format!("range stop '{}'", parts[1]))?;
    let count: usize = parts[3]
        .parse()
        .with_context(|| format!("range count '{}'", parts[3]))?;
    if count == 0 {
        bail!("range '{spec}' needs at least one point");
    }
    if !start.is_finite() || !stop.is_finite() {
        bail!("range '{spec}' endpoints must be finite");
    }
    let log = match parts[2] {
        "lin" => false,
        "log" => true,
        other => bail!("range mode '{other}' must be lin or log"),
    };
    if log && (start <= 0.0 || stop <= 0.0) {
        bail!("log range '{spec}' needs positive endpoints");
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let t = i as f64 / (count - 1) as f64;
        let v = if log {
            start * (stop / start).powf(t)
        } else {
            start + (stop - start) * t
        };
        out.push(v);
    }
    // Pin the endpoints so float drift cannot shift them.
    out[0] = start;
    out[count - 1] = stop;
    Ok(out)
}

/// Parse a comma-separated list of floats.
pub fn parse_f64_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("number '{s}' in '{spec}'"))
        })
        .collect()
}

/// Parse a comma-separated list of indices.
pub fn parse_usize_list(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("index '{s}' in '{spec}'"))
        })
        .collect()
}

/// Parse a codec list: comma-separated `none` or `DIMxBITS[@OVERHEAD]`
/// entries, e.g. `none,64x4@100000,256x8`.
pub fn parse_codec_list(spec: &str) -> Result<Vec<Option<CodecConfig>>> {
    spec.split(',').map(|s| parse_codec(s.trim())).collect()
}

fn parse_codec(spec: &str) -> Result<Option<CodecConfig>> {
    if spec == "none" {
        return Ok(None);
    }
    let (dims, overhead) = match spec.split_once('@') {
        Some((head, ov)) => (
            head,
            ov.parse::<u64>()
                .with_context(|| format!("codec overhead in '{spec}'"))?,
        ),
        None => (spec, 0),
    };
    let (d, b) = dims
        .split_once('x')
        .with_context(|| format!("codec '{spec}' must look like DIMxBITS[@OVERHEAD] or none"))?;
    let reduced_dim = d
        .parse::<u64>()
        .with_context(|| format!("codec dimension in '{spec}'"))?;
    let quant_bits = b
        .parse::<u32>()
        .with_context(|| format!("codec bits in '{spec}'"))?;
    Ok(Some(CodecConfig {
        reduced_dim,
        quant_bits,
        encoder_flops_overhead: overhead,
    }))
}

/// Render one CSV row; values use Rust's shortest round-trip float display.
pub fn csv_row(fields: &[String]) -> String {
    let mut row = fields.join(",");
    row.push('\n');
    row
}
