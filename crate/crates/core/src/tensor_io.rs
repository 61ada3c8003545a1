//! Flat binary tensor container with a JSON sidecar.
//!
//! The data file holds raw little-endian f32 values back to back; the
//! sidecar (`<data file>.json`) records layer names, dims, dtype, and byte
//! offsets. Feature sample sets reuse the same container as a single
//! two-dimensional tensor.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::SampleMatrix;
use crate::error::{Error, Result};
use crate::pruning::WeightTensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    layer_name: String,
    dims: Vec<usize>,
    dtype: String,
    byte_offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    tensors: Vec<TensorEntry>,
}

/// Sidecar path for a data file: the data path with `.json` appended.
pub fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut os = data_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Write tensors tightly packed, plus their sidecar.
pub fn write_tensors(data_path: &Path, tensors: &[WeightTensor]) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut bytes = Vec::new();
    for t in tensors {
        t.validate()?;
        entries.push(TensorEntry {
            layer_name: t.layer_name.clone(),
            dims: t.dims.clone(),
            dtype: "f32".into(),
            byte_offset: bytes.len() as u64,
        });
        for v in &t.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(data_path, &bytes).map_err(|source| Error::Io {
        path: data_path.to_path_buf(),
        source,
    })?;
    let sidecar = sidecar_path(data_path);
    let text = serde_json::to_string_pretty(&Sidecar { tensors: entries }).expect("serializes");
    fs::write(&sidecar, text).map_err(|source| Error::Io {
        path: sidecar,
        source,
    })
}

/// Read every tensor described by the sidecar of `data_path`.
pub fn read_tensors(data_path: &Path) -> Result<Vec<WeightTensor>> {
    let bytes = fs::read(data_path).map_err(|source| Error::Io {
        path: data_path.to_path_buf(),
        source,
    })?;
    let sidecar = sidecar_path(data_path);
    let text = fs::read_to_string(&sidecar).map_err(|source| Error::Io {
        path: sidecar.clone(),
        source,
    })?;
    let parsed: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: sidecar.clone(),
        detail: e.to_string(),
    })?;

    let mut tensors = Vec::with_capacity(parsed.tensors.len());
    for entry in parsed.tensors {
        if entry.dtype != "f32" {
            return Err(Error::Parse {
                path: sidecar.clone(),
                detail: format!(
                    "tensor {}: unsupported dtype {}",
                    entry.layer_name, entry.dtype
                ),
            });
        }
        let count: usize = entry.dims.iter().product();
        let start = entry.byte_offset as usize;
        let end = start + count * 4;
        if entry.dims.is_empty() || end > bytes.len() {
            return Err(Error::Parse {
                path: sidecar.clone(),
                detail: format!(
                    "tensor {}: dims {:?} at offset {} overrun the data file ({} bytes)",
                    entry.layer_name,
                    entry.dims,
                    entry.byte_offset,
                    bytes.len()
                ),
            });
        }
        let values: Vec<f32> = bytes[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(WeightTensor::new(entry.layer_name, entry.dims, values)?);
    }
    Ok(tensors)
}

/// Store a feature sample matrix as a single [rows, cols] tensor.
pub fn write_samples(data_path: &Path, samples: &SampleMatrix) -> Result<()> {
    let tensor = WeightTensor::new(
        "samples",
        vec![samples.rows(), samples.cols()],
        samples.data().iter().map(|&v| v as f32).collect(),
    )?;
    write_tensors(data_path, &[tensor])
}

/// Read a feature sample matrix written by [`write_samples`].
pub fn read_samples(data_path: &Path) -> Result<SampleMatrix> {
    let tensors = read_tensors(data_path)?;
    let tensor = tensors.into_iter().next().ok_or_else(|| Error::Parse {
        path: data_path.to_path_buf(),
        detail: "container holds no tensors".into(),
    })?;
    if tensor.dims.len() != 2 {
        return Err(Error::Parse {
            path: data_path.to_path_buf(),
            detail: format!(
                "expected a [rows, cols] sample tensor, found dims {:?}",
                tensor.dims
            ),
        });
    }
    SampleMatrix::new(
        tensor.dims[0],
        tensor.dims[1],
        tensor.values.iter().map(|&v| f64::from(v)).collect(),
    )
}
