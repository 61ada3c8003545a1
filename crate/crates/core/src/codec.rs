//! Two-step task-oriented feature compression.
//!
//! Step one is a linear reducer fitted with the iterated power method
//! (principal directions with deflation); step two is a scalar codebook
//! fitted with the generalized Lloyd algorithm. Both run on recorded feature
//! samples and are cheap enough to deploy next to the split layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeqRng;

/// Row-major sample matrix: one row per recorded feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(
                "sample matrix needs at least one row and one column".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "sample matrix",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(SampleMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Mean-centered orthonormal projection fitted to feature samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReducer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Column means of the training samples.
    pub mean: Vec<f64>,
    /// `out_dim` orthonormal rows of length `in_dim`.
    pub projection: Vec<Vec<f64>>,
}

/// Scalar quantization codebook.
///
/// Levels are strictly increasing except for degenerate fits, where the
/// training data could not support 2^bits distinct levels and the flag below
/// is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    /// Wire width of one encoded symbol.
    pub bits: u32,
    /// Reproduction levels, sorted ascending.
    pub levels: Vec<f64>,
    /// Set when fitting collapsed below 2^bits distinct levels.
    #[serde(default)]
    pub degenerate: bool,
}

/// Codec choice evaluated by the deployment planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Feature dimension after linear reduction.
    pub reduced_dim: u64,
    /// Bits per transmitted symbol.
    pub quant_bits: u32,
    /// Extra on-device FLOPs spent running the encoder.
    pub encoder_flops_overhead: u64,
}

/// Bits on the wire for `element_count` symbols under this codec.
pub fn coded_feature_bits(config: &CodecConfig, element_count: u64) -> Result<u64> {
    element_count
        .checked_mul(u64::from(config.quant_bits))
        .ok_or(Error::Overflow("coded feature bits"))
}

const POWER_MAX_ITERS: usize = 500;
const POWER_TOL: f64 = 1e-12;
/// A component whose variance falls below this fraction of the leading
/// component's is treated as numerically rank-deficient.
const RANK_CUTOFF: f64 = 1e-9;

/// Fit a linear reducer to samples via the power method with deflation.
///
/// Deterministic: start vectors come from a fixed counter stream and each
/// component's sign is normalized. Errors with [`Error::DegenerateRank`]
/// when the samples cannot support `out_dim` independent directions.
pub fn fit_reducer(samples: &SampleMatrix, out_dim: usize) -> Result<LinearReducer> {
    let (n, d) = (samples.rows(), samples.cols());
    if out_dim == 0 || out_dim > d {
        return Err(Error::InvalidArgument(format!(
            "out_dim {out_dim} outside 1..={d}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(
            "fitting a reducer needs at least two samples".into(),
        ));
    }

    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(samples.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Centered data lives implicitly in `samples` minus `mean`; covariance
    // products are formed row by row so the d x d matrix never materializes.
    let centered_dot = |v: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for r in 0..n {
            let row = samples.row(r);
            let mut proj = 0.0;
            for j in 0..d {
                proj += (row[j] - mean[j]) * v[j];
            }
            for j in 0..d {
                out[j] += proj * (row[j] - mean[j]);
            }
        }
        let scale = 1.0 / (n as f64 - 1.0);
        out.iter_mut().for_each(|o| *o *= scale);
    };

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(out_dim);
    let mut leading_variance = 0.0;
    for c in 0..out_dim {
        let mut rng = SeqRng::new(0x5eed_c0de ^ c as u64);
        let mut v: Vec<f64> = (0..d).map(|_| rng.next_f64() - 0.5).collect();
        orthogonalize(&mut v, &rows);
        if normalize(&mut v) == 0.0 {
            return Err(Error::DegenerateRank {
                achieved: c,
                requested: out_dim,
            });
        }

        let mut next = vec![0.0; d];
        let mut variance = 0.0;
        for _ in 0..POWER_MAX_ITERS {
            centered_dot(&v, &mut next);
            orthogonalize(&mut next, &rows);
            variance = normalize(&mut next);
            if variance == 0.0 {
                break;
            }
            let drift: f64 = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut next);
            if drift < POWER_TOL {
                break;
            }
        }

        if c == 0 {
            leading_variance = variance;
        }
        let floor = (leading_variance * RANK_CUTOFF).max(f64::MIN_POSITIVE);
        if variance < floor {
            return Err(Error::DegenerateRank {
                achieved: c,
                requested: out_dim,
            });
        }
        canonical_sign(&mut v);
        rows.push(v);
    }

    Ok(LinearReducer {
        in_dim: d,
        out_dim,
        mean,
        projection: rows,
    })
}

fn orthogonalize(v: &mut [f64], rows: &[Vec<f64>]) {
    for row in rows {
        let dot: f64 = v.iter().zip(row).map(|(a, b)| a * b).sum();
        for (x, r) in v.iter_mut().zip(row) {
            *x -= dot * r;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Flip the vector so its largest-magnitude entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

impl LinearReducer {
    /// Check shape agreement and row orthonormality (tolerance 1e-6).
    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 || self.out_dim > self.in_dim {
            return Err(Error::Validation(format!(
                "reducer out_dim {} outside 1..={}",
                self.out_dim, self.in_dim
            )));
        }
        if self.mean.len() != self.in_dim || self.projection.len() != self.out_dim {
            return Err(Error::Validation(
                "reducer mean/projection shapes disagree with declared dims".into(),
            ));
        }
        for row in &self.projection {
            if row.len() != self.in_dim {
                return Err(Error::Validation(
                    "reducer projection row has the wrong length".into(),
                ));
            }
        }
        for i in 0..self.out_dim {
            for j in i..self.out_dim {
                let dot: f64 = self.projection[i]
                    .iter()
                    .zip(&self.projection[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-6 {
                    return Err(Error::Validation(format!(
                        "reducer rows {i} and {j} are not orthonormal (dot {dot})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// y = P (x - mean).
    pub fn reduce(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "reduce input",
                expected: self.in_dim,
                got: x.len(),
            });
        }
        Ok(self
            .projection
            .iter()
            .map(|row| {
                row.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((p, xi), m)| p * (xi - m))
                    .sum()
            })
            .collect())
    }

    /// x_hat = P^T y + mean.
    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.out_dim {
            return Err(Error::DimensionMismatch {
                context: "reconstruct input",
                expected: self.out_dim,
                got: y.len(),
            });
        }
        let mut x = self.mean.clone();
        for (row, &yi) in self.projection.iter().zip(y) {
            for (xj, &pj) in x.iter_mut().zip(row) {
                *xj += yi * pj;
            }
        }
        Ok(x)
    }

    /// Mean squared reconstruction error over a sample set.
    pub fn reconstruction_mse(&self, samples: &SampleMatrix) -> Result<f64> {
        let mut acc = 0.0;
        for r in 0..samples.rows() {
            let x = samples.row(r);
            let xh = self.reconstruct(&self.reduce(x)?)?;
            acc += x
                .iter()
                .zip(&xh)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok(acc / (samples.rows() * samples.cols()) as f64)
    }
}

/// Generalized Lloyd fit of a 2^bits-level scalar codebook.
pub fn fit_codebook(samples: &[f64], bits: u32, max_iters: usize, tol: f64) -> Result<Codebook> {
    fit_codebook_with_history(samples, bits, max_iters, tol).map(|(cb, _)| cb)
}

/// As [`fit_codebook`], also returning the per-iteration distortion history.
///
/// The history is non-increasing: assignment and centroid steps each only
/// ever lower the mean squared error.
pub fn fit_codebook_with_history(
    samples: &[f64],
    bits: u32,
    max_iters: usize,
    tol: f64,
) -> Result<(Codebook, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to quantize".into()));
    }
    if bits == 0 || bits > 24 {
        return Err(Error::InvalidArgument(format!(
            "codebook bits {bits} outside 1..=24"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let levels_wanted = 1usize << bits;

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Quantile seeding spreads the initial levels over the empirical range.
    let mut levels: Vec<f64> = (0..levels_wanted)
        .map(|j| {
            let idx = ((j as f64 + 0.5) * sorted.len() as f64 / levels_wanted as f64) as usize;
            sorted[idx.min(sorted.len() - 1)]
        })
        .collect();

    let mut history = Vec::new();
    let mut prev_distortion = f64::INFINITY;
    for _ in 0..max_iters.max(1) {
        // Assignment step.
        let mut sums = vec![0.0f64; levels.len()];
        let mut counts = vec![0usize; levels.len()];
        let mut distortion = 0.0;
        let mut worst: Vec<(f64, usize)> = Vec::new(); // (sq error, sample idx)
        for (i, &x) in samples.iter().enumerate() {
            let cell = nearest_level(&levels, x);
            let err = (x - levels[cell]) * (x - levels[cell]);
            sums[cell] += x;
            counts[cell] += 1;
            distortion += err;
            if err > 0.0 {
                worst.push((err, i));
            }
        }
        distortion /= samples.len() as f64;
        history.push(distortion);

        let improvement = prev_distortion - distortion;
        prev_distortion = distortion;

        // Centroid update; empty cells re-seed at the worst-quantized samples.
        worst.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut reseed = worst.into_iter();
        for (j, level) in levels.iter_mut().enumerate() {
            if counts[j] > 0 {
                *level = sums[j] / counts[j] as f64;
            } else if let Some((_, idx)) = reseed.next() {
                *level = samples[idx];
            }
        }
        levels.sort_by(f64::total_cmp);

        if improvement.abs() < tol {
            break;
        }
    }

    // Collapse duplicate levels; a shortfall marks the codebook degenerate.
    levels.dedup();
    let degenerate = levels.len() < levels_wanted;
    let codebook = Codebook {
        bits,
        levels,
        degenerate,
    };

    let final_distortion = codebook.distortion(samples);
    history.push(final_distortion);
    Ok((codebook, history))
}

fn nearest_level(levels: &[f64], x: f64) -> usize {
    debug_assert!(!levels.is_empty());
    let mut lo = match levels.binary_search_by(|l| l.total_cmp(&x)) {
        Ok(i) => return i,
        Err(i) => i,
    };
    if lo == levels.len() {
        lo = levels.len() - 1;
    } else if lo > 0 {
        // Equidistant values take the lower index.
        let below = lo - 1;
        if (x - levels[below]).abs() <= (levels[lo] - x).abs() {
            lo = below;
        }
    }
    lo
}

impl Codebook {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Validation("codebook has no levels".into()));
        }
        if self.bits == 0 || self.bits > 24 {
            return Err(Error::Validation(format!(
                "codebook bits {} outside 1..=24",
                self.bits
            )));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("codebook levels must be finite".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "codebook levels must be strictly increasing".into(),
            ));
        }
        if !self.degenerate && self.levels.len() != 1usize << self.bits {
            return Err(Error::Validation(format!(
                "codebook declares {} bits but holds {} levels",
                self.bits,
                self.levels.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Nearest-level index for every value; ties go to the lower index.
    pub fn encode(&self, values: &[f64]) -> Vec<u32> {
        values
            .iter()
            .map(|&x| nearest_level(&self.levels, x) as u32)
            .collect()
    }

    pub fn decode(&self, indices: &[u32]) -> Result<Vec<f64>> {
        indices
            .iter()
            .map(|&i| {
                self.levels.get(i as usize).copied().ok_or(Error::IndexOutOfRange {
                    what: "codeword",
                    index: i as usize,
                    max: self.levels.len() - 1,
                })
            })
            .collect()
    }

    /// Mean squared quantization error over a sample set.
    pub fn distortion(&self, samples: &[f64]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        samples
            .iter()
            .map(|&x| {
                let q = self.levels[nearest_level(&self.levels, x)];
                (x - q) * (x - q)
            })
            .sum::<f64>()
            / samples.len() as f64
    }
}
