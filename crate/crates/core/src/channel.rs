//! Link models: AWGN and binary symmetric channels plus a fixed-rate stand-in.
//!
//! Latency assumes transmission at the channel's capacity bound, which makes
//! every reported time a best case for any real coding scheme. Bit
//! corruption is driven by the counter RNG so corrupting a payload in
//! chunks, in parallel, or in any order gives identical results.

use serde::{Deserialize, Serialize};

use crate::codec::Codebook;
use crate::error::{Error, Result};
use crate::rng::unit_f64;

/// Channel description, as recorded in environment files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    Awgn { bandwidth_hz: f64, snr_db: f64 },
    Bsc { flip_prob: f64, symbol_rate: f64 },
    FixedRate { rate_bps: f64 },
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelSpec::Awgn {
                bandwidth_hz,
                snr_db,
            } => {
                if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "awgn bandwidth {bandwidth_hz} must be positive"
                    )));
                }
                if snr_db.is_nan() {
                    return Err(Error::InvalidArgument("awgn snr_db is NaN".into()));
                }
            }
            ChannelSpec::Bsc {
                flip_prob,
                symbol_rate,
            } => {
                check_flip_prob(flip_prob)?;
                if !(symbol_rate.is_finite() && symbol_rate > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "bsc symbol rate {symbol_rate} must be positive"
                    )));
                }
            }
            ChannelSpec::FixedRate { rate_bps } => {
                if !(rate_bps.is_finite() && rate_bps > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "fixed rate {rate_bps} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// AWGN capacity in bits/s: C = W * log2(1 + 10^(snr_db / 10)).
pub fn awgn_capacity(bandwidth_hz: f64, snr_db: f64) -> f64 {
    bandwidth_hz * (1.0 + 10f64.powf(snr_db / 10.0)).log2()
}

/// BSC capacity in bits per channel use: C = 1 - H2(p).
///
/// H2(0) is taken as 0 by continuity; p is limited to [0, 0.5].
pub fn bsc_capacity(flip_prob: f64) -> Result<f64> {
    check_flip_prob(flip_prob)?;
    Ok(1.0 - binary_entropy(flip_prob))
}

fn binary_entropy(p: f64) -> f64 {
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -(p * p.log2()) - (1.0 - p) * (1.0 - p).log2()
}

fn check_flip_prob(p: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "flip probability {p} outside [0, 0.5]"
        )));
    }
    Ok(())
}

/// Best-case delivery rate of a channel in bits/s.
pub fn effective_rate_bps(spec: &ChannelSpec) -> Result<f64> {
    spec.validate()?;
    Ok(match *spec {
        ChannelSpec::Awgn {
            bandwidth_hz,
            snr_db,
        } => awgn_capacity(bandwidth_hz, snr_db),
        ChannelSpec::Bsc {
            flip_prob,
            symbol_rate,
        } => bsc_capacity(flip_prob)? * symbol_rate,
        ChannelSpec::FixedRate { rate_bps } => rate_bps,
    })
}

/// Seconds to deliver a payload at the channel's effective rate.
///
/// Zero bits cost zero seconds on any channel; a zero-rate channel with a
/// non-empty payload is an unreachable-destination error, not infinity.
pub fn transmit_latency(bits: u64, spec: &ChannelSpec) -> Result<f64> {
    if bits == 0 {
        spec.validate()?;
        return Ok(0.0);
    }
    let rate = effective_rate_bps(spec)?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Unreachable { bits });
    }
    Ok(bits as f64 / rate)
}

/// Whether bit `bit_index` of the stream keyed by `seed` flips at rate `p`.
///
/// The decision depends only on (seed, bit_index, p); thresholding one shared
/// uniform draw also couples sweeps over p, so the flip set at a lower p is a
/// subset of the flip set at a higher one.
#[inline]
pub fn flip_decision(seed: u64, bit_index: u64, flip_prob: f64) -> bool {
    unit_f64(seed, bit_index) < flip_prob
}

/// Flip each of the first `bit_len` bits independently with probability `p`.
///
/// Bits are LSB-first within each byte. Determinism is positional: corrupting
/// a subrange with matching bit indices equals corrupting the whole payload.
pub fn corrupt_bits(payload: &[u8], bit_len: usize, flip_prob: f64, seed: u64) -> Result<Vec<u8>> {
    check_flip_prob(flip_prob)?;
    if bit_len > payload.len() * 8 {
        return Err(Error::InvalidArgument(format!(
            "bit length {bit_len} exceeds payload capacity {}",
            payload.len() * 8
        )));
    }
    let mut out = payload.to_vec();
    for i in 0..bit_len {
        if flip_decision(seed, i as u64, flip_prob) {
            out[i / 8] ^= 1 << (i % 8);
        }
    }
    Ok(out)
}

/// Binary-reflected Gray code of an index.
#[inline]
pub fn gray_encode(index: u32) -> u32 {
    index ^ (index >> 1)
}

/// Inverse of [`gray_encode`].
#[inline]
pub fn gray_decode(code: u32) -> u32 {
    let mut v = code;
    v ^= v >> 16;
    v ^= v >> 8;
    v ^= v >> 4;
    v ^= v >> 2;
    v ^= v >> 1;
    v
}

/// End-to-end quantize-transmit-dequantize distortion under a BSC.
///
/// Each sample is encoded to its codeword index, the Gray-coded index is sent
/// over a BSC with the given flip probabilities, and the corrupted index is
/// decoded back to a level. Returns (p, mean squared error) per probe, using
/// one shared bit stream so results are coupled across p values.
pub fn jscc_distortion_sweep(
    codebook: &Codebook,
    samples: &[f64],
    p_values: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    codebook.validate()?;
    if codebook.degenerate {
        return Err(Error::InvalidArgument(
            "degenerate codebook cannot be channel coded".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to transmit".into()));
    }
    for &p in p_values {
        check_flip_prob(p)?;
    }

    let bits = codebook.bits;
    let indices = codebook.encode(samples);
    let mut results = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let mut acc = 0.0;
        for (j, (&x, &idx)) in samples.iter().zip(&indices).enumerate() {
            let mut code = gray_encode(idx);
            for k in 0..bits {
                let bit_index = j as u64 * u64::from(bits) + u64::from(k);
                if flip_decision(seed, bit_index, p) {
                    code ^= 1 << k;
                }
            }
            let received = gray_decode(code) as usize;
            let q = codebook.levels[received];
            acc += (x - q) * (x - q);
        }
        results.push((p, acc / samples.len() as f64));
    }
    Ok(results)
}
