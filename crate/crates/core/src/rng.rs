//! Deterministic counter-based random numbers.
//!
//! Every draw is a pure function of a (seed, index) pair, so a stream can be
//! evaluated out of order, in chunks, or in parallel and still agree
//! bit-for-bit with a serial pass. All simulation randomness in this crate
//! goes through here; nothing reads OS entropy.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer applied to the (seed, index) pair.
#[inline]
pub fn mix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) from the (seed, index) pair, 53-bit resolution.
#[inline]
pub fn unit_f64(seed: u64, index: u64) -> f64 {
    (mix64(seed, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential convenience wrapper over the counter stream.
#[derive(Debug, Clone)]
pub struct SeqRng {
    seed: u64,
    counter: u64,
}

impl SeqRng {
    pub fn new(seed: u64) -> Self {
        SeqRng { seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        let v = unit_f64(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in 0..bound. Modulo bias is irrelevant at the bounds used here.
    pub fn next_usize(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
