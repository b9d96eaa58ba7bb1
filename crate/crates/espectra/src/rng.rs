//! Deterministic splittable random streams.
//!
//! Every random draw site (a mirrored entry pair, a diagonal entry, a trial
//! of an experiment) owns a private stream keyed by the master seed and the
//! site's coordinates. Sampling is therefore a pure function of the key:
//! matrices come out identical no matter how the fill loop is scheduled,
//! chunked, or parallelized.

use rand::RngCore;

pub(crate) const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer from splitmix64; bijective, avalanching.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapse a seed and a list of coordinates into one stream key.
///
/// The running state is re-mixed after each coordinate, so permuting the
/// coordinates or shifting values between adjacent ones changes the key.
pub fn stream_key(seed: u64, coords: &[u64]) -> u64 {
    let mut h = mix64(seed ^ GOLDEN_GAMMA);
    for &c in coords {
        h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ c);
    }
    h
}

/// splitmix64 generator: one word of state, cheap enough to construct per
/// matrix entry.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Stream addressed by `(seed, coords)`; see [`stream_key`].
    pub fn for_site(seed: u64, coords: &[u64]) -> Self {
        SplitMix64::new(stream_key(seed, coords))
    }

    #[inline]
    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        loop {
            // 53 random bits; reject exact zero so callers may take logs.
            let u = (self.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for SplitMix64 {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        let mut chunks = dst.chunks_exact_mut(8);
        for chunk in &mut chunks {
            chunk.copy_from_slice(&self.next().to_le_bytes());
        }
        let rem = chunks.into_remainder();
        if !rem.is_empty() {
            let w = self.next().to_le_bytes();
            rem.copy_from_slice(&w[..rem.len()]);
        }
    }
}
