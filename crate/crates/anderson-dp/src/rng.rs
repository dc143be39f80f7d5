//! Pinned PRNG for reproducible benchmark generation.
//!
//! SplitMix64 (Steele, Lea & Flood 2014; constants as published in the
//! reference implementation). The generator, the float mapping, and the
//! bounded-integer rejection scheme below are part of the repository's
//! determinism contract: any reimplementation that follows them produces
//! byte-identical Garnet instances for the same seed.

/// SplitMix64 stream. `next_u64` advances the state by the golden-ratio
/// increment and finalizes with the published mix constants.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound) by rejection, unbiased for any bound.
    pub fn next_bounded(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        // Reject the low `threshold` values so the remaining range is a
        // multiple of `bound`.
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }
}
