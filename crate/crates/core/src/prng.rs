//! Deterministic SplitMix64 generator shared by every stochastic component.
//!
//! Streams are reproducible across platforms. Components that need noise
//! independent of evaluation order derive a fresh generator per coordinate
//! with [`Prng::derive`].

use std::f64::consts::TAU;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn next_real(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Zero-mean normal sample with standard deviation `sigma` (Box–Muller).
    pub fn next_gaussian(&mut self, sigma: f64) -> f64 {
        let u1 = self.next_real();
        let u2 = self.next_real();
        if sigma == 0.0 {
            return 0.0;
        }
        // 1 - u1 lies in (0, 1], so the log is finite.
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        sigma * radius * (TAU * u2).cos()
    }

    /// Uniform integer in `[0, bound)`.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        // Lemire's multiply-shift; the bias is below 2^-64 * bound.
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Counter-based child generator: the result depends only on the seed
    /// and the key, never on how many draws were taken before.
    pub fn derive(seed: u64, key: &[u64]) -> Self {
        let mut h = mix64(seed ^ 0x6A09_E667_F3BC_C909);
        for &k in key {
            h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ mix64(k.wrapping_add(GOLDEN_GAMMA)));
        }
        Self::new(h)
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
