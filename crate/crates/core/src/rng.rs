//! Counter-based random number generation.
//!
//! Every draw is a pure function of `(seed, substream, counters...)`, so
//! simulations are reproducible for any worker count and any evaluation
//! order, and a stored seed is enough to regenerate any increment later.
//! Not cryptographically secure.

/// SplitMix64 finalizer; full-period bijective mixer on `u64`.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named substreams so distinct uses of one run seed never collide.
pub mod substream {
    pub const SIMULATION: u64 = 0x53_49_4d; // "SIM"
    pub const VALIDATION: u64 = 0x56_41_4c; // "VAL"
    pub const TESTING: u64 = 0x54_45_53; // "TES"
}

/// Stateless keyed generator addressed by up to three counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, sub: u64) -> Self {
        let key = mix64(mix64(seed).wrapping_add(mix64(sub ^ 0xA5A5_A5A5_A5A5_A5A5)));
        Self { key }
    }

    #[inline(always)]
    fn word(&self, a: u64, b: u64, c: u64) -> u64 {
        mix64(mix64(mix64(self.key.wrapping_add(a)).wrapping_add(b)).wrapping_add(c))
    }

    /// Uniform in `[0, 1)`.
    #[inline(always)]
    pub fn uniform(&self, a: u64, b: u64, c: u64) -> f64 {
        (self.word(a, b, c) >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller on two derived words.
    #[inline(always)]
    pub fn normal(&self, a: u64, b: u64, c: u64) -> f64 {
        let w = self.word(a, b, c);
        let u1 = ((w >> 11) + 1) as f64 * (1.0 / 9007199254740992.0); // (0, 1]
        let u2 = (mix64(w ^ 0x6A09_E667_F3BC_C909) >> 11) as f64 * (1.0 / 9007199254740992.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)`.
    #[inline(always)]
    pub fn index(&self, a: u64, b: u64, c: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.word(a, b, c) % n as u64) as usize
    }
}
