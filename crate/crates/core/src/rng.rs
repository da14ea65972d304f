//! Deterministic counter-based random number generation.
//!
//! Two flavours are provided, both built on the splitmix64 finalizer:
//!
//! - [`keyed_u64`] is a stateless draw keyed by `(seed, word, word, word)`.
//!   Per-pixel photon sampling keys its stream by `(seed, channel/frame, x,
//!   y)`, which makes frame sampling order-independent: a single pixel
//!   exposed in isolation sees exactly the same bits as the same pixel
//!   inside a full-frame sweep, and parallel schedules cannot change the
//!   output.
//! - [`SplitMix64`] is a tiny sequential stream for places where a plain
//!   ordered stream is the natural fit (scene synthesis, test harnesses).
//!
//! Not cryptographically secure; never use for secrets.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const WORD_SALT: u64 = 0xA24B_AED4_963E_E407;

/// splitmix64 finalizer (Stafford mix 13). Bijective with full avalanche.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless draw keyed by a seed and three words. Each word is folded in
/// through a bijective step, so distinct keys give distinct streams.
#[inline(always)]
pub fn keyed_u64(seed: u64, words: [u64; 3]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN_GAMMA));
    for w in words {
        h = mix64(h ^ w.wrapping_mul(WORD_SALT));
    }
    h
}

/// Map a raw draw to a uniform f64 in `[0, 1)` using the top 53 bits.
#[inline(always)]
pub fn unit_f64(draw: u64) -> f64 {
    (draw >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Map a raw draw to `[0, n)` by fixed-point multiply. Bias is O(n / 2^64).
#[inline(always)]
pub fn u64_below(draw: u64, n: u64) -> u64 {
    ((draw as u128 * n as u128) >> 64) as u64
}

/// Small sequential stream: `state += gamma; mix(state)`.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        u64_below(self.next_u64(), n)
    }

    /// Derive an independent stream; used to split per-task seeds.
    pub fn split(&mut self) -> SplitMix64 {
        SplitMix64::new(mix64(self.next_u64()))
    }
}
