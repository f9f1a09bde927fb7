//! Deterministic counter-based random numbers for the experiment harness.
//!
//! The generator is SplitMix64 used in counter mode: draw `i` of the stream
//! keyed by `seed` is
//!
//! ```text
//! out(seed, i) = mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! with the standard finalizer (xor-shift 30 / mul 0xBF58476D1CE4E5B9 /
//! xor-shift 27 / mul 0x94D049BB133111EB / xor-shift 31). Every draw is a
//! pure function of `(seed, counter)`, so streams can be replayed, split per
//! run (`seed ^ run_index`) and reproduced in any language from this
//! description alone. Uniform doubles use the top 53 bits scaled by 2^-53.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: seed,
            counter: 0,
        }
    }

    /// Stream for run `index` derived from a base seed (`seed ^ index`).
    pub fn for_run(seed: u64, index: u64) -> Self {
        Self::new(seed ^ index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(
            self.key
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform draw in `[0, 1)` with 53-bit mantissa resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
