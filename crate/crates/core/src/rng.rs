//! Deterministic random streams shared by every seeded component.
//!
//! The generator is PCG32 (PCG-XSH-RR, 64-bit state, 32-bit output) as in the
//! reference `pcg32_srandom_r`/`pcg32_random_r`, initialised with
//! `state = seed` and `stream = STREAM`. Every derived draw is built from
//! `next_u32` only, so any language with a PCG32 can reproduce the streams:
//!
//! * `next_u32`: one PCG32 output.
//! * `next_f64`: `hi = next_u32()`, `lo = next_u32()`,
//!   `((hi << 32 | lo) >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `below(n)`: the PCG reference bounded draw; `threshold = (2^32 - n) % n`,
//!   redraw until `r >= threshold`, return `r % n`. Unbiased.
//! * `standard_normal`: Box-Muller, `u1 = 1 - next_f64()`, `u2 = next_f64()`,
//!   `sqrt(-2 ln u1) * cos(2 pi u2)`. One pair of uniforms per sample.
//!
//! Sub-seeds are derived with [`derive_seed`], a SplitMix64 fold over the
//! parent seed and a list of salts.

use rand_core::Rng;
use rand_pcg::Pcg32;

/// PCG stream selector (`1442695040888963407 >> 1`, the PCG default).
pub const STREAM: u64 = 0x0a02_bdbf_7bb3_c0a7;

pub struct SeedRng {
    inner: Pcg32,
}

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Pcg32::new(seed, STREAM),
        }
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_f64(&mut self) -> f64 {
        let hi = u64::from(self.next_u32());
        let lo = u64::from(self.next_u32());
        ((hi << 32 | lo) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound`. `bound` must be nonzero.
    pub fn below(&mut self, bound: u32) -> u32 {
        assert!(bound > 0, "below() needs a positive bound");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u32();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Uniform index in `0..len` for collection sizes that fit in `u32`.
    pub fn index(&mut self, len: usize) -> usize {
        let bound = u32::try_from(len).expect("collection too large for a u32 draw");
        self.below(bound) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Bernoulli trial with success probability `p`, consuming one `next_f64`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `h = splitmix64(seed)`, then `h = splitmix64(h ^ salt)` for each salt.
pub fn derive_seed(seed: u64, salts: &[u64]) -> u64 {
    salts
        .iter()
        .fold(splitmix64(seed), |h, &salt| splitmix64(h ^ salt))
}
