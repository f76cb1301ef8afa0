//! Counter-based randomness.
//!
//! Every random draw in the crate is a pure function of a master seed and a
//! tuple of counters (edge, round, slot, ...), hashed with the SplitMix64
//! finalizer. Any draw can be reproduced without replaying its predecessors,
//! and the output is identical on every platform.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `z + GOLDEN_GAMMA`.
#[inline]
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed together with an ordered list of counters.
#[inline]
pub fn hash_counters(seed: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &c in counters {
        h = splitmix64(h ^ c);
    }
    h
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn unit_f64(seed: u64, counters: &[u64]) -> f64 {
    (hash_counters(seed, counters) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sub-seed for Monte Carlo trial `trial` of an experiment keyed by `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    hash_counters(master, &[0x7472_6961_6c00_0000, trial])
}

/// Small sequential generator for places that just need a stream of draws
/// (random graphs, random initial conditions). Still counter based: the
/// `i`-th output is `hash_counters(seed, [stream, i])`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
    index: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            stream,
            index: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = hash_counters(self.seed, &[self.stream, self.index]);
        self.index += 1;
        out
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
