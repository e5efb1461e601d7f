//! Deterministic pseudo-random numbers for sampling stages.
//!
//! All stochastic stages (oracle sampling, parameter sampling, falsification
//! trials) derive their streams from a root seed through [`mix`], so results
//! are independent of scheduling and identical across platforms and builds.

/// SplitMix64 stream. Small state, full 64-bit period, good enough for
/// rejection sampling; not cryptographic.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Log-uniform magnitude in [1e-2, 1e2].
    pub fn log_uniform(&mut self) -> f64 {
        10f64.powf(self.next_f64() * 4.0 - 2.0)
    }

    pub fn next_bool(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }
}

/// Derive an independent child seed from a root seed and an index.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut r = Rng::new(seed ^ index.wrapping_mul(0xa076_1d64_78bd_642f));
    r.next_u64()
}
