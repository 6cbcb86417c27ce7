//! Counter-based random streams.
//!
//! Every random draw in the library comes from a pure function of a key
//! (seed, channel, particle index, step counter, draw counter). Streams carry
//! no hidden state beyond the draw counter, so any worker can regenerate any
//! particle's noise for any step independently: parallel and serial execution
//! consume identical randomness, and reruns are bit-identical.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a tuple of key parts into a stream base. Order-sensitive.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        h = splitmix64(h.wrapping_add(p).wrapping_add(GOLDEN));
    }
    h
}

/// Purposes a stream can be drawn for. Part of the key, so the same
/// (particle, step) can receive several independent draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    PositionInit = 1,
    VelocityInit = 2,
    /// Diffusion toward the local best (B1).
    NoiseMemory = 3,
    /// Diffusion toward the consensus point (B2); also the memoryless noise.
    NoiseConsensus = 4,
    /// Stagnation kicks.
    Kick = 5,
    DataShuffle = 6,
    ParticleShuffle = 7,
}

/// A keyed counter stream.
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    base: u64,
    ctr: u64,
}

impl Stream {
    pub fn new(parts: &[u64]) -> Stream {
        Stream { base: mix(parts), ctr: 0 }
    }

    /// Stream for one particle's draws on one channel at one step.
    pub fn for_particle(seed: u64, channel: Channel, particle: u64, step: u64) -> Stream {
        Stream::new(&[seed, channel as u64, particle, step])
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(1);
        splitmix64(self.base.wrapping_add(self.ctr.wrapping_mul(GOLDEN)))
    }

    /// Uniform in (0, 1].
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Two independent standard normals (Box-Muller).
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        (r * th.cos(), r * th.sin())
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    /// Fill with standard normals; consumes a fixed number of draws
    /// (two per pair, the last half-pair discarded for odd lengths).
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        let mut i = 0;
        while i + 1 < out.len() {
            let (a, b) = self.normal_pair();
            out[i] = a;
            out[i + 1] = b;
            i += 2;
        }
        if i < out.len() {
            out[i] = self.normal_pair().0;
        }
    }

    /// Uniform integer in [0, n). Multiply-shift map; the O(n/2^64) bias is
    /// irrelevant here and the draw count stays fixed.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}
