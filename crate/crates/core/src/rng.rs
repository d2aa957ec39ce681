//! Seeded, reproducible random streams.
//!
//! Fold assignment and bootstrap resampling must give the same answer in any
//! implementation, so the generator is spelled out here rather than borrowed
//! from a crate whose algorithms may change between releases.
//!
//! * Generator: SplitMix64 (Steele, Lea & Flood 2014). State advances by
//!   `0x9E3779B97F4A7C15`; output is the state passed through the
//!   `mix64` finalizer below.
//! * Streams: `Stream::new(seed, stream)` starts from state
//!   `mix64(seed) ^ mix64(stream ^ 0xD1B54A32D192ED03)`, so each
//!   `(seed, stream)` pair is an independent sequence.
//! * Bounded integers: `below(n)` draws `x` and rejects while
//!   `x >= 2^64 - (2^64 mod n)`, then returns `x mod n` (unbiased).
//! * Shuffle: Fisher-Yates from the back, `i = len-1 down to 1`,
//!   swapping `i` with `below(i + 1)`.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_KEY: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Stream {
            state: mix64(seed) ^ mix64(stream ^ STREAM_KEY),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
