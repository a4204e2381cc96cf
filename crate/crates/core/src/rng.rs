//! Seeded, splittable randomness.
//!
//! Every randomized operation in this crate takes an explicit [`RngStream`].
//! A stream is fully determined by `(seed, stream_id)`, so replications can
//! fan out across workers (one stream per replication) and still reproduce
//! bit-for-bit regardless of scheduling. The generator is ChaCha8, which is
//! counter-based: no OS entropy, identical output on every platform
//! including wasm.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { rng, seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream with a new stream id derived from `(stream_id, tag)`.
    /// Children with distinct tags never overlap with each other or with
    /// the parent.
    pub fn substream(&self, tag: u64) -> Self {
        RngStream::new(self.seed, splitmix(self.stream_id ^ splitmix(tag)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53-bit resolution.
    pub fn unit(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        bits as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`; safe as a `log` or inverse-CDF argument.
    pub fn unit_open_low(&mut self) -> f64 {
        let bits = (self.rng.next_u64() >> 11) + 1;
        bits as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform index in `0..n`, unbiased (Lemire rejection).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.rng.next_u64();
            let m = (x as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
