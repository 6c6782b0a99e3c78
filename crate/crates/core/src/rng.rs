//! Deterministic random streams. A run is fully determined by its seed:
//! stream 0 drives between-chain moves and initialisation, stream `1 + i`
//! belongs to chain `i`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            seed,
            stream,
        }
    }

    /// The stream that coordinates a run (initialisation, exchange, crossover).
    pub fn master(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// The stream owned by chain `chain`.
    pub fn for_chain(seed: u64, chain: usize) -> Self {
        Self::new(seed, 1 + chain as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
