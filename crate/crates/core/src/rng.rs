//! Seeded, serializable random streams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream
//! derived from the run seed, so adding draws in one component never shifts
//! another component's sequence.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub mod stream {
    pub const DATA: u64 = 1;
    pub const CONDITIONS: u64 = 2;
    pub const POLICY_INIT: u64 = 3;
    pub const AE_INIT: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const AE_TRAIN: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const PROBE: u64 = 8;
}

#[derive(Clone, Debug)]
pub struct SeededRng(ChaCha8Rng);

/// Exact generator position: seed words, stream id and 128-bit word offset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u64; 4],
    pub stream: u64,
    pub word_pos: [u64; 2],
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Stream keyed by an extra index, e.g. an evaluation step.
    pub fn keyed(seed: u64, stream: u64, key: u64) -> Self {
        let mixed = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        Self::new(mixed, stream)
    }

    pub fn state(&self) -> RngState {
        let bytes = self.0.get_seed();
        let mut seed = [0u64; 4];
        for (i, w) in seed.iter_mut().enumerate() {
            *w = u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().expect("8 bytes"));
        }
        let pos = self.0.get_word_pos();
        RngState {
            seed,
            stream: self.0.get_stream(),
            word_pos: [pos as u64, (pos >> 64) as u64],
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut bytes = [0u8; 32];
        for (i, w) in state.seed.iter().enumerate() {
            bytes[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(state.stream);
        rng.set_word_pos(state.word_pos[0] as u128 | ((state.word_pos[1] as u128) << 64));
        Self(rng)
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
