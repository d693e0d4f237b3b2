//! Deterministic data-parallel helpers.
//!
//! Work is split into fixed-size shards whose results are collected in shard
//! order, so every reduction is bit-identical whether it runs on the rayon
//! pool or sequentially. Building without the `parallel` feature turns
//! [`ExecMode::Parallel`] into a sequential loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Samples per shard for Monte Carlo loops. Part of the determinism contract:
/// changing it changes every seeded estimate.
pub const SHARD_SIZE: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Maps over a slice in fixed chunks and returns one result per chunk, in order.
pub fn map_chunks<S, T, F>(mode: ExecMode, items: &[S], chunk: usize, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&[S]) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n = items.len().div_ceil(chunk);
    map_indexed(mode, n, |i| {
        let lo = i * chunk;
        let hi = (lo + chunk).min(items.len());
        f(&items[lo..hi])
    })
}

/// Independent RNG stream for shard `shard` of a run seeded with `seed`.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Number of shards covering `samples` draws.
pub fn shard_count(samples: usize) -> usize {
    samples.div_ceil(SHARD_SIZE)
}

/// Sample range `[lo, hi)` handled by a shard.
pub fn shard_range(samples: usize, shard: usize) -> (usize, usize) {
    let lo = shard * SHARD_SIZE;
    (lo, (lo + SHARD_SIZE).min(samples))
}

/// Runs `f` on a pool with at most `workers` threads (0 = rayon default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(f);
            }
        }
    }
    let _ = workers;
    f()
}

/// Monte Carlo budget shared by the sampling routines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: ExecMode,
}

impl MonteCarlo {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            exec: ExecMode::default(),
        }
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    /// Same budget, different independent seed.
    pub fn reseed(&self, salt: u64) -> Self {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9))
            .rotate_left(17);
        Self {
            seed: mixed,
            ..*self
        }
    }
}
