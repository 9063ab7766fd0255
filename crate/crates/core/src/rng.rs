//! Reproducible parallel random streams.
//!
//! A run is identified by `(seed, workers)`. Trials are split into `workers`
//! contiguous chunks; chunk `w` draws from the ChaCha8 stream `w` of the
//! generator seeded with `seed`. Results are merged in worker order, so a
//! fixed `(seed, workers)` pair is bit-reproducible regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Generator for worker `worker` of a run seeded with `seed`.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

/// Trial counts per worker: `trials` split as evenly as possible, earlier
/// workers taking the remainder.
pub fn partition(trials: u64, workers: usize) -> Vec<u64> {
    let w = workers.max(1) as u64;
    (0..w).map(|i| trials / w + u64::from(i < trials % w)).collect()
}

/// Number of workers to use when the caller does not pin it.
pub fn default_workers() -> usize {
    rayon::current_num_threads().max(1)
}

/// Runs `work(rng, chunk_trials)` on every worker in parallel and returns the
/// per-worker results in worker order.
pub fn run_partitioned<T, F>(seed: u64, trials: u64, workers: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    partition(trials, workers)
        .into_par_iter()
        .enumerate()
        .map(|(w, chunk)| work(&mut worker_rng(seed, w), chunk))
        .collect()
}
