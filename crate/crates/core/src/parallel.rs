//! Fixed-size worker pools.
//!
//! Work is handed to a dedicated rayon pool of exactly `workers` threads.
//! Callers only use order-preserving combinators (`par_iter().map().collect()`)
//! and never draw random numbers inside a task, so results do not depend on
//! the worker count or on scheduling.

use rayon::ThreadPoolBuilder;

/// Runs `op` inside a pool of `workers` threads (at least one).
pub fn install<R, F>(workers: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(op),
        // Thread creation can fail under tight limits; the work is the same inline.
        Err(_) => op(),
    }
}

/// Worker count from the machine, used when nothing else is configured.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
