//! Worker-count control and order-fixed reductions.
//!
//! Results never depend on the number of workers: parallel stages produce
//! values indexed by task, and the reductions below combine them in a fixed
//! tree shape over that index.

use std::ops::Add;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "BAYESMET_THREADS";

/// Worker count requested through [`THREADS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` on a dedicated pool with `workers` threads, or on the global
/// pool when `workers` is `None`.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("failed to build worker pool")
            .install(f),
        None => f(),
    }
}

/// Sums `items` with a balanced binary tree over their index.
///
/// Returns `None` for an empty slice.
pub fn pairwise_reduce<T>(items: &[T]) -> Option<T>
where
    T: Clone,
    for<'a> &'a T: Add<&'a T, Output = T>,
{
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let (lo, hi) = items.split_at(n / 2);
            let a = pairwise_reduce(lo)?;
            let b = pairwise_reduce(hi)?;
            Some(&a + &b)
        }
    }
}

/// [`pairwise_reduce`] specialised to `f64`, with `0.0` for empty input.
pub fn pairwise_sum(items: &[f64]) -> f64 {
    match items.len() {
        0 => 0.0,
        1 => items[0],
        n => {
            let (lo, hi) = items.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}
