//! Execution of independent analysis tasks.
//!
//! All heavy loops in this crate (metric cells, bootstrap resamples,
//! synthetic subjects) are embarrassingly parallel and indexed, so results
//! are collected in index order and are identical whichever path runs them.
//! With the `parallel` feature (default) tasks run on the current rayon
//! pool; without it, [`map_indexed`] is the sequential fallback itself.

/// Maps `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference path, always available. Benchmarks compare this
/// against the parallel dispatch; outputs must be identical.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
