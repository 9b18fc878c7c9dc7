//! Data-parallel helper for embarrassingly parallel trial loops.
//!
//! With the `parallel` feature (default) the closure runs on the rayon pool;
//! without it the same loop runs sequentially. Results are collected in index
//! order either way, so downstream folds are deterministic regardless of the
//! execution mode.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
