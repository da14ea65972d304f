//! Execution drivers for the data-parallel kernels.
//!
//! With the `parallel` feature (default) `Exec::Auto` runs on rayon;
//! without it, and always for `Exec::Seq`, the same closure runs in a plain
//! loop. Every kernel built on these drivers writes disjoint output chunks,
//! so the parallel and sequential paths are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Exec {
    Auto,
    Seq,
}

/// Apply `f` to consecutive `chunk`-sized pieces of `data`, passing the
/// chunk index.
pub(crate) fn for_each_chunk_mut<T, F>(exec: Exec, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Auto => data
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c)),
        #[cfg(not(feature = "parallel"))]
        Exec::Auto => data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
        Exec::Seq => data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
    }
}

/// Collect `f(0..n)` into a Vec, preserving index order.
pub(crate) fn map_collect<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Auto => (0..n).into_par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        Exec::Auto => (0..n).map(f).collect(),
        Exec::Seq => (0..n).map(f).collect(),
    }
}
