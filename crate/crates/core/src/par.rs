//! Order-preserving data-parallel helpers.
//!
//! Every helper returns results in index order, so callers that reduce the
//! output sequentially get bit-identical answers with or without the
//! `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, possibly in parallel.
#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel.
#[cfg(feature = "parallel")]
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Maps fixed-size chunks of `items`. Chunk boundaries do not depend on the
/// thread count.
#[cfg(feature = "parallel")]
pub fn map_chunks<A, T, F>(items: &[A], chunk: usize, f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&[A]) -> T + Sync + Send,
{
    items.par_chunks(chunk.max(1)).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_chunks<A, T, F>(items: &[A], chunk: usize, f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&[A]) -> T + Sync + Send,
{
    items.chunks(chunk.max(1)).map(f).collect()
}
