//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they fall
//! back to sequential iterators. Results are collected in input order and
//! reductions are done sequentially over fixed-size chunk results, so the
//! floating-point output does not depend on the thread count or the feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for chunked reductions. Part of the numeric contract:
/// changing it changes summation order.
pub const REDUCE_CHUNK: usize = 64;

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps over `0..n`, possibly in parallel.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible order-preserving map; returns the first error by input position.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

/// Applies `f` to consecutive chunks of [`REDUCE_CHUNK`] items and returns
/// the per-chunk results in order.
pub fn map_chunks<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_chunks(REDUCE_CHUNK).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.chunks(REDUCE_CHUNK).map(f).collect()
    }
}

/// Sums chunk-local vectors (all of length `len`) in chunk order.
pub fn sum_chunked<T, F>(items: &[T], len: usize, f: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&[T], &mut [f64]) + Sync + Send,
{
    let partials = map_chunks(items, |chunk| {
        let mut acc = vec![0.0; len];
        f(chunk, &mut acc);
        acc
    });
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
