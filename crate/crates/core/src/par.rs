//! Data-parallel helpers.
//!
//! With the `rayon` feature these fan out over the global thread pool; without
//! it they run on the calling thread. Reductions always sum fixed-size chunks
//! in index order, so both builds produce bit-identical floating point results.

#[cfg(feature = "rayon")]
use rayon::prelude::*;

/// Chunk length for reductions and for splitting small workloads.
pub const CHUNK: usize = 2048;

/// `f(0..n)` collected in order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "rayon")]
    {
        if n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// `f` applied to each element, collected in order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "rayon")]
    {
        if items.len() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Calls `f(i, &mut out[i])` for every slot.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "rayon")]
    {
        if out.len() > CHUNK {
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    f(c * CHUNK + k, slot);
                }
            });
            return;
        }
    }
    for (i, slot) in out.iter_mut().enumerate() {
        f(i, slot);
    }
}

/// Deterministic sum of `f(0..n)`.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| -> f64 {
        let end = ((c + 1) * CHUNK).min(n);
        (c * CHUNK..end).map(&f).sum()
    };
    #[cfg(feature = "rayon")]
    let partials: Vec<f64> = if chunks > 1 {
        (0..chunks).into_par_iter().map(partial).collect()
    } else {
        (0..chunks).map(partial).collect()
    };
    #[cfg(not(feature = "rayon"))]
    let partials: Vec<f64> = (0..chunks).map(partial).collect();
    partials.iter().sum()
}

/// Deterministic dot product.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    sum_indexed(x.len(), |i| x[i] * y[i])
}

/// True when the crate was built with the parallel backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "rayon")
}
