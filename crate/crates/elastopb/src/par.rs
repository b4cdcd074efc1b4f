//! Deterministic data-parallel helpers.
//!
//! With the `parallel` feature the inner loops run on rayon; without it they
//! fall back to sequential iteration. Reductions are always performed in a
//! fixed order (chunked partial sums combined sequentially) so that results
//! are bitwise identical regardless of thread count or feature selection.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const CHUNK: usize = 1024;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Dot product with fixed-order chunked reduction.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partials: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            a.par_chunks(CHUNK)
                .zip(b.par_chunks(CHUNK))
                .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum())
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            a.chunks(CHUNK)
                .zip(b.chunks(CHUNK))
                .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum())
                .collect()
        }
    };
    partials.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
