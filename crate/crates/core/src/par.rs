//! Data-parallel map with a sequential fallback when the `parallel` feature
//! is off. Results come back in input order, so downstream reductions are
//! deterministic regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Index of the minimum by `key`, ties resolved toward the smaller index.
pub fn argmin_by_key<T, K: PartialOrd, F: Fn(&T) -> K>(items: &[T], key: F) -> Option<usize> {
    let mut best: Option<(usize, K)> = None;
    for (i, it) in items.iter().enumerate() {
        let k = key(it);
        let improves = match &best {
            Some((_, bk)) => k < *bk,
            None => true,
        };
        if improves {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i)
}
