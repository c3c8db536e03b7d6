//! Parallel map over index ranges: rayon with `std`, sequential otherwise.
//!
//! Results are always collected in index order, so reductions built on top
//! are independent of task scheduling.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Apply `f` to disjoint mutable chunks of `out`, chunk `i` spanning
/// `bounds[i]..bounds[i + 1]`.
#[cfg(feature = "std")]
pub fn for_each_chunk<T, F>(out: &mut [T], bounds: &[usize], f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    let chunks = split_chunks(out, bounds);
    chunks.into_par_iter().for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "std"))]
pub fn for_each_chunk<T, F>(out: &mut [T], bounds: &[usize], f: F)
where
    F: Fn(usize, &mut [T]),
{
    for (i, c) in split_chunks(out, bounds) {
        f(i, c);
    }
}

fn split_chunks<'a, T>(mut out: &'a mut [T], bounds: &[usize]) -> Vec<(usize, &'a mut [T])> {
    let mut chunks = Vec::with_capacity(bounds.len().saturating_sub(1));
    for i in 0..bounds.len().saturating_sub(1) {
        let len = bounds[i + 1] - bounds[i];
        let (head, tail) = core::mem::take(&mut out).split_at_mut(len);
        chunks.push((i, head));
        out = tail;
    }
    chunks
}
