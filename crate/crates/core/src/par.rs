//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same closures sequentially. Every helper writes disjoint
//! output slots and never reduces across threads, so results are bitwise
//! identical with and without the feature and for any pool size. Reductions
//! (norms, energies) are done by the callers in fixed index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of elements handed to one rayon task for pointwise work.
#[cfg(feature = "parallel")]
const MIN_POINTWISE: usize = 4096;

/// Applies `f(chunk_index, chunk)` to consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Collects `f(i)` for `i in 0..n`, preserving order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    (0..n).map(f).collect()
}

/// Pointwise `out[i] = f(i)` over a buffer of length `len`.
pub fn fill_indexed<F>(len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let mut out = vec![0.0; len];
    #[cfg(feature = "parallel")]
    out.par_iter_mut()
        .with_min_len(MIN_POINTWISE)
        .enumerate()
        .for_each(|(i, o)| *o = f(i));
    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    out
}

/// Pointwise `out[i] = f(i)` for arbitrary per-point records.
pub fn map_pointwise<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..len)
        .into_par_iter()
        .with_min_len(MIN_POINTWISE)
        .map(f)
        .collect();
    #[cfg(not(feature = "parallel"))]
    (0..len).map(f).collect()
}

/// Pointwise in-place update `f(i, &mut x[i])`.
pub fn update_indexed<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_iter_mut()
        .with_min_len(MIN_POINTWISE)
        .enumerate()
        .for_each(|(i, x)| f(i, x));
    #[cfg(not(feature = "parallel"))]
    data.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers_preserve_order() {
        let v = map_range(100, |i| i * i);
        assert_eq!(v[7], 49);
        let f = fill_indexed(10_000, |i| i as f64);
        assert_eq!(f[9_999], 9_999.0);
        let mut d = vec![1.0; 9000];
        update_indexed(&mut d, |i, x| *x += i as f64);
        assert_eq!(d[8999], 9000.0);
        let mut c = vec![0usize; 12];
        for_each_chunk(&mut c, 4, |k, ch| ch.iter_mut().for_each(|x| *x = k));
        assert_eq!(c, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }
}
