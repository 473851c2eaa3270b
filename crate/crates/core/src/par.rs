//! Data-parallel helpers with a sequential fallback.
//!
//! `workers` follows one convention everywhere in the crate:
//! `0` uses the global rayon pool, `1` runs on the calling thread and any
//! other value runs on a dedicated pool of that many threads. Without the
//! `parallel` feature every call is sequential. All helpers preserve output
//! order, so results never depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Computes `f(i)` for `i in 0..n`, in order.
pub(crate) fn map_range<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers != 1 && n > 1 {
            return install(workers, || (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Calls `f(chunk_index, chunk)` on consecutive `chunk`-sized pieces of `data`.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, workers: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if workers != 1 {
            install(workers, || {
                data.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(i, c)| f(i, c))
            });
            return;
        }
    }
    let _ = workers;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(feature = "parallel")]
fn install<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

/// Number of workers that the `0` convention resolves to.
pub fn available_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        for workers in [0, 1, 3] {
            let v = map_range(100, workers, |i| i * i);
            assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn chunks_cover_everything() {
        for workers in [0, 1, 2] {
            let mut data = vec![0usize; 10];
            for_each_chunk_mut(&mut data, 3, workers, |i, c| c.iter_mut().for_each(|x| *x = i));
            assert_eq!(data, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);
        }
        assert!(available_workers() >= 1);
    }
}
