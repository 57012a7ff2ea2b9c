//! Thin data-parallel layer.
//!
//! With the `parallel` feature these helpers dispatch to rayon; without it they run the
//! same closures sequentially. Every helper writes each output slot from exactly one
//! closure invocation, so results never depend on the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the sequential path is used even when rayon is available.
const MIN_PARALLEL_LEN: usize = 64;

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is always `0..n`.
///
/// Meant for coarse work items (angles, chains), so no minimum length applies.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Fill `out[i] = f(i)` for every index.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= MIN_PARALLEL_LEN {
            out.par_iter_mut()
                .with_min_len(MIN_PARALLEL_LEN)
                .enumerate()
                .for_each(|(i, o)| *o = f(i));
            return;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Apply `f(chunk_index, chunk)` to consecutive `chunk_len`-sized pieces of `out`.
pub fn for_each_chunk_mut<T, F>(out: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0, "chunk length must be positive");
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, c) in out.chunks_mut(chunk_len).enumerate() {
            f(i, c);
        }
    }
}

/// Number of worker threads the parallel helpers will use.
pub fn current_num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Configure the global worker pool. A no-op without the `parallel` feature.
///
/// Returns `false` when the global pool had already been initialised.
pub fn init_global_threads(num_threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(num_threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = num_threads;
        true
    }
}

/// Run `f` on a dedicated pool with `num_threads` workers.
pub fn with_threads<R: Send>(num_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(num_threads)
            .build()
            .expect("failed to build thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = num_threads;
        f()
    }
}
