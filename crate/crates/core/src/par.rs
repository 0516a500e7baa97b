//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the same closures sequentially. Reductions always go through
//! [`pairwise_sum`], whose split points depend only on the input length, so
//! results are bit-identical across thread counts and across both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const LEAF: usize = 64;
#[cfg(feature = "parallel")]
const PAR_SPLIT: usize = 1 << 14;
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 256;

pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Configures the global worker pool. A no-op in sequential builds.
pub fn set_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    return rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string());

    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// Deterministic tree summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    let (lo, hi) = xs.split_at(mid);

    #[cfg(feature = "parallel")]
    if xs.len() >= PAR_SPLIT {
        let (a, b) = rayon::join(|| pairwise_sum(lo), || pairwise_sum(hi));
        return a + b;
    }

    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Evaluates `f` at `0..len` and sums the results deterministically.
pub fn sum_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let terms = map_indexed(len, f);
    pairwise_sum(&terms)
}

pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..len).into_par_iter().with_min_len(MIN_CHUNK).map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return (0..len).map(f).collect();
}

/// Maps over a slice of independent work items (runs, frames, samples).
pub fn map_items<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

/// Calls `f(node, chunk)` for every `width`-sized chunk of `out`.
pub fn for_each_chunk_mut<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(width)
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each(|(i, c)| f(i, c));

    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(width).enumerate().for_each(|(i, c)| f(i, c));
}
