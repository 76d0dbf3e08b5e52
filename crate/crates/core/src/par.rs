//! Data-parallel mapping over independent work items.
//!
//! Batch gradient accumulation and evaluation map a pure function over
//! events with read-only parameters, so they parallelize trivially. Results
//! are always collected in input order and reduced sequentially by the
//! caller, which keeps every reduction bit-identical no matter how many
//! threads run the map (or whether the `parallel` feature is enabled at
//! all).

/// Map `f` over `items`, preserving input order.
///
/// With the `parallel` feature this uses the global rayon pool unless
/// `jobs == Some(1)`; without it, it is a plain sequential map. `jobs`
/// values other than `Some(1)` do not resize the pool; pool size is a
/// process-level concern (see the CLI's `--jobs`).
pub fn ordered_map<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if jobs != Some(1) && items.len() > 1 {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

/// Sequential map with the same signature, kept unconditionally compiled so
/// benchmarks can compare both paths under one build.
pub fn sequential_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
