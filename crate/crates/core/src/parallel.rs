use rayon::prelude::*;

use crate::error::Result;

/// Evaluates `f(0), ..., f(count - 1)` on a pool of `workers` threads
/// (`0` = rayon default) and returns the results in index order.
pub fn run_indexed<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool");
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}
