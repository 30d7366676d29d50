//! Data-parallel map over index ranges.
//!
//! With the `parallel` feature (default) the map runs on the rayon pool,
//! otherwise sequentially. Output order is the index order in both cases, and
//! all reductions downstream consume the collected vector in that order, so
//! results never depend on scheduling.

use std::ops::Range;

#[cfg(feature = "parallel")]
pub fn map_range<T, F>(range: Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(range: Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    range.map(f).collect()
}

/// Number of worker threads the map will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
