//! Data-parallel loops with a sequential fallback.
//!
//! Everything that fans out over independent work items (diameter targets,
//! experiment runs, test corpora) goes through [`map_indices`] so the
//! `parallel` feature is the only thing deciding between rayon and a plain
//! loop. Results come back in index order either way.

#[cfg(feature = "parallel")]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}
