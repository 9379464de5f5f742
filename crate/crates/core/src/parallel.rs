//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these fan out over rayon's global
//! pool; without it they run on the calling thread. Output order always
//! matches input order, so reductions done by the caller are deterministic
//! regardless of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items` in parallel when the `parallel` feature is enabled.
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(items, f)
    }
}

/// Sequential reference path, always available.
pub fn map_indexed_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
