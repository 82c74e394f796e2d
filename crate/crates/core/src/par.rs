//! Data-parallel helpers. With the `parallel` feature these run on the
//! rayon pool; without it they are plain sequential iterator chains with
//! identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps in parallel, then folds the results left to right.
///
/// The fold is sequential so the floating-point result is bit-identical
/// across thread counts and with or without the `parallel` feature.
pub fn map_reduce<T, A, I, F, R>(items: &[T], identity: I, f: F, reduce: R) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A,
    F: Fn(&T) -> A + Sync + Send,
    R: Fn(A, A) -> A,
{
    map(items, f).into_iter().fold(identity(), reduce)
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
