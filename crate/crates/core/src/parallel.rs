//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Parallelism::Parallel`] runs
//! on the rayon pool. Without it every call runs sequentially. Results are
//! always returned in input order, so both modes produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether this build can actually run in parallel.
    pub fn available() -> bool {
        cfg!(feature = "parallel")
    }

    /// `f(i)` for every `i` in `0..len`, in order.
    pub fn map_range<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => (0..len).into_par_iter().map(f).collect(),
            _ => (0..len).map(f).collect(),
        }
    }

    /// Calls `f` on every element of `items` with its index.
    pub fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => items
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, item)| f(i, item)),
            _ => items.iter_mut().enumerate().for_each(|(i, item)| f(i, item)),
        }
    }

    /// Like [`for_each_mut`](Self::for_each_mut), stopping at an error. Which
    /// error is reported when several elements fail is unspecified in
    /// parallel mode.
    pub fn try_for_each_mut<T, E, F>(self, items: &mut [T], f: F) -> Result<(), E>
    where
        T: Send,
        E: Send,
        F: Fn(usize, &mut T) -> Result<(), E> + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => items
                .par_iter_mut()
                .enumerate()
                .try_for_each(|(i, item)| f(i, item)),
            _ => items.iter_mut().enumerate().try_for_each(|(i, item)| f(i, item)),
        }
    }
}
