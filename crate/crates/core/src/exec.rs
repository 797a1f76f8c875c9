//! Execution strategy for the data-parallel loops.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool.
//! Without it every strategy runs sequentially. Callers always receive
//! results in index order, so outputs do not depend on the strategy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Global rayon pool.
    #[default]
    Parallel,
    Workers(usize),
}

impl Exec {
    /// `Some(k)` pins a pool of `k` threads; `Some(1)` is sequential.
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None | Some(0) => Exec::Parallel,
            Some(1) => Exec::Sequential,
            Some(k) => Exec::Workers(k),
        }
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Workers(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
                Err(_) => (0..n).into_par_iter().map(f).collect(),
            },
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel | Exec::Workers(_) => (0..n).map(f).collect(),
        }
    }
}
