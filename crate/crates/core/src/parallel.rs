//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) batch work fans out over the rayon
//! global pool; without it every helper degrades to a plain iterator. The
//! [`Execution`] switch lets callers (and the benches) pick either path at
//! runtime when the feature is compiled in. Results are always returned in
//! index order, so aggregation never depends on scheduling.

/// Runtime choice between the rayon path and the sequential path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `true` when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}
