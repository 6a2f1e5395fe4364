//! Execution policy for embarrassingly parallel loops (Monte Carlo paths,
//! probe pairs, sample batches).
//!
//! Results are always collected in index order, so reductions performed by
//! the caller are independent of the thread count.

/// How independent work items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon work stealing. Falls back to [`Exec::Sequential`] when the crate is
    /// built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    /// Whether work actually runs on a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Evaluates `f(0), …, f(n-1)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fallible [`Exec::map`]; the first error in index order is returned.
    pub fn try_map<T, F>(self, n: usize, f: F) -> crate::Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> crate::Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

/// Configures the global worker pool from `DELAY_SPDE_THREADS`, if set.
///
/// Returns the number of threads requested, or `None` when the variable is
/// absent, unparsable, or the pool was already initialised.
pub fn init_threads_from_env() -> Option<usize> {
    let n: usize = std::env::var("DELAY_SPDE_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()?;
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok()?;
    }
    Some(n)
}
