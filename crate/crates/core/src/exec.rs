//! Ordered data-parallel map with a sequential fallback.
//!
//! Results are always returned in input order so downstream reductions and
//! tie-breaks do not depend on thread scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Size the global worker pool. Has no effect without the `parallel`
/// feature; fails if the pool was already initialised.
pub fn configure_threads(n: usize) -> crate::Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
    }
    let _ = n;
    Ok(())
}

pub fn map_ordered<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

pub fn map_range<R, F>(n: usize, mode: ExecMode, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}
