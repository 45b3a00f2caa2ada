//! Order-preserving map over a slice, on a bounded rayon pool when the
//! `parallel` feature is enabled and sequentially otherwise.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

pub struct WorkPool {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl WorkPool {
    /// `threads` bounds how many items are in flight at once.
    pub fn new(mode: ExecMode, threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            let pool = match mode {
                ExecMode::Parallel if threads > 1 => rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .thread_name(|i| format!("hdl-explain-{i}"))
                    .build()
                    .ok(),
                _ => None,
            };
            Self { pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = (mode, threads);
            Self {}
        }
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Applies `f` to every item; output order matches input order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}
