//! Trial-level parallelism with a sequential fallback.
//!
//! Monte Carlo trials, sweep cells, and oracle enumeration are embarrassingly
//! parallel over seeds or index ranges. With the `parallel` feature (default)
//! these fan out over the rayon pool; without it the same closures run
//! sequentially. Results are collected in index order either way, so the
//! execution mode never changes the output.

/// How to execute a batch of independent work items.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    /// Run items one after another on the calling thread.
    Sequential,
    /// Run items on the rayon pool. Falls back to sequential execution
    /// when the `parallel` feature is disabled.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Apply `f` to every index in `0..count`, returning results in index order.
pub fn map_indices<R, F>(mode: ExecMode, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..count).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..count).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..count).map(f).collect()
            }
        }
    }
}

/// Map over the seed range `base..base + trials` (derived per index).
pub fn map_seeds<R, F>(mode: ExecMode, base_seed: u64, trials: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    map_indices(mode, trials, |i| f(base_seed.wrapping_add(i as u64)))
}
