//! Batch execution strategy.
//!
//! Batches are always cut into fixed-size chunks and per-chunk results are
//! combined in chunk order. The parallel and sequential paths therefore
//! produce bit-identical results; only the scheduling differs.

use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Samples per work unit.
pub const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls
    /// back to sequential execution.
    #[default]
    Parallel,
}

pub fn chunk_ranges(n: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect()
}

/// Apply `f` to every chunk of `0..n`, returning results in chunk order.
pub fn map_chunks<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    map_items(chunk_ranges(n), exec, f)
}

/// Apply `f` to every item, returning results in input order.
pub fn map_items<I, T, F>(items: Vec<I>, exec: Execution, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}
