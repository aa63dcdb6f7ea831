//! Sequential and data-parallel execution of independent work items.
//!
//! The `parallel` cargo feature turns [`Execution::Parallel`] into rayon
//! parallel iteration; without the feature it runs sequentially. Results are
//! always returned in item order, and reductions go through fixed-size chunks
//! combined left to right, so floating-point sums are bitwise identical in
//! both modes and for any thread count.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work items per reduction chunk.
pub const REDUCE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this mode actually runs on multiple threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map_range<R, M>(self, n: usize, map: M) -> Vec<R>
    where
        R: Send,
        M: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(map).collect();
        }
        (0..n).map(map).collect()
    }

    pub fn map<T, R, M>(self, items: &[T], map: M) -> Vec<R>
    where
        T: Sync,
        R: Send,
        M: Fn(&T) -> R + Sync + Send,
    {
        self.map_range(items.len(), |i| map(&items[i]))
    }

    /// Fold `n` items into accumulators chunk by chunk, then merge the chunk
    /// accumulators in order.
    pub fn fold_chunks<A, I, F, M>(self, n: usize, init: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&mut A, usize) + Sync + Send,
        M: Fn(&mut A, A),
    {
        let n_chunks = n.div_ceil(REDUCE_CHUNK).max(1);
        let partials = self.map_range(n_chunks, |c| {
            let mut acc = init();
            let end = ((c + 1) * REDUCE_CHUNK).min(n);
            for i in c * REDUCE_CHUNK..end {
                fold(&mut acc, i);
            }
            acc
        });
        let mut iter = partials.into_iter();
        let mut total = iter.next().unwrap_or_else(&init);
        for part in iter {
            merge(&mut total, part);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for mode in [Execution::Sequential, Execution::Parallel] {
            let out = mode.map_range(100, |i| i * 2);
            assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn fold_chunks_is_mode_independent() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e-3 + 1.0 / (i as f64 + 1.0)).collect();
        let run = |mode: Execution| {
            mode.fold_chunks(xs.len(), || 0.0f64, |acc, i| *acc += xs[i], |a, b| *a += b)
        };
        assert_eq!(run(Execution::Sequential).to_bits(), run(Execution::Parallel).to_bits());
    }

    #[test]
    fn fold_chunks_empty() {
        let total = Execution::Parallel.fold_chunks(0, || 5usize, |a, i| *a += i, |a, b| *a += b);
        assert_eq!(total, 5);
    }
}
