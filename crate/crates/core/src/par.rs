//! Data-parallel helpers with a sequential fallback.
//!
//! Reductions are always chunked the same way and the chunk partials are
//! summed in index order, so `Sequential` and `Parallel` give bitwise
//! identical results. Without the `parallel` feature both modes run on the
//! calling thread.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..n).map(f).collect()`, order preserving.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fill `out[i] = f(i)`.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
            return;
        }
        out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }

    /// Deterministic `Σ_{i<n} f(i)`.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        let partial = |c: usize| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        };
        self.map(chunks, partial).into_iter().sum()
    }
}
