//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers fan out over rayon;
//! without it they run on the calling thread. Reductions always use the
//! same fixed chunk partition and combine partial sums in chunk order, so
//! results are bit-identical between the two modes.

use std::ops::Range;

/// Samples per reduction chunk.
pub const CHUNK: usize = 256;

/// Execution mode for the helpers in this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon fan-out. Identical to `Sequential` when the `parallel`
    /// feature is disabled.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

fn chunks(len: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(len))
        .collect()
}

/// Sums `len` contributions into a `dim`-vector.
///
/// `fill(range, acc)` must add the contributions of items `range` into
/// `acc` in ascending order. Chunk partials are combined left to right.
pub fn chunked_sum<F>(exec: Exec, len: usize, dim: usize, fill: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync + Send,
{
    let ranges = chunks(len);
    if ranges.len() <= 1 {
        let mut acc = vec![0.0; dim];
        if let Some(r) = ranges.into_iter().next() {
            fill(r, &mut acc);
        }
        return acc;
    }
    let partials: Vec<Vec<f64>> = map(exec, &ranges, |r| {
        let mut acc = vec![0.0; dim];
        fill(r.clone(), &mut acc);
        acc
    });
    let mut out = vec![0.0; dim];
    for p in &partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// Scalar version of [`chunked_sum`].
pub fn chunked_scalar_sum<F>(exec: Exec, len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let ranges = chunks(len);
    let partials: Vec<f64> = map(exec, &ranges, |r| r.clone().map(&term).sum::<f64>());
    partials.into_iter().sum()
}

/// Order-preserving map over a slice.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if exec.is_parallel() && items.len() > 1 {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Order-preserving map over a slice (sequential build).
#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(_exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..count`.
pub fn map_indexed<U, F>(exec: Exec, count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    let idx: Vec<usize> = (0..count).collect();
    map(exec, &idx, |&i| f(i))
}

/// Runs `job` with at most `jobs` worker threads.
#[cfg(feature = "parallel")]
pub fn with_jobs<T: Send>(jobs: usize, job: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(job),
        Err(e) => {
            log::warn!("could not build a {jobs}-thread pool ({e}); using the global pool");
            job()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<T: Send>(_jobs: usize, job: impl FnOnce() -> T + Send) -> T {
    job()
}
