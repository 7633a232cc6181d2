//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop in the crate is an index-wise map whose iterations are
//! independent, so results do not depend on the worker count.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Minimum number of elements per parallel task. Keeps scheduling overhead
/// small next to the cost of a single grid node update.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 1024;

/// `out[i] = f(i)` for every index of `out`.
pub fn fill_indexed<T, F>(exec: Exec, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && out.len() > MIN_CHUNK {
        use rayon::prelude::*;
        out.par_iter_mut()
            .with_min_len(MIN_CHUNK)
            .enumerate()
            .for_each(|(i, o)| *o = f(i));
        return;
    }
    let _ = exec;
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Applies `f` to every chunk of `out`, passing the chunk's starting index.
pub fn for_each_chunk<T, F>(exec: Exec, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && out.len() > chunk {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(k, c)| f(k * chunk, c));
        return;
    }
    let _ = exec;
    for (k, c) in out.chunks_mut(chunk).enumerate() {
        f(k * chunk, c);
    }
}

/// Like [`for_each_chunk`], collecting one result per chunk in chunk order.
pub fn map_chunks<T, R, F>(exec: Exec, out: &mut [T], chunk: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut [T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && out.len() > chunk {
        use rayon::prelude::*;
        return out
            .par_chunks_mut(chunk)
            .enumerate()
            .map(|(k, c)| f(k * chunk, c))
            .collect();
    }
    let _ = exec;
    out.chunks_mut(chunk)
        .enumerate()
        .map(|(k, c)| f(k * chunk, c))
        .collect()
}

/// Maps independent jobs, returning results in job order.
pub fn map_jobs<I, T, F>(exec: Exec, jobs: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && jobs.len() > 1 {
        use rayon::prelude::*;
        return jobs.par_iter().map(&f).collect();
    }
    let _ = exec;
    jobs.iter().map(f).collect()
}

/// Runs `f` inside a pool with `workers` threads (0 = rayon default).
pub fn with_workers<R: Send, F: FnOnce() -> R + Send>(workers: usize, f: F) -> R {
    #[cfg(feature = "parallel")]
    if workers > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let mut a = vec![0.0f64; 10_000];
        let mut b = vec![0.0f64; 10_000];
        let f = |i: usize| ((i as f64) * 0.37).sin();
        fill_indexed(Exec::Sequential, &mut a, f);
        fill_indexed(Exec::Parallel, &mut b, f);
        assert_eq!(a, b);

        let jobs: Vec<u64> = (0..50).collect();
        let s = map_jobs(Exec::Sequential, &jobs, |j| j * j);
        let p = map_jobs(Exec::Parallel, &jobs, |j| j * j);
        assert_eq!(s, p);
    }

    #[test]
    fn chunks_cover_everything_once() {
        let mut v = vec![0u32; 5000];
        for_each_chunk(Exec::Parallel, &mut v, 333, |start, c| {
            for (k, x) in c.iter_mut().enumerate() {
                *x += (start + k) as u32;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| x == i as u32));
    }
}
