//! Index-ordered work distribution.
//!
//! Every ensemble in this crate is a list of independent work items whose
//! results are collected in index order and folded sequentially afterwards.
//! That keeps results bit-identical between the rayon path and the
//! sequential fallback, and independent of the worker count.

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled; otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
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
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]. On failure the error of the lowest
/// failing index is returned, so the outcome does not depend on scheduling.
pub fn try_map_indexed<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, n, f).into_iter().collect()
}

/// Fills `out` chunk by chunk; `f(offset, chunk)` writes the chunk starting
/// at global index `offset`. Chunk boundaries are fixed by `chunk_len`.
pub fn for_each_chunk_mut<T, F>(exec: Execution, out: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i * chunk_len, chunk));
        return;
    }
    let _ = exec;
    for (i, chunk) in out.chunks_mut(chunk_len).enumerate() {
        f(i * chunk_len, chunk);
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or inline when the
/// `parallel` feature is off. `None` uses the global pool.
pub fn with_workers<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => return pool.install(f),
            Err(_) => return f(),
        }
    }
    let _ = threads;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(Execution::Sequential, 1000, |i| i * i);
        let par = map_indexed(Execution::Parallel, 1000, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[31], 961);
    }

    #[test]
    fn lowest_failing_index_wins() {
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(Execution::Parallel, 100, |i| if i % 7 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }

    #[test]
    fn chunks_cover_everything() {
        let mut v = vec![0usize; 1001];
        for_each_chunk_mut(Execution::Parallel, &mut v, 64, |off, c| {
            for (k, x) in c.iter_mut().enumerate() {
                *x = off + k;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
