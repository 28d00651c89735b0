//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it everything runs on the calling thread. Results
//! always come back in index order so reductions are deterministic.

/// Execution strategy for the data-parallel kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to `Sequential` when the crate is built without `parallel`.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `(0..count).map(f)` collected in order.
pub fn map_indices<R, F>(exec: Execution, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Maps over a slice, keeping order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs `f(i, chunk)` over consecutive `chunk`-sized pieces of `out`.
pub fn for_each_chunk_mut<T, F>(exec: Execution, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        }
        _ => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
    }
}

/// Counts indices in `0..count` satisfying `pred`.
pub fn count_indices<F>(exec: Execution, count: usize, pred: F) -> u64
where
    F: Fn(usize) -> bool + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().filter(|&i| pred(i)).count() as u64
        }
        _ => (0..count).filter(|&i| pred(i)).count() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_strategies_agree() {
        let f = |i: usize| (i * i) % 7;
        assert_eq!(map_indices(Execution::Sequential, 1000, f), map_indices(Execution::Parallel, 1000, f));
        let mut a = vec![0usize; 64];
        let mut b = vec![0usize; 64];
        for_each_chunk_mut(Execution::Sequential, &mut a, 8, |i, c| c.iter_mut().for_each(|v| *v = i));
        for_each_chunk_mut(Execution::Parallel, &mut b, 8, |i, c| c.iter_mut().for_each(|v| *v = i));
        assert_eq!(a, b);
        assert_eq!(count_indices(Execution::Parallel, 100, |i| i % 3 == 0), 34);
    }
}
