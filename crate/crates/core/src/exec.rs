//! Order-preserving data-parallel maps with a sequential fallback.
//!
//! With the `parallel` feature enabled and `parallel == true`, work is spread
//! over the rayon pool; otherwise it runs inline. Results are always returned
//! in input order, so callers that reduce them sequentially stay
//! bit-deterministic regardless of scheduling.

/// Whether parallel execution is compiled in.
pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");

pub fn map<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = parallel;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

pub fn map_mut<T, R, F>(items: &mut [T], parallel: bool, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = parallel;
    items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Maps over `0..n`.
pub fn map_range<R, F>(n: usize, parallel: bool, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Runs `f` inside a pool of `jobs` threads (the global pool when `jobs == 0`).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if jobs > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map(&xs, false, |i, x| x * 3 + i as u64);
        let par = map(&xs, true, |i, x| x * 3 + i as u64);
        assert_eq!(seq, par);
        assert_eq!(map_range(5, true, |i| i * i), vec![0, 1, 4, 9, 16]);
    }

    #[test]
    fn mutable_map_touches_each_item_once() {
        let mut xs = vec![1u32; 257];
        let out = map_mut(&mut xs, true, |i, x| {
            *x += i as u32;
            *x
        });
        assert_eq!(out[256], 257);
        assert_eq!(xs, out);
    }
}
