//! Deterministic parallel map over sample indices. The index range is cut
//! into fixed chunks independent of the worker count, chunks run on the
//! pool and results come back in chunk order, so merging them sequentially
//! gives the same bits for any number of workers.

use std::ops::Range;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{LabError, LabResult};

pub fn pool(workers: usize) -> LabResult<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Precondition(format!("thread pool: {e}")))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn chunks(total: u64, chunk: u64) -> Vec<Range<u64>> {
    let chunk = chunk.max(1);
    (0..total.div_ceil(chunk)).map(|c| c * chunk..((c + 1) * chunk).min(total)).collect()
}

/// Runs `f` on each chunk; the first error in chunk order wins.
pub fn map_chunks<T, F>(pool: &ThreadPool, total: u64, chunk: u64, f: F) -> LabResult<Vec<T>>
where
    T: Send,
    F: Fn(Range<u64>) -> LabResult<T> + Sync + Send,
{
    let cs = chunks(total, chunk);
    let results: Vec<LabResult<T>> = pool.install(|| cs.into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// `map_chunks` followed by an in-order fold.
pub fn fold_chunks<T, F, M>(pool: &ThreadPool, total: u64, chunk: u64, init: T, f: F, mut merge: M) -> LabResult<T>
where
    T: Send,
    F: Fn(Range<u64>) -> LabResult<T> + Sync + Send,
    M: FnMut(&mut T, &T),
{
    let parts = map_chunks(pool, total, chunk, f)?;
    let mut acc = init;
    for p in &parts {
        merge(&mut acc, p);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_range_in_order() {
        let cs = chunks(10, 4);
        assert_eq!(cs, vec![0..4, 4..8, 8..10]);
        assert!(chunks(0, 4).is_empty());
    }

    #[test]
    fn result_is_independent_of_workers() {
        let run = |w| {
            let p = pool(w).unwrap();
            fold_chunks(
                &p,
                10_000,
                333,
                0.0f64,
                |r| Ok(r.map(|i| (i as f64).sqrt().sin()).sum::<f64>()),
                |a, b| *a += *b,
            )
            .unwrap()
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
    }
}
