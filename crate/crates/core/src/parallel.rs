use std::ops::Range;

use rayon::prelude::*;

/// Work items per chunk. Fixed so that reductions do not depend on the
/// number of worker threads.
pub(crate) const CHUNK: usize = 2048;

/// Maps fixed-size chunks of `0..len` in parallel and folds the partial
/// results left to right in chunk order.
pub(crate) fn chunked_reduce<T, M, F>(len: usize, map: M, init: T, fold: F) -> T
where
    T: Send,
    M: Fn(Range<usize>) -> T + Sync,
    F: FnMut(T, T) -> T,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| map(c * CHUNK..((c + 1) * CHUNK).min(len)))
        .collect();
    partials.into_iter().fold(init, fold)
}

/// Pairwise summation in a fixed tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_matches_serial_sum_for_any_pool() {
        let data: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let run = || chunked_reduce(data.len(), |r| data[r].iter().sum::<f64>(), 0.0, |a, b| a + b);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(one.to_bits(), four.to_bits());
    }

    #[test]
    fn pairwise_sum_small_and_large() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0]), 3.0);
        let v = vec![0.1; 1000];
        assert!((pairwise_sum(&v) - 100.0).abs() < 1e-12);
    }
}
