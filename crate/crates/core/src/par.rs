//! Data-parallel helpers. With the `parallel` feature (default) these run on
//! rayon's pool; without it they are plain sequential iterator loops with the
//! same results and ordering.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum slice length before work is split across threads.
pub const MIN_PARALLEL_LEN: usize = 2048;

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Order-preserving map.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if items.len() < MIN_PARALLEL_LEN {
        return items.iter().map(f).collect();
    }
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Order-preserving fallible map; returns the first error by input position.
pub fn try_map_collect<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    map_collect(items, f).into_iter().collect()
}

/// Splits `items` into chunks, folds each from `init()`, then merges the
/// partial accumulators. `merge` must be associative and `init()` its identity.
#[cfg(feature = "parallel")]
pub fn fold_merge<T, A, I, F, M>(items: &[T], init: I, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, &T) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    if items.len() < MIN_PARALLEL_LEN {
        return items.iter().fold(init(), fold);
    }
    items
        .par_chunks(MIN_PARALLEL_LEN / 2)
        .map(|chunk| chunk.iter().fold(init(), &fold))
        .reduce(&init, &merge)
}

#[cfg(not(feature = "parallel"))]
pub fn fold_merge<T, A, I, F, M>(items: &[T], init: I, fold: F, _merge: M) -> A
where
    I: Fn() -> A,
    F: Fn(A, &T) -> A,
    M: Fn(A, A) -> A,
{
    items.iter().fold(init(), fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let input: Vec<u64> = (0..10_000).collect();
        let out = map_collect(&input, |x| x * 2);
        assert!(out.iter().enumerate().all(|(i, &v)| v == 2 * i as u64));
    }

    #[test]
    fn fold_merge_matches_sequential_sum() {
        let input: Vec<u64> = (0..50_000).collect();
        let total = fold_merge(&input, || 0u64, |acc, x| acc + x, |a, b| a + b);
        assert_eq!(total, input.iter().sum::<u64>());
    }

    #[test]
    fn try_map_reports_first_error() {
        let input: Vec<i32> = (0..5000).collect();
        let err = try_map_collect(&input, |&x| if x % 1000 == 999 { Err(x) } else { Ok(x) }).unwrap_err();
        assert_eq!(err, 999);
    }
}
