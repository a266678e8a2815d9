//! Bounded data-parallel map over independent items.
//!
//! With the `parallel` feature (default) items are mapped on a dedicated
//! rayon pool of `parallelism` threads. Without it, or with a bound of 1,
//! the map runs sequentially. Output order always matches input order.

#[cfg(feature = "parallel")]
pub fn map_bounded<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if parallelism <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("cannot build a {parallelism}-thread pool ({e}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_bounded<T, R, F>(items: &[T], _parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_at_any_bound() {
        let items: Vec<u32> = (0..200).collect();
        let expected: Vec<u32> = items.iter().map(|x| x * 3).collect();
        for bound in [1, 2, 8] {
            assert_eq!(map_bounded(&items, bound, |x| x * 3), expected);
        }
    }
}
