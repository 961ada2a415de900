//! Order-preserving map helpers that run on rayon when the `parallel`
//! feature is compiled in and the caller asks for it, and fall back to
//! plain iteration otherwise.
//!
//! Callers that need bit-reproducible results combine these with
//! deterministic per-item seeds and ordered reduction of the returned
//! vector, so outputs do not depend on thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether the parallel path is compiled in at all.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f(index, &item)` over `items`, returning results in input order.
pub fn map_indexed<T, U, F>(items: &[T], parallel: bool, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = parallel;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_indexed(&items, false, |i, &x| (i as u64) * 1000 + x * x);
        let par = map_indexed(&items, true, |i, &x| (i as u64) * 1000 + x * x);
        assert_eq!(seq, par);
    }
}
