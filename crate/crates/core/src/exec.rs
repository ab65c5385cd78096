//! Data-parallel helpers. With the `parallel` feature the work is spread
//! over rayon's pool when asked; otherwise everything runs in order on the
//! calling thread. Output order never depends on the mode.

/// Whether parallel execution is compiled in.
pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");

/// Evaluates `f(0..n)` and collects results in index order.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], parallel: bool, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), parallel, |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_stable() {
        let serial = map_indexed(1000, false, |i| i * i);
        let parallel = map_indexed(1000, true, |i| i * i);
        assert_eq!(serial, parallel);
        assert_eq!(serial[31], 961);
    }
}
