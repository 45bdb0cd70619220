//! Order-preserving map over samples, optionally fanned out with rayon.
//!
//! Both paths return results in input order, so parallel execution never
//! changes a report.

#[cfg(feature = "parallel")]
pub fn map_items<I, T, F>(items: &[I], parallel: bool, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_items<I, T, F>(items: &[I], _parallel: bool, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    items.iter().map(f).collect()
}

/// True when rayon fan-out is compiled in.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_sequential_and_parallel() {
        let items: Vec<u64> = (0..200).collect();
        let seq = map_items(&items, false, |x| x * 3);
        let par = map_items(&items, true, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 21);
    }
}
