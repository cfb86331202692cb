//! Data-parallel map helpers with a sequential fallback.
//!
//! The sampling passes, multi-start optimizer, and ladder verification are
//! embarrassingly parallel over independent seeds. With the `parallel`
//! feature (default) they fan out over rayon; without it the same code runs
//! sequentially. Reductions always happen sequentially in index order, so
//! results are identical regardless of worker count.

/// Map `f` over `0..count` into a `Vec` in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).map(f).collect()
}

/// Always-sequential variant, kept unconditionally as the benchmark baseline.
pub fn map_indexed_seq<T>(count: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..count).map(f).collect()
}

/// Deterministic argmin of `f` over `0..count`: ties (and merge order) are
/// resolved by index. Non-finite values lose against finite ones.
pub fn min_by_index(count: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> Option<(usize, f64)> {
    let values = map_indexed(count, f);
    reduce_min(&values)
}

pub(crate) fn reduce_min(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, bv)) if bv <= v => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Cap the global worker pool. Returns false when the pool was already
/// initialized (rayon allows one global build) or the build fails; the
/// sequential build always succeeds with one logical worker.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> bool {
    true
}
